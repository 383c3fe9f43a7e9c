import math

import numpy as np
import pytest

from sdesobol.chaos import (
    build_basis,
    eval_basis,
    expectation_matrix,
    index_set,
    tensor_indices,
    total_degree_indices,
)
from sdesobol.model import OuModel


class TestIndexOrdering:
    def test_total_degree_m2_p1(self):
        assert total_degree_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]

    def test_total_degree_m2_p2(self):
        assert total_degree_indices(2, 2) == [
            (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
        ]

    def test_counts(self):
        assert len(total_degree_indices(2, 10)) == math.comb(12, 2)
        assert len(tensor_indices(2, 10)) == 121
        assert len(total_degree_indices(3, 4)) == math.comb(7, 3)

    def test_index_zero_is_constant(self):
        for trunc in ("total", "tensor"):
            basis = build_basis(2, trunc, 3)
            assert basis.indices[0] == (0, 0)


class TestBuildBasis:
    def test_rejects_small_quadrature(self):
        with pytest.raises(ValueError):
            build_basis(2, "total", 6, quad_nodes=7)

    def test_rejects_unknown_truncation(self):
        with pytest.raises(ValueError):
            build_basis(2, "sparse", 3)

    def test_quadrature_integrates_mass(self):
        basis = build_basis(2, "total", 4)
        _, w = basis.quadrature_grid()
        assert w.sum() == pytest.approx(1.0, abs=1e-14)


class TestEvalBasis:
    def test_constant_function(self):
        basis = build_basis(2, "total", 3)
        assert eval_basis(basis, 0, np.array([0.77, 0.13])) == pytest.approx(1.0, abs=1e-14)

    def test_degree_one(self):
        # orthonormal degree-1 polynomial for U(0,1) is sqrt(3)(2x - 1)
        basis = build_basis(2, "total", 3)
        val = eval_basis(basis, (1, 0), np.array([1.0, 0.3]))
        assert val == pytest.approx(math.sqrt(3.0), abs=1e-12)

    def test_degree_two(self):
        # sqrt(5)(6x^2 - 6x + 1) at x = 0.5 is -sqrt(5)/2
        basis = build_basis(2, "total", 3)
        val = eval_basis(basis, (0, 2), np.array([0.9, 0.5]))
        assert val == pytest.approx(-math.sqrt(5.0) / 2.0, abs=1e-12)

    def test_out_of_range(self):
        basis = build_basis(2, "total", 2)
        with pytest.raises(IndexError):
            eval_basis(basis, 6, np.array([0.5, 0.5]))
        with pytest.raises(IndexError):
            eval_basis(basis, (3, 3), np.array([0.5, 0.5]))

    def test_matches_gram_schmidt_oracle(self):
        # independent construction: Gram-Schmidt on monomials under U(0,1)
        xq, wq = np.polynomial.legendre.leggauss(40)
        xq = 0.5 * (xq + 1.0)
        wq = 0.5 * wq
        deg = 6
        ons = []
        for j in range(deg + 1):
            v = xq ** j
            for o in ons:
                v = v - np.sum(wq * v * o) * o
            ons.append(v / math.sqrt(np.sum(wq * v * v)))
        basis = build_basis(1, "total", deg)
        table = basis.eval_univariate(deg, xq)
        for j in range(deg + 1):
            # sign convention: positive leading coefficient in both routes
            assert np.max(np.abs(table[:, j] - ons[j])) < 1e-10


class TestOrthonormality:
    @pytest.mark.parametrize("p_max", [4, 8, 12])
    def test_gram_identity(self, p_max):
        basis = build_basis(2, "total", p_max)
        gram = expectation_matrix(basis, None)
        assert np.max(np.abs(gram - np.eye(basis.size))) < 1e-12

    def test_gram_identity_tensor(self):
        basis = build_basis(2, "tensor", 6)
        gram = expectation_matrix(basis, None)
        assert np.max(np.abs(gram - np.eye(basis.size))) < 1e-12


class TestExpectationMatrix:
    def test_identity_for_unit_coefficient(self):
        basis = build_basis(2, "total", 5)
        mat = expectation_matrix(basis, lambda z: np.ones(z.shape[0]))
        assert np.max(np.abs(mat - np.eye(basis.size))) < 1e-13

    def test_symmetry_exact(self):
        basis = build_basis(2, "total", 6)
        model = OuModel(mu1=1.0, sigma1=0.2, mu2=9.0, sigma2=0.2)
        mat = expectation_matrix(basis, lambda z: model.sigma(z) ** 2 / 2.0)
        assert np.array_equal(mat, mat.T)

    def test_ou_diffusion_mean_entry(self):
        # E[sigma^2/2] = (mu2^2 + sigma2^2) / 2 = 40.52 for Table 1 parameters
        basis = build_basis(2, "total", 6)
        model = OuModel(mu1=1.0, sigma1=0.2, mu2=9.0, sigma2=0.2)
        mat = expectation_matrix(basis, lambda z: model.sigma(z) ** 2 / 2.0)
        assert mat[0, 0] == pytest.approx(40.52, abs=1e-12)

    def test_ou_drift_rate_affine_structure(self):
        # alpha = mu1 psi_0 + sigma1 psi_(1,0): the (0, (1,0)) entry is sigma1
        basis = build_basis(2, "total", 6)
        model = OuModel(mu1=1.0, sigma1=0.2, mu2=9.0, sigma2=0.2)
        beta = expectation_matrix(basis, model.alpha)
        col = basis.indices.index((1, 0))
        assert beta[0, col] == pytest.approx(0.2, abs=1e-13)
        assert beta[0, 0] == pytest.approx(1.0, abs=1e-13)

    def test_ou_drift_rate_sparsity(self):
        # alpha affine in xi_1: entries vanish unless indices agree in dim 2
        # and differ by at most 1 in dim 1
        basis = build_basis(2, "total", 6)
        model = OuModel(mu1=1.0, sigma1=0.2, mu2=9.0, sigma2=0.2)
        beta = expectation_matrix(basis, model.alpha)
        for i, qi in enumerate(basis.indices):
            for j, qj in enumerate(basis.indices):
                coupled = qi[1] == qj[1] and abs(qi[0] - qj[0]) <= 1
                if not coupled:
                    assert abs(beta[i, j]) < 1e-12, (qi, qj)


class TestIndexSet:
    def test_single_dimension(self):
        basis = build_basis(2, "total", 2)
        picked = [basis.indices[k] for k in index_set(basis, {1})]
        assert picked == [(1, 0), (2, 0)]

    def test_full_set(self):
        basis = build_basis(2, "total", 2)
        assert index_set(basis, {1, 2}) == [1, 2, 3, 4, 5]

    def test_tensor_degree_one(self):
        basis = build_basis(2, "tensor", 1)
        picked = [basis.indices[k] for k in index_set(basis, {2})]
        assert picked == [(0, 1)]

    def test_empty_rejected(self):
        basis = build_basis(2, "total", 2)
        with pytest.raises(ValueError):
            index_set(basis, set())

    def test_out_of_range_rejected(self):
        basis = build_basis(2, "total", 2)
        with pytest.raises(ValueError):
            index_set(basis, {3})

    def test_partition_of_nonconstant_indices(self):
        # K_{1}, K_{2} and the mixed remainder partition {1, ..., P}
        basis = build_basis(2, "total", 7)
        k1 = set(index_set(basis, {1}))
        k2 = set(index_set(basis, {2}))
        mixed = {
            pos for pos, q in enumerate(basis.indices)
            if pos >= 1 and q[0] > 0 and q[1] > 0
        }
        assert k1 | k2 | mixed == set(range(1, basis.size))
        assert not (k1 & k2) and not (k1 & mixed) and not (k2 & mixed)
