"""Truncated orthonormal polynomial basis on the parameter space.

The basis is a tensor product of univariate orthonormal polynomials for
independent U(0, 1) inputs.  Recurrence coefficients are generated by the
Stieltjes procedure from the measure itself (rather than hard-coding the
shifted Legendre family), so other moment-determinate marginals can be added
later.  Gauss nodes and weights come from the Jacobi matrix of the
recurrence (Golub-Welsch).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import eigh_tridiagonal

MultiIndex = tuple[int, ...]


def _stieltjes_uniform01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Monic three-term recurrence coefficients (a_k, b_k), k = 0..n-1, for U(0, 1).

    Uses a discretized inner product on a Gauss-Legendre rule large enough to
    be exact for every polynomial moment involved.
    """
    n_disc = 2 * n + 8
    xg, wg = np.polynomial.legendre.leggauss(n_disc)
    x = 0.5 * (xg + 1.0)
    w = 0.5 * wg

    a = np.zeros(n)
    b = np.zeros(n)  # b[0] = total mass, b[k] = <p_k,p_k>/<p_{k-1},p_{k-1}>
    p_prev = np.zeros_like(x)
    p_cur = np.ones_like(x)
    norm_prev = 1.0
    b[0] = np.sum(w)
    for k in range(n):
        norm_cur = np.sum(w * p_cur * p_cur)
        a[k] = np.sum(w * x * p_cur * p_cur) / norm_cur
        if k > 0:
            b[k] = norm_cur / norm_prev
        p_next = (x - a[k]) * p_cur - (b[k] if k > 0 else 0.0) * p_prev
        p_prev, p_cur = p_cur, p_next
        norm_prev = norm_cur
    return a, b


def _gauss_rule(a: np.ndarray, b: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights from the recurrence's Jacobi matrix."""
    diag = a[:n_nodes]
    off = np.sqrt(b[1:n_nodes])
    nodes, vecs = eigh_tridiagonal(diag, off)
    weights = b[0] * vecs[0, :] ** 2
    return nodes, weights


def total_degree_indices(m: int, p_max: int) -> list[MultiIndex]:
    """All multi-indices with total degree <= p_max, graded-lexicographic order."""
    out = [q for q in product(range(p_max + 1), repeat=m) if sum(q) <= p_max]
    out.sort(key=lambda q: (sum(q), tuple(-c for c in q)))
    return out


def tensor_indices(m: int, p_max: int) -> list[MultiIndex]:
    """All multi-indices with per-dimension degree <= p_max, graded-lexicographic order."""
    out = list(product(range(p_max + 1), repeat=m))
    out.sort(key=lambda q: (sum(q), tuple(-c for c in q)))
    return out


@dataclass(frozen=True)
class ChaosBasis:
    """Orthonormal polynomial basis {psi_q} truncated to P + 1 functions.

    ``indices`` lists the multi-indices in a fixed graded-lexicographic order
    with index 0 the constant function.  ``rec_a``/``rec_b`` hold the monic
    recurrence of the univariate family shared by all dimensions, and
    ``quad_nodes``/``quad_weights`` the per-dimension Gauss rule.
    """

    m: int
    truncation: str
    p_max: int
    indices: tuple[MultiIndex, ...]
    rec_a: np.ndarray
    rec_b: np.ndarray
    quad_nodes: np.ndarray
    quad_weights: np.ndarray

    @property
    def size(self) -> int:
        """Number of basis functions, P + 1."""
        return len(self.indices)

    def eval_univariate(self, max_degree: int, x: np.ndarray) -> np.ndarray:
        """Table psi_k(x) for k = 0..max_degree, shape (len(x), max_degree + 1).

        Orthonormal three-term recurrence:
        sqrt(b_{k+1}) psi_{k+1} = (x - a_k) psi_k - sqrt(b_k) psi_{k-1}.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        table = np.empty((x.size, max_degree + 1))
        table[:, 0] = 1.0 / np.sqrt(self.rec_b[0])
        if max_degree >= 1:
            table[:, 1] = (x - self.rec_a[0]) * table[:, 0] / np.sqrt(self.rec_b[1])
        for k in range(1, max_degree):
            table[:, k + 1] = (
                (x - self.rec_a[k]) * table[:, k]
                - np.sqrt(self.rec_b[k]) * table[:, k - 1]
            ) / np.sqrt(self.rec_b[k + 1])
        return table

    def eval_all(self, z: np.ndarray) -> np.ndarray:
        """Evaluate every basis function at points z of shape (n, m) -> (n, P+1)."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[None, :]
        if z.shape[1] != self.m:
            raise ValueError(f"points have {z.shape[1]} coordinates, basis has m={self.m}")
        tables = [self.eval_univariate(self.p_max, z[:, j]) for j in range(self.m)]
        out = np.ones((z.shape[0], self.size))
        for col, q in enumerate(self.indices):
            for j, deg in enumerate(q):
                if deg:
                    out[:, col] *= tables[j][:, deg]
        return out

    def quadrature_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Tensor Gauss grid on the parameter space: points (n^m, m), weights (n^m,)."""
        grids = np.meshgrid(*([self.quad_nodes] * self.m), indexing="ij")
        points = np.column_stack([g.ravel() for g in grids])
        w = self.quad_weights
        weights = w.copy()
        for _ in range(self.m - 1):
            weights = np.multiply.outer(weights, w).ravel()
        return points, weights


def build_basis(m: int, truncation: str = "total", p_max: int = 10,
                quad_nodes: int | None = None) -> ChaosBasis:
    """Construct the truncated basis with its quadrature rule.

    ``truncation`` is "total" (total degree <= p_max) or "tensor"
    (per-dimension degree <= p_max).  The per-dimension Gauss rule defaults
    to p_max + 4 nodes, exact for integrands of degree 2 p_max + 7, which
    covers products g * psi_p * psi_q for coefficient functions g of degree
    up to 3.  Fewer than p_max + 2 nodes are rejected.
    """
    if m < 1:
        raise ValueError(f"need m >= 1 parameters, got {m}")
    if p_max < 0:
        raise ValueError(f"need p_max >= 0, got {p_max}")
    if truncation not in ("total", "tensor"):
        raise ValueError(f"unknown truncation rule {truncation!r}")
    if quad_nodes is None:
        quad_nodes = p_max + 4
    if quad_nodes < p_max + 2:
        raise ValueError(
            f"quad_nodes={quad_nodes} cannot integrate degree-(2*{p_max}+2) "
            f"products exactly; need at least p_max + 2 = {p_max + 2}"
        )
    rec_a, rec_b = _stieltjes_uniform01(max(p_max + 1, quad_nodes) + 1)
    nodes, weights = _gauss_rule(rec_a, rec_b, quad_nodes)
    if truncation == "total":
        indices = total_degree_indices(m, p_max)
    else:
        indices = tensor_indices(m, p_max)
    return ChaosBasis(
        m=m, truncation=truncation, p_max=p_max, indices=tuple(indices),
        rec_a=rec_a, rec_b=rec_b, quad_nodes=nodes, quad_weights=weights,
    )


def eval_basis(basis: ChaosBasis, q: int | MultiIndex, z: np.ndarray) -> float:
    """Value of basis function ``q`` (position or multi-index) at one point z."""
    if isinstance(q, tuple):
        try:
            col = basis.indices.index(q)
        except ValueError:
            raise IndexError(f"multi-index {q} not in basis") from None
    else:
        if not 0 <= q < basis.size:
            raise IndexError(f"basis index {q} out of range 0..{basis.size - 1}")
        col = q
    return float(basis.eval_all(np.asarray(z, dtype=float))[0, col])


def expectation_matrix(basis: ChaosBasis, g) -> np.ndarray:
    """Matrix E[g(xi) psi_p(xi) psi_q(xi)] over the basis, by tensor Gauss quadrature.

    ``g`` maps points of shape (n, m) to values (n,); pass ``None`` for
    g == 1.  The result is exactly symmetrized, and entries below 1e-14 of
    the largest magnitude are flushed to zero: they are quadrature
    cancellation noise on structurally vanishing moments, and flushing them
    makes the sparsity of banded coefficient couplings exact.
    """
    points, weights = basis.quadrature_grid()
    psi = basis.eval_all(points)
    if g is None:
        gw = weights
    else:
        gw = weights * np.asarray(g(points), dtype=float)
    mat = psi.T @ (gw[:, None] * psi)
    mat = 0.5 * (mat + mat.T)
    scale = np.max(np.abs(mat))
    if scale > 0.0:
        mat[np.abs(mat) < 1e-14 * scale] = 0.0
    return mat


def index_set(basis: ChaosBasis, I) -> list[int]:
    """Positions q >= 1 whose multi-index has zero degree outside I.

    ``I`` contains 1-based parameter numbers (S_1 freezes parameter 1).
    These are the basis functions that depend on xi_I alone, i.e. the terms
    entering the numerator of the Sobol' index S_I.
    """
    I = frozenset(I)
    if not I:
        raise ValueError("empty index set I (the Sobol' index of {} is 0 by convention)")
    if not I <= set(range(1, basis.m + 1)):
        raise ValueError(f"index set {sorted(I)} not a subset of 1..{basis.m}")
    out = []
    for pos, q in enumerate(basis.indices):
        if pos == 0:
            continue
        if all(deg == 0 for j, deg in enumerate(q) if (j + 1) not in I):
            out.append(pos)
    return out
