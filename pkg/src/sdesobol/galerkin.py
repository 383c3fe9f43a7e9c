"""Chaos-FEM block systems: assembly, elliptic solve, and theta-scheme stepping.

The Galerkin projection of the divergence-form problem onto (hat functions)
x (chaos polynomials) yields block systems whose operator is a sum of
Kronecker products (expectation matrix) x (tridiagonal FEM matrix).  The
Kronecker structure is never materialized for large problems; the operator
acts on coefficient arrays of shape (n_space, n_chaos) as sum_k T_k V G_k^T.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, gmres

from .chaos import ChaosBasis, expectation_matrix
from .fem1d import FemGrid, TriDiag, convection, load_constant, mass, stiffness
from .model import SdeModel, divergence_coeffs, warn_if_not_coercive

DENSE_LIMIT = 4000


class SolverConvergenceError(RuntimeError):
    """Iterative solve failed to reach the requested residual."""

    def __init__(self, message: str, residual_history=None, step: int | None = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int | None = None
    method: str = "krylov"

    def __post_init__(self):
        if self.method not in ("krylov", "dense"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.tol <= 0:
            raise ValueError("solver tolerance must be positive")


@dataclass(frozen=True)
class BlockOperator:
    """Sum of Kronecker terms sum_k G_k (x) T_k acting block-wise.

    A coefficient array V of shape (n_space, n_chaos) holds one spatial
    column per chaos function; the action is sum_k T_k @ V @ G_k^T.  The
    chaos-coupling matrices are usually banded in the polynomial degree, so
    sparse copies are kept for the products along the chaos axis.
    """

    terms: tuple[tuple[np.ndarray, TriDiag], ...]
    n_space: int
    n_chaos: int

    def __post_init__(self):
        from scipy.sparse import csr_matrix
        sparse_terms = []
        for g_mat, _ in self.terms:
            nnz = np.count_nonzero(np.abs(g_mat) > 1e-300)
            if nnz < 0.25 * g_mat.size and self.n_chaos > 8:
                sparse_terms.append(csr_matrix(g_mat))
            else:
                sparse_terms.append(None)
        object.__setattr__(self, "_g_sparse", tuple(sparse_terms))

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        for (g_mat, t_mat), g_sp in zip(self.terms, self._g_sparse):
            tv = t_mat.matmat(v)
            if g_sp is not None:
                out += (g_sp @ tv.T).T
            else:
                out += tv @ g_mat.T
        return out

    def scaled(self, c: float) -> "BlockOperator":
        return BlockOperator(
            terms=tuple((c * g, t) for g, t in self.terms),
            n_space=self.n_space, n_chaos=self.n_chaos,
        )

    def plus(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(
            terms=self.terms + other.terms,
            n_space=self.n_space, n_chaos=self.n_chaos,
        )

    def mean_block(self) -> TriDiag:
        """Tridiagonal sum_k G_k[0,0] T_k, the constant-chaos-mode operator."""
        out = None
        for g_mat, t_mat in self.terms:
            part = t_mat.scaled(g_mat[0, 0])
            out = part if out is None else out + part
        return out

    def to_dense(self) -> np.ndarray:
        """Dense Kronecker matrix on block-major vectors (guarded by size)."""
        size = self.n_space * self.n_chaos
        if size > DENSE_LIMIT:
            raise ValueError(
                f"refusing to densify a {size}x{size} block operator "
                f"(limit {DENSE_LIMIT})"
            )
        out = np.zeros((size, size))
        for g_mat, t_mat in self.terms:
            out += np.kron(g_mat, t_mat.to_dense())
        return out

    def as_linear_operator(self) -> LinearOperator:
        ns, nc = self.n_space, self.n_chaos

        def matvec(x):
            v = x.reshape((ns, nc), order="F")
            return self.apply(v).ravel(order="F")

        return LinearOperator((ns * nc, ns * nc), matvec=matvec, dtype=float)


@dataclass(frozen=True)
class ChaosFemField:
    """Coefficient array of a chaos-FEM function sum_{j,q} U_j^q phi_j psi_q."""

    grid: FemGrid
    basis: ChaosBasis
    coeffs: np.ndarray  # (n_space, n_chaos)
    label: str = "field"
    time: float | None = None

    def __post_init__(self):
        expected = (self.grid.n_interior, self.basis.size)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient array must have shape {expected}, got {self.coeffs.shape}")


def chaos_coeffs_at(fld: ChaosFemField, x: float) -> np.ndarray:
    """Spatial evaluation of every chaos coefficient: (U_0(x), ..., U_P(x))."""
    grid = fld.grid
    if not grid.x_lo <= x <= grid.x_hi:
        raise ValueError(f"point {x} outside domain [{grid.x_lo}, {grid.x_hi}]")
    padded = np.vstack([
        np.zeros(fld.basis.size), fld.coeffs, np.zeros(fld.basis.size),
    ])
    t = (x - grid.x_lo) / grid.h
    j = min(int(math.floor(t)), grid.n_cells - 1)
    w = t - j
    return (1.0 - w) * padded[j] + w * padded[j + 1]


def evaluate_field(fld: ChaosFemField, x: float, z: np.ndarray) -> float:
    """Value of the field at spatial point x and parameter realization z."""
    coeffs = chaos_coeffs_at(fld, x)
    psi = fld.basis.eval_all(np.asarray(z, dtype=float))[0]
    return float(coeffs @ psi)


def field_mean_std(fld: ChaosFemField) -> tuple[np.ndarray, np.ndarray]:
    """Nodal mean and standard deviation over the parameter distribution."""
    mean = fld.coeffs[:, 0].copy()
    std = np.sqrt(np.sum(fld.coeffs[:, 1:] ** 2, axis=1))
    return mean, std


def export_coeffs_csv(fld: ChaosFemField, path) -> None:
    """Flat (j, q, U_j^q) table with a metadata header describing grid and basis."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# label={fld.label}\n")
        fh.write(f"# grid: n_cells={fld.grid.n_cells} domain=[{fld.grid.x_lo},{fld.grid.x_hi}]\n")
        fh.write(
            f"# basis: m={fld.basis.m} truncation={fld.basis.truncation} "
            f"p_max={fld.basis.p_max} ordering=graded-lexicographic\n"
        )
        if fld.time is not None:
            fh.write(f"# time={fld.time!r}\n")
        fh.write("j,q,coeff\n")
        n_space, n_chaos = fld.coeffs.shape
        for q in range(n_chaos):
            for j in range(n_space):
                fh.write(f"{j + 1},{q},{float(fld.coeffs[j, q])!r}\n")


# ---------------------------------------------------------------------------
# elliptic problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticSystem:
    operator: BlockOperator
    rhs: np.ndarray
    grid: FemGrid
    basis: ChaosBasis
    coercivity: object | None = None


@dataclass(frozen=True)
class SolveInfo:
    method: str
    iterations: int
    residual: float
    residual_history: tuple[float, ...] = ()


def _structure_matrices(model: SdeModel, basis: ChaosBasis, grid: FemGrid):
    """Expectation matrices of the divergence coefficients.

    Requires an x-constant diffusion and a drift linear in x, which is the
    family the block assembly sum_k G_k (x) T_k represents exactly.
    """
    coeffs = divergence_coeffs(model)
    if not coeffs.a_x_constant or coeffs.drift_rate is None:
        raise ValueError(
            "block assembly needs an x-constant diffusion and b_tilde = rate(z) * x; "
            "this model does not provide that structure"
        )
    x_probe = 0.5 * (grid.x_lo + grid.x_hi)
    sigma_mat = expectation_matrix(basis, lambda z: coeffs.a_tilde(x_probe, z))
    beta_mat = expectation_matrix(basis, coeffs.drift_rate)
    return sigma_mat, beta_mat


def assemble_elliptic(model: SdeModel, basis: ChaosBasis, grid: FemGrid) -> EllipticSystem:
    """Block system for the mean-exit-time metamodel.

    Operator is Sigma (x) A + beta (x) B; the right-hand side carries the
    constant source in chaos block 0 only.  A failed coercivity check emits
    a warning (the solve still proceeds) and is recorded in the system.
    """
    sigma_mat, beta_mat = _structure_matrices(model, basis, grid)
    op = BlockOperator(
        terms=((sigma_mat, stiffness(grid)), (beta_mat, convection(grid))),
        n_space=grid.n_interior,
        n_chaos=basis.size,
    )
    rhs = np.zeros((grid.n_interior, basis.size))
    rhs[:, 0] = load_constant(grid, 1.0)
    coercivity = warn_if_not_coercive(model)
    return EllipticSystem(operator=op, rhs=rhs, grid=grid, basis=basis, coercivity=coercivity)


def _mean_block_preconditioner(op: BlockOperator) -> LinearOperator:
    """Block-diagonal preconditioner: tridiagonal solves with the mean blocks."""
    t_mean = op.mean_block()
    ab = t_mean.to_banded()
    ns, nc = op.n_space, op.n_chaos

    def solve(x):
        v = x.reshape((ns, nc), order="F")
        return solve_banded((1, 1), ab, v).ravel(order="F")

    return LinearOperator((ns * nc, ns * nc), matvec=solve, dtype=float)


def _krylov_solve(op: BlockOperator, rhs: np.ndarray, cfg: SolverConfig,
                  x0: np.ndarray | None = None):
    """GMRES with the mean-block preconditioner and a true-residual check."""
    ns, nc = op.n_space, op.n_chaos
    size = ns * nc
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), SolveInfo("krylov", 0, 0.0)
    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * size
    lin_op = op.as_linear_operator()
    precond = _mean_block_preconditioner(op)
    b = rhs.ravel(order="F")
    x = x0.ravel(order="F").copy() if x0 is not None else precond.matvec(b)

    history: list[float] = []
    total_inner = 0
    true_res = np.inf
    rtol = cfg.tol
    while total_inner < max_iter:
        remaining = max_iter - total_inner
        restart = min(64, size, remaining)
        counter = []

        def cb(pr_norm):
            counter.append(pr_norm)

        x, _ = gmres(
            lin_op, b, x0=x, rtol=rtol, atol=0.0,
            restart=restart, maxiter=max(1, min(40, remaining // restart)),
            M=precond, callback=cb, callback_type="pr_norm",
        )
        total_inner += len(counter)
        v = x.reshape((ns, nc), order="F")
        true_res = float(np.linalg.norm(op.apply(v) - rhs)) / rhs_norm
        history.extend(counter)
        history.append(true_res)
        if true_res <= cfg.tol:
            return v.copy(), SolveInfo("krylov", total_inner, true_res, tuple(history))
        # preconditioned residual met rtol but the true residual did not:
        # tighten and continue from the current iterate
        rtol = max(rtol * 0.1, 1e-15)
        if not counter:
            break
    raise SolverConvergenceError(
        f"GMRES stalled at relative residual {true_res:.3e} "
        f"(target {cfg.tol:.1e}) after {total_inner} iterations",
        residual_history=history,
    )


def _dense_solve(op: BlockOperator, rhs: np.ndarray):
    mat = op.to_dense()
    b = rhs.ravel(order="F")
    x = np.linalg.solve(mat, b)
    rhs_norm = float(np.linalg.norm(b))
    res = float(np.linalg.norm(mat @ x - b)) / rhs_norm if rhs_norm > 0 else 0.0
    return x.reshape(rhs.shape, order="F"), SolveInfo("dense", 1, res)


def solve_elliptic(system: EllipticSystem, solver: SolverConfig = SolverConfig()):
    """Solve the elliptic block system; returns (field, solve info)."""
    if solver.method == "dense":
        coeffs, info = _dense_solve(system.operator, system.rhs)
    else:
        coeffs, info = _krylov_solve(system.operator, system.rhs, solver)
    fld = ChaosFemField(grid=system.grid, basis=system.basis, coeffs=coeffs,
                        label="mean_exit_time")
    return fld, info


# ---------------------------------------------------------------------------
# parabolic problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaSchemeConfig:
    horizon: float
    n_steps: int
    theta: float = 0.5

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1:
            raise ValueError("need horizon > 0 and n_steps >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps


@dataclass(frozen=True)
class ParabolicSystem:
    a_op: BlockOperator
    m_op: BlockOperator
    f_block: np.ndarray
    grid: FemGrid
    basis: ChaosBasis


def assemble_parabolic(model: SdeModel, basis: ChaosBasis, grid: FemGrid,
                       f_nodal: np.ndarray | None = None) -> ParabolicSystem:
    """Block matrices for the time-dependent problem plus the initial block vector.

    ``f_nodal`` holds the nodal values of the deterministic initial data on
    the interior nodes (default: all ones, the survival functional).  The
    mass operator is identity-in-chaos (x) M1 by orthonormality.
    """
    sigma_mat, beta_mat = _structure_matrices(model, basis, grid)
    a_op = BlockOperator(
        terms=((sigma_mat, stiffness(grid)), (beta_mat, convection(grid))),
        n_space=grid.n_interior, n_chaos=basis.size,
    )
    m_op = BlockOperator(
        terms=((np.eye(basis.size), mass(grid)),),
        n_space=grid.n_interior, n_chaos=basis.size,
    )
    if f_nodal is None:
        f_nodal = np.ones(grid.n_interior)
    f_nodal = np.asarray(f_nodal, dtype=float)
    if f_nodal.shape != (grid.n_interior,):
        raise ValueError(f"f_nodal must have shape ({grid.n_interior},)")
    f_block = np.zeros((grid.n_interior, basis.size))
    f_block[:, 0] = f_nodal
    return ParabolicSystem(a_op=a_op, m_op=m_op, f_block=f_block, grid=grid, basis=basis)


def _stability_warning(a_op: BlockOperator, m_op: BlockOperator, cfg: ThetaSchemeConfig,
                       grid: FemGrid) -> None:
    if cfg.theta >= 0.5:
        return
    # explicit-part stability heuristic: lambda_max(M1^-1 A) ~ 12 a_max / h^2
    a_max = max(np.max(np.abs(g).sum(axis=1)) for g, _ in a_op.terms)
    lam_max = 12.0 * a_max / grid.h ** 2
    if (1.0 - 2.0 * cfg.theta) * cfg.dt * lam_max > 2.0:
        warnings.warn(
            f"theta={cfg.theta} < 1/2 with dt={cfg.dt:.3e} exceeds the "
            f"stability heuristic (lambda_max ~ {lam_max:.3e}); expect blow-up",
            stacklevel=3,
        )


class ThetaStepper:
    """Constant-coefficient theta scheme with a reusable left-hand solve.

    (M + theta dt A) V[m+1] = (M - (1-theta) dt A) V[m], V[0] = f.
    The left operator and the banded factorization of its mean block are
    built once and reused for every step.
    """

    def __init__(self, a_op: BlockOperator, m_op: BlockOperator,
                 cfg: ThetaSchemeConfig, solver: SolverConfig = SolverConfig(),
                 grid: FemGrid | None = None):
        self.cfg = cfg
        self.solver = solver
        dt = cfg.dt
        self.left = m_op.plus(a_op.scaled(cfg.theta * dt))
        self.right = m_op.plus(a_op.scaled(-(1.0 - cfg.theta) * dt))
        if grid is not None:
            _stability_warning(a_op, m_op, cfg, grid)

    def step(self, v: np.ndarray, step_index: int = 0,
             x0: np.ndarray | None = None):
        rhs = self.right.apply(v)
        try:
            if self.solver.method == "dense":
                return _dense_solve(self.left, rhs)
            return _krylov_solve(self.left, rhs, self.solver,
                                 x0=v if x0 is None else x0)
        except SolverConvergenceError as err:
            raise SolverConvergenceError(
                f"time step {step_index}: {err}", err.residual_history, step=step_index,
            ) from None


def step_theta(a_op: BlockOperator, m_op: BlockOperator, v: np.ndarray,
               cfg: ThetaSchemeConfig, solver: SolverConfig = SolverConfig()):
    """One theta-scheme step; see ThetaStepper for the batched driver."""
    return ThetaStepper(a_op, m_op, cfg, solver).step(v)


def solve_parabolic(system: ParabolicSystem, cfg: ThetaSchemeConfig,
                    solver: SolverConfig = SolverConfig(),
                    keep_times: bool = False):
    """March the theta scheme to the horizon; returns (field at T, info).

    ``keep_times`` additionally returns the list of fields after every step
    (memory permitting), which the convergence studies use.
    """
    stepper = ThetaStepper(system.a_op, system.m_op, cfg, solver, grid=system.grid)
    v = system.f_block.copy()
    v_prev = None
    iterations = 0
    residual = 0.0
    trajectory = []
    for m in range(cfg.n_steps):
        # linear extrapolation from the last two iterates as the warm start
        x0 = 2.0 * v - v_prev if v_prev is not None else None
        v_prev = v
        v, info = stepper.step(v, step_index=m, x0=x0)
        iterations += info.iterations
        residual = max(residual, info.residual)
        if keep_times:
            trajectory.append(v.copy())
    fld = ChaosFemField(grid=system.grid, basis=system.basis, coeffs=v,
                        label="survival", time=cfg.horizon)
    info = SolveInfo(method=solver.method, iterations=iterations, residual=residual)
    if keep_times:
        return fld, info, trajectory
    return fld, info
