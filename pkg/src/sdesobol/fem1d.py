"""1-D P1 finite elements on a uniform grid with homogeneous Dirichlet conditions.

Hat functions phi_i((x - x_i)/h) live on the interior nodes of a uniform
mesh; all matrices are tridiagonal and stored as (sub, diag, sup) triples.
The convection matrix is assembled from exact element integrals, not copied
from a closed-form display, so index conventions are pinned by the assembly
itself and the display becomes a test vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


@dataclass(frozen=True)
class FemGrid:
    """Uniform mesh with n_cells elements on (x_lo, x_hi)."""

    n_cells: int
    x_lo: float = 0.0
    x_hi: float = 10.0

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.n_cells}")
        if not self.x_lo < self.x_hi:
            raise ValueError(f"empty domain ({self.x_lo}, {self.x_hi})")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """All nodes x_0 .. x_N including the boundary."""
        return self.x_lo + self.h * np.arange(self.n_cells + 1)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


@dataclass(frozen=True)
class TriDiag:
    """Tridiagonal (n x n) matrix as bands; sub and sup have length n - 1."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        n = self.diag.size
        if self.sub.size != n - 1 or self.sup.size != n - 1:
            raise ValueError("band lengths must be n-1, n, n-1")

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.sup * v[1:]
        out[1:] += self.sub * v[:-1]
        return out

    def matmat(self, x: np.ndarray) -> np.ndarray:
        """T @ X for X of shape (n, k)."""
        out = self.diag[:, None] * x
        out[:-1] += self.sup[:, None] * x[1:]
        out[1:] += self.sub[:, None] * x[:-1]
        return out

    def transpose(self) -> "TriDiag":
        return TriDiag(sub=self.sup, diag=self.diag, sup=self.sub)

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diag)
            + np.diag(self.sup, k=1)
            + np.diag(self.sub, k=-1)
        )

    def to_banded(self) -> np.ndarray:
        """(3, n) banded storage for scipy.linalg.solve_banded with (1, 1)."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.sup
        ab[1, :] = self.diag
        ab[2, :-1] = self.sub
        return ab

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.to_banded(), rhs)

    def __add__(self, other: "TriDiag") -> "TriDiag":
        return TriDiag(self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)

    def scaled(self, c: float) -> "TriDiag":
        return TriDiag(c * self.sub, c * self.diag, c * self.sup)


def stiffness(grid: FemGrid) -> TriDiag:
    """Integrals of phi_j' phi_i': (1/h) tridiag(-1, 2, -1)."""
    n = grid.n_interior
    h = grid.h
    return TriDiag(
        sub=np.full(n - 1, -1.0 / h),
        diag=np.full(n, 2.0 / h),
        sup=np.full(n - 1, -1.0 / h),
    )


def mass(grid: FemGrid) -> TriDiag:
    """Integrals of phi_j phi_i: tridiag(h/6, 2h/3, h/6)."""
    n = grid.n_interior
    h = grid.h
    return TriDiag(
        sub=np.full(n - 1, h / 6.0),
        diag=np.full(n, 2.0 * h / 3.0),
        sup=np.full(n - 1, h / 6.0),
    )


def convection(grid: FemGrid) -> TriDiag:
    """Integrals of x phi_j'(x) phi_i(x), assembled per element.

    On element [a, b] the row basis function contributes phi_b' * int x phi_a,
    with int_a^b x phi_left = h (b/2 - h/3) and int_a^b x phi_right = h (a/2 + h/3).
    Not symmetric.
    """
    n = grid.n_interior
    h = grid.h
    nodes = grid.nodes
    diag = np.zeros(n)
    sub = np.zeros(n - 1)
    sup = np.zeros(n - 1)
    for e in range(grid.n_cells):
        a, b = nodes[e], nodes[e + 1]
        int_left = h * (b / 2.0 - h / 3.0)   # int x phi_left dx
        int_right = h * (a / 2.0 + h / 3.0)  # int x phi_right dx
        il = e - 1   # interior index of the element's left node
        ir = e       # interior index of the element's right node
        if 0 <= il < n:
            diag[il] += -int_left / h              # row left, col left
            if 0 <= ir < n:
                sup[il] += int_left / h            # row left, col right
        if 0 <= ir < n:
            diag[ir] += int_right / h              # row right, col right
            if 0 <= il < n:
                sub[il] += -int_right / h          # row right, col left
    return TriDiag(sub=sub, diag=diag, sup=sup)


def load_constant(grid: FemGrid, c: float) -> np.ndarray:
    """Load vector of the constant source c: entries c * h."""
    return np.full(grid.n_interior, c * grid.h)


def eval_fem(grid: FemGrid, coeffs: np.ndarray, x) -> float | np.ndarray:
    """Piecewise-linear value of sum_j coeffs[j] phi_j at x (0 on the boundary)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size != grid.n_interior:
        raise ValueError(f"need {grid.n_interior} coefficients, got {coeffs.size}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < grid.x_lo) or np.any(x_arr > grid.x_hi):
        raise ValueError(f"point {x} outside domain [{grid.x_lo}, {grid.x_hi}]")
    padded = np.concatenate(([0.0], coeffs, [0.0]))
    out = np.interp(x_arr, grid.nodes, padded)
    return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out
