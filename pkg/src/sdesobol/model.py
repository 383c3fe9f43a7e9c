"""Parametrized scalar SDE models and their divergence-form PDE coefficients.

A model describes the dynamics

    dX_t = b(X_t, z) dt + sigma(X_t, z) dW_t

on a bounded interval, where z is a realization of the uncertain parameter
vector xi with independent components.  The reference model is a
one-dimensional Ornstein-Uhlenbeck process whose reversion rate and
volatility are affine images of independent U(0, 1) variables.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SQRT3 = math.sqrt(3.0)


class ModelError(ValueError):
    """Invalid model definition (bad domain, non-positive diffusion, ...)."""


@dataclass(frozen=True)
class UncertainParam:
    """One uncertain scalar input with its marginal distribution.

    ``index`` is the 0-based position of the parameter in the vector z.
    Only the uniform distribution is implemented; the enumeration is kept
    open for other moment-determinate laws.
    """

    name: str
    index: int
    distribution: str = "uniform"
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.distribution != "uniform":
            raise ModelError(f"unsupported distribution {self.distribution!r}")
        if not self.lo < self.hi:
            raise ModelError(f"parameter {self.name!r}: needs lo < hi")


@dataclass(frozen=True)
class SdeModel:
    """Scalar SDE with uncertain coefficients on an open interval.

    ``drift`` and ``diffusion`` are callables (x, z) -> value where x may be
    a float or ndarray of states and z is a parameter realization of shape
    (m,).  ``diffusion`` must be strictly positive on the closed domain.
    """

    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray, np.ndarray], np.ndarray]
    params: tuple[UncertainParam, ...]
    domain: tuple[float, float]
    dimension: int = 1
    name: str = "generic"

    def __post_init__(self):
        if self.dimension != 1:
            raise ModelError("only scalar (d = 1) models are implemented")
        lo, hi = self.domain
        if not lo < hi:
            raise ModelError(f"domain must be a nonempty open interval, got {self.domain}")
        seen = sorted(p.index for p in self.params)
        if seen != list(range(len(self.params))):
            raise ModelError("parameter indices must be 0..m-1 without gaps")

    @property
    def n_params(self) -> int:
        return len(self.params)

    def sample_params(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n realizations of z, shape (n, m)."""
        cols = []
        for p in sorted(self.params, key=lambda p: p.index):
            cols.append(rng.uniform(p.lo, p.hi, size=n))
        return np.column_stack(cols)


@dataclass(frozen=True)
class DivergenceCoeffs:
    """Coefficients of the divergence-form problem derived from an SDE.

    a_tilde = sigma^2 / 2 (scalar case), b_tilde = d/dx a_tilde - b, and
    f_tilde is the constant source 1.  ``a_x_constant`` marks diffusions that
    do not depend on x; ``drift_rate`` is set when b_tilde(x, z) factors as
    drift_rate(z) * x, which is what the chaos-Galerkin assembly consumes.
    """

    a_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a_x_constant: bool = False
    drift_rate: Callable[[np.ndarray], np.ndarray] | None = None


def _uniform_params(m: int) -> tuple[UncertainParam, ...]:
    return tuple(UncertainParam(name=f"xi{j + 1}", index=j) for j in range(m))


@dataclass(frozen=True)
class OuModel(SdeModel):
    """Ornstein-Uhlenbeck toy model dX = -alpha(z) X dt + sigma(z) dW on (0, 10).

    alpha(z) = mu1 + sqrt(3) sigma1 (2 z1 - 1) and
    sigma(z) = mu2 + sqrt(3) sigma2 (2 z2 - 1), with z1, z2 ~ U(0, 1)
    independent, so alpha ~ U[mu1 -+ sqrt(3) sigma1] and similarly for sigma.
    Ellipticity requires mu2 > sqrt(3) sigma2; the drift is allowed to
    degenerate to zero (mu1 = sigma1 = 0 gives driftless diffusion).
    """

    mu1: float = 1.0
    sigma1: float = 0.0
    mu2: float = 1.0
    sigma2: float = 0.0
    drift: Callable = None  # filled in __post_init__
    diffusion: Callable = None
    params: tuple[UncertainParam, ...] = field(default_factory=lambda: _uniform_params(2))
    domain: tuple[float, float] = (0.0, 10.0)
    name: str = "ou"

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ModelError("sigma1 and sigma2 must be nonnegative")
        if self.mu2 - SQRT3 * self.sigma2 <= 0:
            raise ModelError(
                f"need mu2 > sqrt(3)*sigma2 for a positive diffusion, "
                f"got mu2={self.mu2}, sigma2={self.sigma2}"
            )
        if self.mu1 - SQRT3 * self.sigma1 < 0:
            raise ModelError(
                f"need mu1 >= sqrt(3)*sigma1 for a nonnegative reversion rate, "
                f"got mu1={self.mu1}, sigma1={self.sigma1}"
            )
        object.__setattr__(self, "drift", lambda x, z: -self.alpha(z) * x)
        object.__setattr__(self, "diffusion", lambda x, z: self.sigma(z) * np.ones_like(np.asarray(x, dtype=float)))
        super().__post_init__()

    def alpha(self, z: np.ndarray) -> np.ndarray:
        """Reversion rate; z has shape (m,) or (n, m)."""
        z = np.asarray(z, dtype=float)
        return self.mu1 + SQRT3 * self.sigma1 * (2.0 * z[..., 0] - 1.0)

    def sigma(self, z: np.ndarray) -> np.ndarray:
        """Volatility; z has shape (m,) or (n, m)."""
        z = np.asarray(z, dtype=float)
        return self.mu2 + SQRT3 * self.sigma2 * (2.0 * z[..., 1] - 1.0)

    def diffusion_bounds(self) -> tuple[float, float]:
        lo = self.mu2 - SQRT3 * self.sigma2
        hi = self.mu2 + SQRT3 * self.sigma2
        return lo, hi

    def drift_rate_bounds(self) -> tuple[float, float]:
        lo = self.mu1 - SQRT3 * self.sigma1
        hi = self.mu1 + SQRT3 * self.sigma1
        return lo, hi


def poincare_constant(d: int, vol: float) -> float:
    """Norm-equivalence constant C(d, |D|) = sqrt(1 + (d Gamma(d/2) / (2 pi^(d/2)) |D|)^(1/d))."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if vol <= 0:
        raise ValueError(f"domain volume must be positive, got {vol}")
    inner = d * math.gamma(d / 2.0) / (2.0 * math.pi ** (d / 2.0)) * vol
    return math.sqrt(1.0 + inner ** (1.0 / d))


@dataclass(frozen=True)
class CoercivityCheck:
    satisfied: bool
    lhs: float
    rhs: float


def check_coercivity_ou(model: OuModel) -> CoercivityCheck:
    """Coercivity condition of the elliptic bilinear form for the OU model.

    lhs is the sup of |b_tilde| over the closed domain and parameter support,
    rhs is lambda_tilde / sqrt(2 C(1, |D|)); for D = (0, 10) the condition
    reads 10 (mu1 + sqrt(3) sigma1) < (mu2 - sqrt(3) sigma2)^2 / (2 * 24^(1/4)).
    The parabolic route only needs a bounded b_tilde, so a failed check is a
    warning for the elliptic solve, not an error.
    """
    lo, hi = model.domain
    lhs = max(abs(lo), abs(hi)) * model.drift_rate_bounds()[1]
    lam_tilde = model.diffusion_bounds()[0] ** 2 / 2.0
    rhs = lam_tilde / math.sqrt(2.0 * poincare_constant(1, hi - lo))
    return CoercivityCheck(satisfied=lhs < rhs, lhs=lhs, rhs=rhs)


def divergence_coeffs(model: SdeModel) -> DivergenceCoeffs:
    """Divergence-form coefficients (a_tilde, b_tilde, f_tilde) of a model.

    For diffusions that are constant in x (the implemented family) the
    correction term d/dx a_tilde vanishes and b_tilde = -b.  Raises
    ModelError when the diffusion is not strictly positive on the domain.
    """
    if isinstance(model, OuModel):
        def a_tilde(x, z):
            return model.sigma(z) ** 2 / 2.0 * np.ones_like(np.asarray(x, dtype=float))

        def b_tilde(x, z):
            return model.alpha(z) * np.asarray(x, dtype=float)

        def f_tilde(x, z):
            return np.ones_like(np.asarray(x, dtype=float))

        return DivergenceCoeffs(
            a_tilde=a_tilde,
            b_tilde=b_tilde,
            f_tilde=f_tilde,
            a_x_constant=True,
            drift_rate=model.alpha,
        )

    # generic scalar model: probe positivity of sigma on a coarse (x, z) grid
    lo, hi = model.domain
    xs = np.linspace(lo, hi, 33)
    corners = _support_corners(model.params)
    for z in corners:
        sig = np.asarray(model.diffusion(xs, z), dtype=float)
        if np.any(sig <= 0):
            raise ModelError("diffusion is not strictly positive on the closed domain")

    def a_tilde(x, z):
        return np.asarray(model.diffusion(x, z), dtype=float) ** 2 / 2.0

    sig_probe = [np.asarray(model.diffusion(xs, z), dtype=float) for z in corners]
    x_constant = all(np.allclose(s, s.flat[0]) for s in sig_probe)

    if x_constant:
        def b_tilde(x, z):
            return -np.asarray(model.drift(x, z), dtype=float)
    else:
        def b_tilde(x, z):
            x = np.asarray(x, dtype=float)
            eps = 1e-6 * max(1.0, hi - lo)
            da = (a_tilde(x + eps, z) - a_tilde(x - eps, z)) / (2.0 * eps)
            return da - np.asarray(model.drift(x, z), dtype=float)

    def f_tilde(x, z):
        return np.ones_like(np.asarray(x, dtype=float))

    return DivergenceCoeffs(
        a_tilde=a_tilde, b_tilde=b_tilde, f_tilde=f_tilde,
        a_x_constant=x_constant, drift_rate=None,
    )


def _support_corners(params) -> list[np.ndarray]:
    m = len(params)
    ordered = sorted(params, key=lambda p: p.index)
    corners = []
    for mask in range(2 ** m):
        corners.append(np.array(
            [ordered[j].hi if (mask >> j) & 1 else ordered[j].lo for j in range(m)]
        ))
    # also the center point
    corners.append(np.array([(p.lo + p.hi) / 2.0 for p in ordered]))
    return corners


def warn_if_not_coercive(model: SdeModel) -> CoercivityCheck | None:
    """Emit a warning when the elliptic coercivity condition fails (OU only)."""
    if not isinstance(model, OuModel):
        return None
    check = check_coercivity_ou(model)
    if not check.satisfied:
        warnings.warn(
            f"coercivity condition violated (lhs={check.lhs:.4g} >= rhs={check.rhs:.4g}); "
            "elliptic Galerkin solve proceeds but is not covered by the "
            "well-posedness condition",
            stacklevel=2,
        )
    return check
