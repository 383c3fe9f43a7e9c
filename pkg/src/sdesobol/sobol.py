"""Sobol' index estimation: Parseval route on chaos coefficients and the
pick-freeze statistical estimator on paired model evaluations.

Both routes estimate S_I = V[E(Y | xi_I)] / V(Y) for a subset I of the
uncertain parameters.  Estimates are never clipped; pick-freeze values
outside [0, 1] are flagged instead so under-sampling stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosBasis, index_set

VAR_REL_FLOOR = 1e-14
VAR_ABS_FLOOR = 1e-300


class DegenerateVarianceError(ValueError):
    """Total variance is numerically zero; Sobol' indices are undefined."""


@dataclass(frozen=True)
class SobolEstimate:
    """One Sobol' index estimate with its provenance and diagnostics."""

    index_set: tuple[int, ...]
    estimate: float
    method: str  # "parseval" | "pick_freeze"
    variance: float
    numerator: float
    stderr: float | None = None
    n_outer: int | None = None
    n_inner: int | None = None
    n_evaluations: int | None = None
    inner_noise_var: float | None = None
    out_of_range: bool = False
    x: float | None = None
    t: float | None = None

    def to_record(self) -> dict:
        rec = {
            "method": self.method,
            "I": list(self.index_set),
            "estimate": self.estimate,
            "variance": self.variance,
            "numerator": self.numerator,
        }
        if self.stderr is not None:
            rec["stderr"] = self.stderr
        if self.n_outer is not None:
            rec["N"] = self.n_outer
        if self.n_inner is not None:
            rec["M"] = self.n_inner
        if self.n_evaluations is not None:
            rec["n_evaluations"] = self.n_evaluations
        if self.inner_noise_var is not None:
            rec["inner_noise_var"] = self.inner_noise_var
        if self.out_of_range:
            rec["out_of_range"] = True
        if self.x is not None:
            rec["x"] = self.x
        if self.t is not None:
            rec["t"] = self.t
        return rec


def sobol_parseval(coeffs: np.ndarray, basis: ChaosBasis, I,
                   x: float | None = None, t: float | None = None) -> SobolEstimate:
    """Sobol' index from chaos coefficients at a point.

    S_I = sum_{q in K_I} c_q^2 / sum_{q >= 1} c_q^2 where K_I collects the
    basis functions depending on xi_I alone.  Raises DegenerateVarianceError
    when the total variance falls below the relative/absolute floor.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"need {basis.size} coefficients, got shape {coeffs.shape}")
    variance = float(np.sum(coeffs[1:] ** 2))
    eps = max(VAR_REL_FLOOR * coeffs[0] ** 2, VAR_ABS_FLOOR)
    if variance < eps:
        raise DegenerateVarianceError(
            f"degenerate variance {variance:.3e} (floor {eps:.3e}); "
            "the quantity does not depend on the uncertain parameters"
        )
    members = index_set(basis, I)
    numerator = float(np.sum(coeffs[members] ** 2))
    return SobolEstimate(
        index_set=tuple(sorted(I)),
        estimate=numerator / variance,
        method="parseval",
        variance=variance,
        numerator=numerator,
        x=x,
        t=t,
    )


def freeze_columns(xi_a: np.ndarray, xi_b: np.ndarray, I) -> np.ndarray:
    """Frozen sample: coordinate j comes from B when j is in I (1-based), else A."""
    m = xi_a.shape[1]
    I = frozenset(I)
    if not I:
        raise ValueError("empty index set I")
    if not I <= set(range(1, m + 1)):
        raise ValueError(f"index set {sorted(I)} not a subset of 1..{m}")
    xi_i = xi_a.copy()
    cols = [j - 1 for j in sorted(I)]
    xi_i[:, cols] = xi_b[:, cols]
    return xi_i


def pick_freeze_design(m: int, I, n: int, rng: np.random.Generator):
    """Paired parameter samples for the pick-freeze estimator.

    Draws independent samples A and B of shape (n, m) on the unit cube and
    returns (xi_B, xi_I) where xi_I copies coordinate j from B when j is in
    I (1-based) and from A otherwise.
    """
    if n < 2:
        raise ValueError(f"need at least 2 outer samples, got {n}")
    xi_a = rng.random((n, m))
    xi_b = rng.random((n, m))
    return xi_b, freeze_columns(xi_a, xi_b, I)


def sobol_pick_freeze(evals_i: np.ndarray, evals_b: np.ndarray,
                      I=(), x: float | None = None, t: float | None = None,
                      n_inner: int | None = None) -> SobolEstimate:
    """Pick-freeze estimate from paired evaluations Y_I, Y_B.

    numerator   = mean(Y_I * Y_B) - Cbar^2
    denominator = mean((Y_I^2 + Y_B^2) / 2) - Cbar^2
    with Cbar = mean((Y_I + Y_B) / 2).  The standard error comes from the
    delta method on the joint moments (P, Q, C).
    """
    y_i = np.asarray(evals_i, dtype=float)
    y_b = np.asarray(evals_b, dtype=float)
    if y_i.shape != y_b.shape or y_i.ndim != 1:
        raise ValueError("evaluations must be 1-d arrays of equal length")
    n = y_i.size
    if n < 2:
        raise ValueError(f"need at least 2 paired evaluations, got {n}")

    p_samples = y_i * y_b
    q_samples = 0.5 * (y_i ** 2 + y_b ** 2)
    c_samples = 0.5 * (y_i + y_b)
    p_bar = float(p_samples.mean())
    q_bar = float(q_samples.mean())
    c_bar = float(c_samples.mean())

    numerator = p_bar - c_bar ** 2
    denominator = q_bar - c_bar ** 2
    if denominator <= max(VAR_REL_FLOOR * c_bar ** 2, VAR_ABS_FLOOR):
        raise DegenerateVarianceError(
            f"degenerate variance: pick-freeze denominator {denominator:.3e} "
            "is not positive"
        )
    estimate = numerator / denominator

    # delta method on g(P, Q, C) = (P - C^2) / (Q - C^2)
    grad = np.array([
        1.0 / denominator,
        -numerator / denominator ** 2,
        2.0 * c_bar * (p_bar - q_bar) / denominator ** 2,
    ])
    moments = np.vstack([p_samples, q_samples, c_samples])
    cov = np.cov(moments, ddof=1)
    stderr = float(np.sqrt(max(grad @ cov @ grad, 0.0) / n))

    return SobolEstimate(
        index_set=tuple(sorted(I)),
        estimate=estimate,
        method="pick_freeze",
        variance=denominator,
        numerator=numerator,
        stderr=stderr,
        n_outer=n,
        n_inner=n_inner,
        out_of_range=not 0.0 <= estimate <= 1.0,
        x=x,
        t=t,
    )
