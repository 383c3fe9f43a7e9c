"""Figure rendering for the report path: every plot goes to a file.

Uses the Agg backend so batch runs never touch a display.  Each helper
returns the path it wrote so the report can list its figures.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .galerkin import ChaosFemField, chaos_coeffs_at, field_mean_std

DPI = 130


def _save(fig, outdir: Path, name: str) -> str:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def field_profile(fld: ChaosFemField, x_eval: float, outdir) -> str:
    """Mean of the field over the parameters with a +-2 std band."""
    grid = fld.grid
    xs = np.concatenate(([grid.x_lo], grid.interior_nodes, [grid.x_hi]))
    mean, std = field_mean_std(fld)
    mean = np.concatenate(([0.0], mean, [0.0]))
    std = np.concatenate(([0.0], std, [0.0]))
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(xs, mean, color="tab:blue", lw=1.5, label="mean")
    ax.fill_between(xs, mean - 2 * std, mean + 2 * std,
                    color="tab:blue", alpha=0.25, label="mean ± 2 std")
    ax.axvline(x_eval, color="tab:red", ls="--", lw=1.0, label=f"x = {x_eval:g}")
    ax.set_xlabel("x")
    label = "mean exit time" if fld.label == "mean_exit_time" else "survival probability"
    if fld.time is not None:
        label += f" at t = {fld.time:g}"
    ax.set_ylabel(label)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, Path(outdir), "field_profile.png")


def chaos_spectrum(fld: ChaosFemField, x_eval: float, outdir) -> str:
    """Magnitude of the chaos coefficients at the evaluation point, by degree."""
    coeffs = chaos_coeffs_at(fld, x_eval)
    degrees = [sum(q) for q in fld.basis.indices]
    mags = np.abs(coeffs)
    floor = max(mags.max(), 1e-300) * 1e-18
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogy(degrees, np.maximum(mags, floor), "o", ms=4, alpha=0.8)
    ax.set_xlabel("total polynomial degree")
    ax.set_ylabel(f"|coefficient| at x = {x_eval:g}")
    ax.grid(alpha=0.3)
    return _save(fig, Path(outdir), "chaos_spectrum.png")


def sobol_bars(records: list[dict], outdir) -> str:
    """Bar chart of the Sobol' estimates, grouped by method when mixed."""
    labels = sorted({"S_{" + ",".join(map(str, r["I"])) + "}" for r in records})
    methods = sorted({r["method"] for r in records})
    width = 0.8 / len(methods)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    base = np.arange(len(labels))
    for k, method in enumerate(methods):
        xs, ys, errs = [], [], []
        for r in records:
            if r["method"] != method:
                continue
            lab = "S_{" + ",".join(map(str, r["I"])) + "}"
            xs.append(base[labels.index(lab)] + (k - (len(methods) - 1) / 2) * width)
            ys.append(r["estimate"])
            errs.append(r.get("stderr", 0.0) or 0.0)
        ax.bar(xs, ys, width=width * 0.9, yerr=[3 * e for e in errs],
               capsize=3, label=method)
    ax.set_xticks(base)
    ax.set_xticklabels(labels)
    ax.set_ylabel("Sobol' index")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, Path(outdir), "sobol_indices.png")


def pick_freeze_scatter(samples: dict, outdir) -> str:
    """Scatter of the paired inner averages (Y_B, Y_I) per index set."""
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    for I, pairs in samples.items():
        label = "I = {" + ",".join(map(str, I)) + "}"
        ax.plot(pairs[:, 0], pairs[:, 1], ".", ms=2.5, alpha=0.4, label=label)
    lims = ax.get_xlim()
    ax.plot(lims, lims, "k--", lw=0.8)
    ax.set_xlabel("Y over base samples")
    ax.set_ylabel("Y over frozen samples")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, Path(outdir), "pickfreeze_scatter.png")
