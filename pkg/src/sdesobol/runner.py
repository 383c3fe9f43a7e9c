"""Pipeline driver: executes one mode for one configuration and writes the
report (JSON), the optional delimited dumps, and the figures."""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .chaos import build_basis
from .config import ConfigError, RunConfig, load_config
from .fem1d import FemGrid
from .galerkin import (
    assemble_elliptic,
    assemble_parabolic,
    chaos_coeffs_at,
    export_coeffs_csv,
    solve_elliptic,
    solve_parabolic,
)
from .model import check_coercivity_ou, poincare_constant
from .montecarlo import (
    EulerConfig,
    ExitTimeKernel,
    SurvivalKernel,
    double_mc_sobol_suite,
)
from .sobol import sobol_parseval


def _diagnostics(cfg: RunConfig) -> dict:
    lo, hi = cfg.model.domain
    check = check_coercivity_ou(cfg.model)
    return {
        "poincare_constant": poincare_constant(1, hi - lo),
        "coercivity": {
            "satisfied": check.satisfied,
            "lhs": check.lhs,
            "rhs": check.rhs,
        },
    }


def _galerkin_field(cfg: RunConfig, quantity: str, captured: list):
    grid = FemGrid(cfg.fem_cells, cfg.model.domain[0], cfg.model.domain[1])
    basis = build_basis(cfg.model.n_params, cfg.chaos.truncation,
                        cfg.chaos.p_max, cfg.chaos.quad_nodes)
    timings = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t0 = time.perf_counter()
        if quantity == "exit_time":
            system = assemble_elliptic(cfg.model, basis, grid)
            timings["assemble_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            fld, info = solve_elliptic(system, cfg.solver)
        else:
            system = assemble_parabolic(cfg.model, basis, grid)
            timings["assemble_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            fld, info = solve_parabolic(system, cfg.require_time("the parabolic solve"),
                                        cfg.solver)
        timings["solve_s"] = time.perf_counter() - t0
    captured.extend(str(w.message) for w in caught)
    return fld, info, timings


def _parseval_records(cfg: RunConfig, fld) -> list[dict]:
    coeffs = chaos_coeffs_at(fld, cfg.x0)
    records = []
    for I in cfg.index_sets:
        est = sobol_parseval(coeffs, fld.basis, I, x=cfg.x0, t=fld.time)
        records.append(est.to_record())
    return records


def _mc_records(cfg: RunConfig, quantity: str):
    mc = cfg.require_mc("Monte Carlo modes")
    euler = EulerConfig(dt=mc.dt, max_steps=mc.max_steps, seed=mc.seed)
    if quantity == "exit_time":
        kernel = ExitTimeKernel(x0=cfg.x0)
    else:
        horizon = cfg.require_time("the survival kernel").horizon
        kernel = SurvivalKernel(x0=cfg.x0, horizon=horizon)
    estimates, samples = double_mc_sobol_suite(
        cfg.model, list(cfg.index_sets), mc.n_outer, mc.m_inner, kernel, euler,
        threads=mc.threads, collect_samples=cfg.write_samples or cfg.figures,
    )
    return [e.to_record() for e in estimates], samples


def _write_samples_csv(samples: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index_set,l,y_base,y_frozen\n")
        for I, pairs in samples.items():
            tag = "+".join(map(str, I))
            for l_idx, (y_b, y_i) in enumerate(pairs):
                fh.write(f"{tag},{l_idx},{float(y_b)!r},{float(y_i)!r}\n")


def run(cfg: RunConfig, mode: str | None = None, out_dir=None,
        seed: int | None = None) -> dict:
    """Execute one pipeline mode; returns the report dictionary.

    ``seed`` overrides the configured Monte Carlo seed.  When ``out_dir`` is
    given, report.json plus the configured dumps and figures land there.
    """
    mode = mode or cfg.mode
    if mode is None:
        raise ConfigError("no mode given (set `mode` in the config or pass --mode)")
    if mode not in ("elliptic", "parabolic", "mc-exit", "mc-survival", "compare"):
        raise ConfigError(f"unknown mode {mode!r}")
    if seed is not None and cfg.mc is not None:
        cfg = dataclasses.replace(cfg, mc=dataclasses.replace(cfg.mc, seed=seed))

    t_start = time.perf_counter()
    report: dict = {
        "tool": {"name": "sdesobol", "version": __version__},
        "mode": mode,
        "config": cfg.raw,
        "diagnostics": _diagnostics(cfg),
        "sobol": [],
        "timings": {},
        "outputs": {},
    }
    if cfg.mc is not None:
        report["seed"] = seed if seed is not None else cfg.mc.seed
    captured_warnings: list[str] = []
    out = Path(out_dir) if out_dir is not None else None
    figures: list[str] = []

    fld = None
    samples = None
    if mode in ("elliptic", "parabolic"):
        quantity = "exit_time" if mode == "elliptic" else "survival"
        fld, info, timings = _galerkin_field(cfg, quantity, captured_warnings)
        report["timings"].update(timings)
        report["diagnostics"]["solver"] = {
            "method": info.method,
            "iterations": info.iterations,
            "residual": info.residual,
        }
        report["sobol"] = _parseval_records(cfg, fld)
        coeffs_at_x = chaos_coeffs_at(fld, cfg.x0)
        report["field"] = {
            "mean_at_x": float(coeffs_at_x[0]),
            "variance_at_x": float(np.sum(coeffs_at_x[1:] ** 2)),
            "x": cfg.x0,
        }
        if fld.time is not None:
            report["field"]["t"] = fld.time
    elif mode in ("mc-exit", "mc-survival"):
        quantity = "exit_time" if mode == "mc-exit" else "survival"
        t0 = time.perf_counter()
        records, samples = _mc_records(cfg, quantity)
        report["timings"]["mc_s"] = time.perf_counter() - t0
        report["sobol"] = records
    else:  # compare
        quantity = cfg.resolve_quantity()
        fld, info, timings = _galerkin_field(cfg, quantity, captured_warnings)
        report["timings"].update(timings)
        report["diagnostics"]["solver"] = {
            "method": info.method,
            "iterations": info.iterations,
            "residual": info.residual,
        }
        galerkin_records = _parseval_records(cfg, fld)
        t0 = time.perf_counter()
        mc_records, samples = _mc_records(cfg, quantity)
        report["timings"]["mc_s"] = time.perf_counter() - t0
        report["sobol"] = galerkin_records + mc_records
        by_set = {tuple(r["I"]): r for r in galerkin_records}
        comparison = []
        for rec in mc_records:
            gal = by_set[tuple(rec["I"])]
            comparison.append({
                "I": rec["I"],
                "galerkin": gal["estimate"],
                "mc": rec["estimate"],
                "discrepancy": abs(gal["estimate"] - rec["estimate"]),
                "mc_stderr": rec.get("stderr"),
            })
        report["compare"] = comparison

    if captured_warnings:
        report["diagnostics"]["warnings"] = captured_warnings
    report["timings"]["total_s"] = time.perf_counter() - t_start

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if fld is not None and cfg.write_coeffs:
            coeffs_path = out / "coeffs.csv"
            export_coeffs_csv(fld, coeffs_path)
            report["outputs"]["coeffs_csv"] = str(coeffs_path)
        if samples is not None and cfg.write_samples:
            samples_path = out / "mc_samples.csv"
            _write_samples_csv(samples, samples_path)
            report["outputs"]["mc_samples_csv"] = str(samples_path)
        if cfg.figures:
            from . import figures as figmod
            if fld is not None:
                figures.append(figmod.field_profile(fld, cfg.x0, out))
                figures.append(figmod.chaos_spectrum(fld, cfg.x0, out))
            if report["sobol"]:
                figures.append(figmod.sobol_bars(report["sobol"], out))
            if samples:
                figures.append(figmod.pick_freeze_scatter(samples, out))
            report["outputs"]["figures"] = figures
        report_path = out / "report.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        report["outputs"]["report_json"] = str(report_path)

    return report


def run_config_file(path, mode: str | None = None, out_dir=None,
                    seed: int | None = None) -> dict:
    return run(load_config(path), mode=mode, out_dir=out_dir, seed=seed)
