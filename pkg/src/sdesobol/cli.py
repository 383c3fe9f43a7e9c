"""Command line front end: `sdesobol run --config cfg.toml --mode elliptic`."""

from __future__ import annotations

import argparse
import json
import sys

from .config import MODES, ConfigError
from .galerkin import SolverConvergenceError
from .montecarlo import PathTruncationError
from .runner import run_config_file
from .sobol import DegenerateVarianceError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdesobol",
        description=(
            "Sobol' sensitivity indices of mean exit times and survival "
            "probabilities for SDEs with uncertain coefficients, via a "
            "chaos-Galerkin PDE metamodel and a pick-freeze Monte Carlo "
            "estimator."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute one pipeline mode for a config file")
    runp.add_argument("--config", required=True, help="TOML configuration file")
    runp.add_argument("--mode", choices=MODES,
                      help="pipeline mode (defaults to the config's `mode`)")
    runp.add_argument("--out", default=None, metavar="DIR",
                      help="output directory for report.json, CSV dumps and figures")
    runp.add_argument("--seed", type=int, default=None,
                      help="override the Monte Carlo seed")
    runp.add_argument("--no-figures", action="store_true",
                      help="skip figure rendering even if the config enables it")
    return parser


def _print_summary(report: dict) -> None:
    print(f"mode: {report['mode']}")
    coer = report["diagnostics"]["coercivity"]
    status = "satisfied" if coer["satisfied"] else "NOT satisfied"
    print(f"coercivity condition: {status} (lhs={coer['lhs']:.4g}, rhs={coer['rhs']:.4g})")
    for rec in report["sobol"]:
        label = "S_{" + ",".join(map(str, rec["I"])) + "}"
        line = f"{label} [{rec['method']}] = {rec['estimate']:.6f}"
        if rec.get("stderr") is not None:
            line += f" +- {rec['stderr']:.2e} (1 se)"
        print(line)
    for row in report.get("compare", []):
        label = "S_{" + ",".join(map(str, row["I"])) + "}"
        print(f"{label}: |galerkin - mc| = {row['discrepancy']:.6f}")
    for key, val in report.get("outputs", {}).items():
        if key == "figures":
            for fig in val:
                print(f"wrote {fig}")
        else:
            print(f"wrote {val}")
    print(f"total time: {report['timings']['total_s']:.2f}s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        from .config import load_config
        from .runner import run
        import dataclasses

        cfg = load_config(args.config)
        if args.no_figures:
            cfg = dataclasses.replace(cfg, figures=False)
        report = run(cfg, mode=args.mode, out_dir=args.out, seed=args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (SolverConvergenceError, PathTruncationError, DegenerateVarianceError) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 1
    if args.out is None:
        print(json.dumps(report, indent=2))
    else:
        _print_summary(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
