"""Run configuration: one TOML file drives every pipeline mode.

Sections: [model] (the SDE and its start point), [chaos], [fem], [solver],
[time] (parabolic horizon/steps), [mc], and [run] (index sets, outputs).
Validation errors carry the dotted key path of the offending entry.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .galerkin import SolverConfig, ThetaSchemeConfig
from .model import OuModel, SdeModel

MODES = ("elliptic", "parabolic", "mc-exit", "mc-survival", "compare")
QUANTITIES = ("exit_time", "survival")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _need(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"missing required key {path}.{key}")
    return section[key]


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class McConfig:
    n_outer: int
    m_inner: int
    dt: float
    seed: int
    max_steps: int = 10 ** 8
    threads: int = 1


@dataclass(frozen=True)
class ChaosConfig:
    truncation: str = "total"
    p_max: int = 10
    quad_nodes: int | None = None


@dataclass(frozen=True)
class RunConfig:
    model: SdeModel
    x0: float
    mode: str | None
    fem_cells: int
    chaos: ChaosConfig
    solver: SolverConfig
    time: ThetaSchemeConfig | None
    mc: McConfig | None
    index_sets: tuple[tuple[int, ...], ...]
    quantity: str | None
    write_coeffs: bool = False
    write_samples: bool = False
    figures: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    def require_time(self, context: str) -> ThetaSchemeConfig:
        if self.time is None:
            raise ConfigError(f"[time] section is required for {context}")
        return self.time

    def require_mc(self, context: str) -> McConfig:
        if self.mc is None:
            raise ConfigError(f"[mc] section is required for {context}")
        return self.mc

    def resolve_quantity(self) -> str:
        if self.quantity is not None:
            return self.quantity
        return "survival" if self.time is not None else "exit_time"


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig from a parsed TOML document."""
    if "model" not in data:
        raise ConfigError("missing required section [model]")
    msec = data["model"]
    name = msec.get("name", "ou")
    if name != "ou":
        raise ConfigError(f"model.name: unknown model {name!r} (available: ou)")
    domain = msec.get("domain", [0.0, 10.0])
    if (not isinstance(domain, (list, tuple)) or len(domain) != 2
            or not domain[0] < domain[1]):
        raise ConfigError(f"model.domain must be [lo, hi] with lo < hi, got {domain!r}")
    try:
        model = OuModel(
            mu1=_as_float(_need(msec, "mu1", "model"), "model.mu1"),
            sigma1=_as_float(_need(msec, "sigma1", "model"), "model.sigma1"),
            mu2=_as_float(_need(msec, "mu2", "model"), "model.mu2"),
            sigma2=_as_float(_need(msec, "sigma2", "model"), "model.sigma2"),
            domain=(float(domain[0]), float(domain[1])),
        )
    except ValueError as err:
        raise ConfigError(f"model: {err}") from None
    x0 = _as_float(_need(msec, "x0", "model"), "model.x0")
    if not model.domain[0] <= x0 <= model.domain[1]:
        raise ConfigError(f"model.x0 = {x0} outside the closed domain {model.domain}")

    mode = data.get("mode")
    if mode is not None and mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    csec = data.get("chaos", {})
    chaos = ChaosConfig(
        truncation=csec.get("truncation", "total"),
        p_max=_as_int(csec.get("p_max", 10), "chaos.p_max"),
        quad_nodes=(_as_int(csec["quad_nodes"], "chaos.quad_nodes")
                    if "quad_nodes" in csec else None),
    )
    if chaos.truncation not in ("total", "tensor"):
        raise ConfigError(f"chaos.truncation must be 'total' or 'tensor', got {chaos.truncation!r}")
    if chaos.p_max < 0:
        raise ConfigError("chaos.p_max must be >= 0")

    fsec = data.get("fem", {})
    fem_cells = _as_int(fsec.get("N", 1000), "fem.N")
    if fem_cells < 2:
        raise ConfigError("fem.N must be >= 2")

    ssec = data.get("solver", {})
    try:
        solver = SolverConfig(
            tol=_as_float(ssec.get("tol", 1e-10), "solver.tol"),
            max_iter=(_as_int(ssec["max_iter"], "solver.max_iter")
                      if ssec.get("max_iter") else None),
            method=ssec.get("method", "krylov"),
        )
    except ValueError as err:
        raise ConfigError(f"solver: {err}") from None

    time_cfg = None
    if "time" in data:
        tsec = data["time"]
        try:
            time_cfg = ThetaSchemeConfig(
                horizon=_as_float(_need(tsec, "T", "time"), "time.T"),
                n_steps=_as_int(_need(tsec, "M", "time"), "time.M"),
                theta=_as_float(tsec.get("theta", 0.5), "time.theta"),
            )
        except ValueError as err:
            raise ConfigError(f"time: {err}") from None

    mc_cfg = None
    if "mc" in data:
        mcsec = data["mc"]
        mc_cfg = McConfig(
            n_outer=_as_int(_need(mcsec, "N", "mc"), "mc.N"),
            m_inner=_as_int(_need(mcsec, "M", "mc"), "mc.M"),
            dt=_as_float(_need(mcsec, "dt", "mc"), "mc.dt"),
            seed=_as_int(mcsec.get("seed", 0), "mc.seed"),
            max_steps=_as_int(mcsec.get("max_steps", 10 ** 8), "mc.max_steps"),
            threads=_as_int(mcsec.get("threads", 1), "mc.threads"),
        )
        if mc_cfg.n_outer < 2 or mc_cfg.m_inner < 2:
            raise ConfigError("mc.N and mc.M must be >= 2")
        if mc_cfg.dt <= 0:
            raise ConfigError("mc.dt must be positive")

    rsec = data.get("run", {})
    raw_sets = rsec.get("index_sets", [[1], [2]])
    index_sets = []
    for entry in raw_sets:
        if not isinstance(entry, (list, tuple)) or not entry:
            raise ConfigError(f"run.index_sets entries must be nonempty lists, got {entry!r}")
        I = tuple(sorted(_as_int(j, "run.index_sets[*]") for j in entry))
        if not set(I) <= set(range(1, model.n_params + 1)):
            raise ConfigError(f"run.index_sets entry {list(I)} not a subset of 1..{model.n_params}")
        index_sets.append(I)
    quantity = rsec.get("quantity")
    if quantity is not None and quantity not in QUANTITIES:
        raise ConfigError(f"run.quantity must be one of {QUANTITIES}, got {quantity!r}")

    return RunConfig(
        model=model,
        x0=x0,
        mode=mode,
        fem_cells=fem_cells,
        chaos=chaos,
        solver=solver,
        time=time_cfg,
        mc=mc_cfg,
        index_sets=tuple(index_sets),
        quantity=quantity,
        write_coeffs=bool(rsec.get("write_coeffs", False)),
        write_samples=bool(rsec.get("write_samples", False)),
        figures=bool(rsec.get("figures", True)),
        raw=data,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return config_from_dict(data)
