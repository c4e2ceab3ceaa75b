"""TOML experiment configs: loading, strict key validation and model builders.

A config has the tables ``levy``, ``grf``, ``transform``, ``points``, ``run``
and optionally ``paper`` (run overrides applied at ``--scale paper``). PDE
configs add ``coefficient`` and ``problem``. Unknown tables or keys are an
error, so a misspelled option never falls back to a default silently.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import levy as levymod
from .grf import (GrfModel, SineKleBasis, TruncatedKLE, grid_sampler, kernel_from_dict)
from .subordinated import GslfSpec, Transform

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCALES = ("ci", "paper")

RUN_KEYS = {
    "command", "description", "seed", "workers",
    # fidelity of a single field or law
    "eps", "n_terms", "levels", "index", "grid_nodes",
    # characteristic function and densities
    "xi", "xi_max", "xi_count", "v_min", "v_max", "v_count", "gap_target", "gap_level",
    # sampling studies
    "samples", "bins", "l1_max", "repetitions", "sample_sizes", "estimator", "r2_min",
    "exponents", "time_exponents", "fit_max_time", "slope_band", "method",
    # L^p convergence
    "level_exponents", "coupling_nu", "reference_eps", "reference_terms", "p_values",
    "grid_cells", "fit_drop", "slope_tolerance",
    # finite elements
    "fem_levels", "reference_level", "modes", "mode", "level", "standard_band",
    "adaptive_margin",
}

TABLE_KEYS = {
    "levy": {"kind", "lam", "a", "b", "alpha", "beta", "delta"},
    "grf": {"kernel", "basis", "sampler", "n_terms", "step", "mean"},
    "transform": {"kind", "c", "cap", "offset", "scale", "horizon"},
    "points": {"x", "y"},
    "run": RUN_KEYS,
    "paper": RUN_KEYS,
    "coefficient": {"abar", "phi1", "phi2", "levy_eps"},
    "problem": {"layout", "f", "g_left", "g_right", "g_neumann", "rule"},
}
KERNEL_KEYS = {"kind", "nu", "r", "sigma2"}
BASIS_KEYS = {"c", "kappa", "nu"}
PHI_KEYS = {"kind", "scale"}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    name: str
    tables: dict
    source: str = ""
    scale: str = "ci"
    run: dict = field(default_factory=dict)

    def table(self, name: str, required: bool = True) -> dict:
        if name not in self.tables:
            if required:
                raise ConfigError(f"{self.name}: missing [{name}] table")
            return {}
        return self.tables[name]

    def get(self, key: str, default=None):
        return self.run.get(key, default)

    def require(self, key: str):
        if key not in self.run:
            raise ConfigError(f"{self.name}: [run] needs '{key}'")
        return self.run[key]


def shipped_configs() -> list:
    """Names of the configs installed with the package."""
    root = resources.files("gslf") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _resolve(name_or_path) -> tuple:
    p = Path(name_or_path)
    if p.is_file():
        return p.stem, p.read_text(encoding="utf-8"), str(p)
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    res = resources.files("gslf") / "configs" / f"{stem}.toml"
    if res.is_file():
        return stem, res.read_text(encoding="utf-8"), f"gslf:configs/{stem}.toml"
    raise ConfigError(f"config {name_or_path!r} is neither a file nor a shipped config "
                      f"(shipped: {', '.join(shipped_configs())})")


def validate(tables: dict, name: str = "config") -> None:
    problems = []
    for t, body in tables.items():
        if t not in TABLE_KEYS:
            problems.append(f"[{t}]")
            continue
        if not isinstance(body, dict):
            problems.append(f"{t} (not a table)")
            continue
        problems += [f"{t}.{k}" for k in sorted(set(body) - TABLE_KEYS[t])]
    grf = tables.get("grf", {})
    if isinstance(grf.get("kernel"), dict):
        problems += [f"grf.kernel.{k}" for k in sorted(set(grf["kernel"]) - KERNEL_KEYS)]
    if isinstance(grf.get("basis"), dict):
        problems += [f"grf.basis.{k}" for k in sorted(set(grf["basis"]) - BASIS_KEYS)]
    for phi in ("phi1", "phi2"):
        body = tables.get("coefficient", {}).get(phi)
        if isinstance(body, dict):
            problems += [f"coefficient.{phi}.{k}" for k in sorted(set(body) - PHI_KEYS)]
    if problems:
        raise ConfigError(f"{name}: unknown keys: {', '.join(problems)}")


def loads(text: str, name: str = "config", scale: str = "ci", source: str = "") -> Config:
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; expected one of {SCALES}")
    try:
        tables = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    validate(tables, name)
    run = copy.deepcopy(tables.get("run", {}))
    if scale == "paper":
        run.update(copy.deepcopy(tables.get("paper", {})))
    return Config(name, tables, source, scale, run)


def load(name_or_path, scale: str = "ci") -> Config:
    name, text, source = _resolve(name_or_path)
    return loads(text, name, scale, source)


# --------------------------------------------------------------------------
# builders


def build_levy(d: dict) -> levymod.LevyModel:
    try:
        return levymod.from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"[levy] missing parameter {exc}") from exc


def build_grf(d: dict) -> GrfModel:
    kernel = kernel_from_dict(d["kernel"]) if "kernel" in d else None
    basis = None
    if "basis" in d:
        b = d["basis"]
        basis = SineKleBasis(b["c"], b["kappa"], b["nu"])
    kind = d.get("sampler", "none")
    if kind == "none":
        sampler = None
    elif kind == "kle":
        if basis is None or "n_terms" not in d:
            raise ConfigError("[grf] sampler 'kle' needs 'basis' and 'n_terms'")
        sampler = TruncatedKLE(basis, int(d["n_terms"]))
    elif kind in ("circulant", "cholesky", "auto"):
        if kernel is None or "step" not in d:
            raise ConfigError(f"[grf] sampler {kind!r} needs 'kernel' and 'step'")
        sampler = grid_sampler(kernel, float(d["step"]), method=kind)
    else:
        raise ConfigError(f"[grf] unknown sampler {kind!r}")
    if kernel is None and basis is None:
        raise ConfigError("[grf] needs 'kernel' or 'basis'")
    return GrfModel(kernel, basis, float(d.get("mean", 0.0)), sampler)


def build_transform(d: dict) -> tuple:
    """``(Transform, horizon bound or None)``."""
    body = {k: v for k, v in d.items() if k != "horizon"}
    try:
        return Transform.from_dict(body), d.get("horizon")
    except KeyError as exc:
        raise ConfigError(f"[transform] missing parameter {exc}") from exc


def build_spec(cfg: Config) -> GslfSpec:
    transform, horizon = build_transform(cfg.table("transform"))
    return GslfSpec(build_levy(cfg.table("levy")), build_grf(cfg.table("grf")), transform, horizon)


def build_points(cfg: Config) -> tuple:
    pts = cfg.table("points")
    if "x" not in pts:
        raise ConfigError(f"{cfg.name}: [points] needs 'x'")
    x = tuple(float(v) for v in pts["x"])
    y = tuple(float(v) for v in pts["y"]) if "y" in pts else None
    return x, y


def build_problem(cfg: Config):
    from .fem.study import CoefficientSpec, FemProblem, Phi

    c = cfg.table("coefficient")
    transform, _ = build_transform(cfg.table("transform"))
    w = build_grf(cfg.table("grf"))
    coef = CoefficientSpec(float(c["abar"]), Phi(**c["phi1"]), Phi(**c["phi2"]), w, w, transform,
                           build_levy(cfg.table("levy")), c.get("levy_eps"))
    p = cfg.table("problem", required=False)
    return FemProblem(coef, p.get("layout", "all_dirichlet"), float(p.get("f", 10.0)),
                      float(p.get("g_left", 0.0)), float(p.get("g_right", p.get("g_left", 0.0))),
                      float(p.get("g_neumann", 0.0)), p.get("rule", "centroid"))
