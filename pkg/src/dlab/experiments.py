"""Experiment registry: default configurations, validation and runners.

Every experiment is described by a JSON config::

    {"experiment": "bilinear",
     "grid": {"n": 2, "L": 96.0, "M": 128},
     "params": {...},
     "seed": 0,
     "output_dir": "out/bilinear"}

Missing ``grid`` / ``params`` entries take the registry defaults, which are the
reference settings used by the acceptance suite.  Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .grid import Grid
from .norms import LebesguePair, admissible_check


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field name."""

    def __init__(self, path: str, message: str, line: int | None = None, source: str | None = None):
        self.path, self.message, self.line, self.source = path, message, line, source
        where = f"{source or '<config>'}:{line if line is not None else '?'}"
        super().__init__(f"{where}: field '{path}': {message}")


@dataclass
class Outcome:
    """What a runner returns: pass flag, summary dict and written files."""

    passed: bool
    summary: dict
    files: list = field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    id: str
    description: str
    anchor: str
    grid: dict
    params: dict
    runner: Callable
    validator: Callable


@dataclass
class ExperimentConfig:
    experiment: str
    grid: dict
    params: dict
    seed: int = 0
    output_dir: str = "out"

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "grid": self.grid,
            "params": self.params,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def make_grid(self) -> Grid:
        g = self.grid
        return Grid(int(g["n"]), float(g["L"]), int(g["M"]))


# ---------------------------------------------------------------------------
# helpers shared by validators
# ---------------------------------------------------------------------------
def _num(x, path):
    try:
        if isinstance(x, str):
            return float(Fraction(x))
        if isinstance(x, bool):
            raise TypeError
        return float(x)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(path, f"expected a number, got {x!r}")


def _pos(x, path):
    v = _num(x, path)
    if not v > 0:
        raise ConfigError(path, f"must be positive, got {x!r}")
    return v


def _int(x, path, lo=None):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(path, f"expected an integer, got {x!r}")
    if lo is not None and x < lo:
        raise ConfigError(path, f"must be >= {lo}, got {x}")
    return x


def _dyadic_list(xs, path, lo=None):
    if not isinstance(xs, list) or not xs:
        raise ConfigError(path, "expected a non-empty list")
    out = []
    for i, x in enumerate(xs):
        v = _pos(x, f"{path}[{i}]")
        e = math.log2(v)
        if abs(e - round(e)) > 1e-12:
            raise ConfigError(f"{path}[{i}]", f"must be a power of two, got {x!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"{path}[{i}]", f"must be >= {lo}, got {x!r}")
        out.append(v)
    return out


def _pair(x, path, n=None, admissible=True):
    try:
        p = LebesguePair.parse(x)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(path, f"bad exponent pair {x!r}: {exc}")
    if admissible and n is not None and not admissible_check(p, n):
        raise ConfigError(path, f"pair {p} is not admissible in dimension {n}")
    return p


def _grid_check(cfg: ExperimentConfig, n_allowed=None):
    g = cfg.grid
    for k in ("n", "L", "M"):
        if k not in g:
            raise ConfigError(f"grid.{k}", "missing")
    _int(g["n"], "grid.n")
    _int(g["M"], "grid.M")
    _pos(g["L"], "grid.L")
    if n_allowed is not None and g["n"] not in n_allowed:
        raise ConfigError("grid.n", f"must be one of {sorted(n_allowed)}, got {g['n']}")
    try:
        return cfg.make_grid()
    except ValueError as exc:
        raise ConfigError("grid", str(exc))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------
def _geometry(p):
    from .interaction import CollisionGeometry

    return CollisionGeometry(
        width=float(p["width"]), kappa=float(p["window_factor"]), samples=int(p["samples"]),
        speed=float(p.get("speed", 1.5)), fast_radius=float(p.get("fast_radius", 1.0)),
    )


def _write_report(report, out: Path, stem: str) -> list:
    return list(report.write(out / stem))


def _v_bilinear(cfg):
    g = _grid_check(cfg, {2, 3})
    p = cfg.params
    _pair(p["pair"], "params.pair", g.n)
    N1 = _dyadic_list([p["N1"]], "params.N1")[0]
    N2 = _dyadic_list(p["N2"], "params.N2", lo=N1)
    _int(p["trials"], "params.trials", 1)
    _int(p["samples"], "params.samples", 2)
    for k in ("width", "window_factor"):
        _pos(p[k], f"params.{k}")
    if 2 * N1 > g.resolvable:
        raise ConfigError("params.N1", f"A(N1) not resolved on this grid (resolvable {g.resolvable:.4g})")
    if min(_pos(p.get("fast_radius", 1.0), "params.fast_radius"), min(N2) / 2) > g.resolvable:
        raise ConfigError("params.fast_radius", "fast envelope not resolved on this grid")


def _r_bilinear(cfg, out: Path, jobs: int) -> Outcome:
    from .interaction import bilinear_decay_scan

    p = cfg.params
    rep = bilinear_decay_scan(
        cfg.make_grid(), p["pair"], p["N1"], p["N2"], trials=p["trials"], seed=cfg.seed,
        geometry=_geometry(p), tolerance=p["tolerance"], min_r_squared=p.get("min_r_squared"), jobs=jobs,
    )
    return Outcome(rep.passed, rep.summary(), _write_report(rep, out, "bilinear"))


def _v_trilinear(cfg):
    g = _grid_check(cfg, {3})
    p = cfg.params
    if not isinstance(p["pairs"], list) or not p["pairs"]:
        raise ConfigError("params.pairs", "expected a non-empty list of dual pairs")
    for i, pr in enumerate(p["pairs"]):
        _pair(pr, f"params.pairs[{i}]", admissible=False)
    if p["pattern"] not in ("high1", "high2", "high3"):
        raise ConfigError("params.pattern", "must be high1, high2 or high3")
    _dyadic_list(p["scales"], "params.scales", lo=1)
    _int(p["trials"], "params.trials", 1)
    _int(p["samples"], "params.samples", 2)
    if 2.0 > g.resolvable:
        raise ConfigError("grid.L", "A(1) not resolved on this grid")


def _r_trilinear(cfg, out: Path, jobs: int) -> Outcome:
    from .interaction import trilinear_decay_scan

    p = cfg.params
    reps = trilinear_decay_scan(
        cfg.make_grid(), p["pairs"], p["pattern"], p["scales"], trials=p["trials"], seed=cfg.seed,
        geometry=_geometry(p), tolerance=p["tolerance"], jobs=jobs,
    )
    files, summary = [], {}
    for i, (name, rep) in enumerate(reps.items()):
        files += _write_report(rep, out, f"trilinear_pair{i}")
        summary[name] = rep.summary()
    return Outcome(all(r.passed for r in reps.values()), summary, files)


def _v_sharpness(cfg):
    g = cfg.grid
    _int(g.get("n"), "grid.n")
    _int(g.get("M"), "grid.M")
    p = cfg.params
    _pair(p["pair"], "params.pair", g["n"])
    rhos = p["rho"]
    if not isinstance(rhos, list) or len(rhos) < 1:
        raise ConfigError("params.rho", "expected a non-empty list")
    from .interaction import cap_grid

    for i, r in enumerate(rhos):
        rho = _pos(r, f"params.rho[{i}]")
        if not rho < 1:
            raise ConfigError(f"params.rho[{i}]", "must be < 1")
        try:
            grid = cap_grid(g["n"], rho, g["M"], _pos(p["box_factor"], "params.box_factor"))
        except ValueError as exc:
            raise ConfigError("grid", str(exc))
        if rho**2 < 4 * grid.dk:
            raise ConfigError("params.box_factor", "cap too thin for the box: increase box_factor")
        if max(rho, 1 + rho**2) - 1 > grid.resolvable or rho > grid.resolvable:
            raise ConfigError(f"params.rho[{i}]", f"cap not resolved with M={g['M']}")


def _r_sharpness(cfg, out: Path, jobs: int) -> Outcome:
    from .interaction import sharpness_scan

    p = cfg.params
    rep = sharpness_scan(
        cfg.grid["n"], p["pair"], [_num(r, "rho") for r in p["rho"]], M=cfg.grid["M"],
        box_factor=p["box_factor"], time_factor=p["time_factor"], samples=p["samples"],
        tolerance=p["tolerance"], jobs=jobs,
    )
    return Outcome(rep.passed, rep.summary(), _write_report(rep, out, "sharpness"))


def _v_theorem1(cfg):
    g = _grid_check(cfg, {2, 3})
    p = cfg.params
    _pair(p["pair"], "params.pair", g.n)
    _num(p["s"], "params.s")
    _dyadic_list(p["N2"], "params.N2", lo=1)
    _int(p["trials"], "params.trials", 1)
    if 2.0 > g.resolvable:
        raise ConfigError("grid.L", "A(1) not resolved on this grid")


def _r_theorem1(cfg, out: Path, jobs: int) -> Outcome:
    from .interaction import theorem1_ratio_scan

    p = cfg.params
    rep = theorem1_ratio_scan(
        cfg.make_grid(), p["pair"], float(p["s"]), p["N2"], trials=p["trials"], seed=cfg.seed,
        geometry=_geometry(p), tolerance=p["tolerance"], jobs=jobs,
    )
    return Outcome(rep.passed, rep.summary(), _write_report(rep, out, "theorem1"))


def _v_wavepacket(cfg):
    g = cfg.grid
    if g.get("n") != 1 and g.get("n") != 2:
        raise ConfigError("grid.n", "wave packets are limited to n = 1, 2")
    p = cfg.params
    lam = _pos(p["lam"], "params.lam")
    if lam < 64:
        raise ConfigError("params.lam", "must be >= 64")
    for i, l in enumerate(p["offtube_lams"]):
        if _pos(l, f"params.offtube_lams[{i}]") < 64:
            raise ConfigError(f"params.offtube_lams[{i}]", "must be >= 64")
    d = _pos(p["delta"], "params.delta")
    if d > 0.5:
        raise ConfigError("params.delta", "must lie in (0, 1/2]")
    _int(p["trials"], "params.trials", 1)
    _int(p["cells"], "params.cells", 16)


def _r_wavepacket(cfg, out: Path, jobs: int) -> Outcome:
    from .wavepackets import wavepacket_experiment

    res = wavepacket_experiment(cfg.grid["n"], cfg.params, cfg.seed, out)
    return Outcome(res["pass"], res, res.pop("files"))


def _nls_config(cfg, T=None, dt=None):
    from .nls import Nonlinearity, NlsConfig

    p = cfg.params
    return NlsConfig(
        cfg.make_grid(), Nonlinearity(p.get("kind", "hartree"), float(p["kappa"])),
        dt=float(dt if dt is not None else p["dt"]), T=float(T if T is not None else p["T"]),
        save_stride=int(p.get("save_stride", 1)),
    )


def _v_nls(cfg):
    g = _grid_check(cfg, {1, 2, 3})
    p = cfg.params
    if p.get("kind", "hartree") == "hartree" and g.n < 3:
        raise ConfigError("grid.n", "the Hartree nonlinearity needs n >= 3")
    _pos(p["T"], "params.T")
    dts = p["dt"] if isinstance(p["dt"], list) else [p["dt"]]
    for i, dt in enumerate(dts):
        try:
            _nls_config(cfg, dt=_pos(dt, f"params.dt[{i}]"))
        except ValueError as exc:
            raise ConfigError(f"params.dt[{i}]", str(exc))


def _r_nls(cfg, out: Path, jobs: int) -> Outcome:
    from .nls import nls_experiment

    res = nls_experiment(cfg, out)
    return Outcome(res["pass"], res, res.pop("files"))


def _v_smoothing(cfg):
    g = _grid_check(cfg, {3})
    p = cfg.params
    s = _num(p["s"], "params.s")
    if not 0 < s < 1:
        raise ConfigError("params.s", "must lie in (0, 1)")
    for i, K in enumerate(p["K"]):
        if _pos(K, f"params.K[{i}]") > g.resolvable:
            raise ConfigError(f"params.K[{i}]", f"exceeds resolved band {g.resolvable:.4g}")
    try:
        _nls_config(cfg)
    except ValueError as exc:
        raise ConfigError("params", str(exc))


def _r_smoothing(cfg, out: Path, jobs: int) -> Outcome:
    from .nls import smoothing_scan

    p = cfg.params
    rep = smoothing_scan(float(p["s"]), p["K"], _nls_config(cfg), seed=cfg.seed, amplitude=float(p["amplitude"]))
    return Outcome(rep.passed, rep.summary(), _write_report(rep, out, "smoothing"))


def _v_imethod(cfg):
    g = _grid_check(cfg, {3})
    p = cfg.params
    s = _num(p["s"], "params.s")
    if not 0 < s < 1:
        raise ConfigError("params.s", "must lie in (0, 1)")
    for i, N in enumerate(_dyadic_list(p["N"], "params.N", lo=4)):
        if N > g.resolvable:
            raise ConfigError(f"params.N[{i}]", f"N={N:g} beyond resolved band {g.resolvable:.4g}")
    cL = _pos(p["control_L"], "params.control_L")
    if Grid(g.n, cL, g.M).resolvable < max(p["N"]):
        raise ConfigError("params.control_L", "control box too large to resolve the largest N")
    if _pos(p["K"], "params.K") > g.resolvable:
        raise ConfigError("params.K", "datum cutoff beyond resolved band")
    try:
        _nls_config(cfg)
    except ValueError as exc:
        raise ConfigError("params", str(exc))


def _r_imethod(kind):
    def run(cfg, out: Path, jobs: int) -> Outcome:
        from .imethod import imethod_experiment

        res = imethod_experiment(cfg, kind, out)
        return Outcome(res["pass"], res, res.pop("files"))

    return run


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------
_COLLISION = {"width": 1.5, "window_factor": 2.0, "samples": 65, "speed": 1.5, "fast_radius": 1.0}

REGISTRY: dict = {}


def _register(e: Experiment):
    REGISTRY[e.id] = e


_register(Experiment(
    "bilinear", "decay of ||e^{itD}f e^{itD}g|| in L^{q/2}L^{r/2} against N2 (f on A(N1), g fast)",
    "bilinear Strichartz gain (1 - 2/r)",
    {"n": 2, "L": 96.0, "M": 128},
    {"pair": "4,4", "N1": 1, "N2": [4, 8, 16, 32], "trials": 8, "tolerance": 0.15, "min_r_squared": 0.95, **_COLLISION},
    _r_bilinear, _v_bilinear,
))
_register(Experiment(
    "trilinear", "decay of the Hartree trilinear norm against max N / min N",
    "trilinear Hartree gain 1/2",
    {"n": 3, "L": 48.0, "M": 64},
    {"pairs": ["1,2", "2,6/5"], "pattern": "high3", "scales": [2, 4, 8, 16], "trials": 8, "tolerance": 0.15,
     **{**_COLLISION, "window_factor": 1.0, "samples": 33}},
    _r_trilinear, _v_trilinear,
))
_register(Experiment(
    "sharpness", "squashed-cap lower bound: bilinear norm against cap width rho",
    "cap exponent n+1-2(n+1)/r-4/q",
    {"n": 2, "M": 256},
    {"pair": "4,4", "rho": [0.25, 0.125, 0.0625], "box_factor": 40.0, "time_factor": 6.0, "samples": 65,
     "tolerance": 0.2},
    _r_sharpness, _v_sharpness,
))
_register(Experiment(
    "theorem1", "weighted ratio ||FG|| / (||f||_{H^s} ||g||_{H^-s}) against N2",
    "weighted bilinear bound for |s| < 1 - 2/r",
    {"n": 3, "L": 48.0, "M": 64},
    {"pair": "8/3,4", "s": 0.25, "N2": [1, 2, 4, 8, 16, 32], "trials": 2, "tolerance": 0.15,
     **{**_COLLISION, "window_factor": 1.0, "samples": 33}},
    _r_theorem1, _v_theorem1,
))
_register(Experiment(
    "wavepacket", "packet reconstruction error and off-tube mass against lambda",
    "wave-packet reconstruction and tube localisation",
    {"n": 1},
    {"lam": 256, "trials": 20, "cells": 32, "offtube_lams": [256, 1024], "delta": 0.25, "velocity": 0.5,
     "time_samples": 129, "reconstruction_tol": 1e-8},
    _r_wavepacket, _v_wavepacket,
))
_register(Experiment(
    "nls", "Strang-split Hartree NLS: mass drift and energy-drift Richardson ratio",
    "mass and energy conservation",
    {"n": 3, "L": 8.0, "M": 64},
    {"kind": "hartree", "kappa": 1.0, "T": 0.5, "dt": [0.01, 0.005], "save_stride": 5, "amplitude": 1.0,
     "width": 1.0, "tilt": 0.5, "mass_tol": 1e-10, "ratio_range": [3.0, 5.0]},
    _r_nls, _v_nls,
))
_register(Experiment(
    "smoothing", "growth of sup_t ||u - e^{itD}u0||_{H^1} with the cutoff K of rough data",
    "nonlinear smoothing above the regularity threshold",
    {"n": 3, "L": 5.5, "M": 64},
    {"s": 0.75, "K": [8, 16, 32], "kappa": 1.0, "amplitude": 0.3, "dt": 0.0025, "T": 0.5, "save_stride": 20},
    _r_smoothing, _v_smoothing,
))
_IMETHOD = {"s": 0.75, "K": 24, "N": [8, 16, 32], "kappa": 1.0, "density": 1.0, "dt": 0.00125, "T": 0.5,
            "save_stride": 40, "control_L": 5.6, "control_amplitude": 0.02, "control_tol": 1e-10}
_register(Experiment(
    "imethod-energy", "decay in N of |E(Iu)(T) - E(Iu0)| along one rough solution",
    "almost conservation of the modified energy",
    {"n": 3, "L": 2.8, "M": 64},
    dict(_IMETHOD),
    _r_imethod("energy_deviation"), _v_imethod,
))
_register(Experiment(
    "imethod-error", "decay in N of the Morawetz error term along one rough solution",
    "interaction Morawetz error bound",
    {"n": 3, "L": 2.8, "M": 64},
    dict(_IMETHOD),
    _r_imethod("error_term"), _v_imethod,
))


def list_experiments() -> list:
    """``(id, description, anchor)`` rows in registry order."""
    return [(e.id, e.description, e.anchor) for e in REGISTRY.values()]


# ---------------------------------------------------------------------------
# loading / validation
# ---------------------------------------------------------------------------
def _line_of(text: str | None, path: str) -> int | None:
    if not text:
        return None
    leaf = re.sub(r"\[\d+\]$", "", path.split(".")[-1])
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{leaf}"' in line:
            return i
    return None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides (values parsed as JSON when possible)."""
    raw = copy.deepcopy(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot descend into a non-object")
        node[parts[-1]] = _parse_value(val)
    return raw


def build_config(raw: dict, text: str | None = None, source: str | None = None) -> ExperimentConfig:
    """Merge with defaults and validate; raises :class:`ConfigError` with a line number."""
    try:
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        allowed = {"experiment", "grid", "params", "seed", "output_dir"}
        for k in raw:
            if k not in allowed:
                raise ConfigError(k, f"unknown top-level field (allowed: {sorted(allowed)})")
        eid = raw.get("experiment")
        if eid not in REGISTRY:
            raise ConfigError("experiment", f"unknown experiment id {eid!r}; known: {list(REGISTRY)}")
        exp = REGISTRY[eid]
        grid = dict(exp.grid)
        for k, v in (raw.get("grid") or {}).items():
            if k not in ("n", "L", "M"):
                raise ConfigError(f"grid.{k}", "unknown grid field (allowed: n, L, M)")
            grid[k] = v
        params = copy.deepcopy(exp.params)
        for k, v in (raw.get("params") or {}).items():
            if k not in params:
                raise ConfigError(f"params.{k}", f"unknown parameter for {eid} (allowed: {sorted(params)})")
            params[k] = v
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
        out = raw.get("output_dir", f"out/{eid}")
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir", "must be a non-empty string")
        cfg = ExperimentConfig(eid, grid, params, seed, out)
        try:
            exp.validator(cfg)
        except KeyError as exc:
            raise ConfigError(f"params.{exc.args[0]}", "missing")
        return cfg
    except ConfigError as err:
        if err.line is None:
            err = ConfigError(err.path, err.message, _line_of(text, err.path), source)
        elif err.source is None:
            err = ConfigError(err.path, err.message, err.line, source)
        raise err


def load_config(path, overrides=None) -> ExperimentConfig:
    """Read a JSON config (or a run's ``manifest.json``) and apply ``--set`` overrides."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", exc.msg, exc.lineno, str(path))
    if isinstance(raw, dict) and "manifest_version" in raw and "config" in raw:
        raw = raw["config"]  # re-run from a manifest
    raw = apply_overrides(raw, overrides)
    return build_config(raw, text, str(path))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Outcome:
    """Run, write results plus ``manifest.json``; returns the :class:`Outcome`."""
    import time

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outcome = REGISTRY[cfg.experiment].runner(cfg, out, jobs)
    wall = time.perf_counter() - t0
    manifest = {
        "manifest_version": 1,
        "config": cfg.as_dict(),
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "pass": bool(outcome.passed),
        "files": sorted(Path(f).name for f in outcome.files),
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    outcome.files.append(mpath)
    return outcome
