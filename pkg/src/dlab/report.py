"""Scan reports: power-law fits, CSV tables and JSON sidecars."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Fit:
    slope: float
    stderr: float
    r_squared: float
    intercept: float


def fit_exponent(points: Sequence[tuple]) -> Fit:
    """Least-squares fit of ``log(value)`` against ``log(param)``.

    Needs at least three points with positive coordinates.  Constant data give
    slope 0 and ``r_squared = 1`` (the fit is exact).
    """
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("a power-law fit needs at least 3 points")
    if any(a <= 0 or b <= 0 or not math.isfinite(a) or not math.isfinite(b) for a, b in pts):
        raise ValueError("power-law fit requires positive finite parameters and values")
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("all scan parameters coincide")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if sst <= 1e-30 * max(1.0, float(np.sum(y**2))) else 1.0 - ssr / sst
    dof = len(pts) - 2
    stderr = float(np.sqrt(ssr / dof / sxx)) if dof > 0 else float("nan")
    return Fit(slope=slope, stderr=stderr, r_squared=float(r2), intercept=intercept)


@dataclass(frozen=True)
class ScanPoint:
    """One scan parameter with its per-trial measurements."""

    param: float
    trials: tuple

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def mean(self) -> float:
        return float(np.mean(self.trials))

    @property
    def geo_mean(self) -> float:
        t = np.asarray(self.trials, dtype=float)
        if np.any(t <= 0):
            return float("nan")
        return float(np.exp(np.mean(np.log(t))))

    @property
    def stderr(self) -> float:
        """Standard error of ``log(value)`` across trials (0 for a single trial)."""
        t = np.asarray(self.trials, dtype=float)
        if len(t) < 2 or np.any(t <= 0):
            return 0.0
        return float(np.std(np.log(t), ddof=1) / np.sqrt(len(t)))


def _jsonable(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


SIDECAR_SCHEMA = 1


@dataclass
class ScanReport:
    """Result of a decay scan.

    ``sided`` selects the pass rule: ``"two-sided"`` means
    ``|slope - predicted| <= tolerance``; ``"upper"`` means
    ``slope <= predicted + tolerance`` (decay at least as fast as predicted, up to
    the tolerance); ``"threshold"`` means ``slope <= tolerance`` with
    ``tolerance`` the absolute bound.  Optional extra requirements
    (``min_r_squared``, ``require_decreasing`` and the named booleans in
    ``checks``) also enter ``passed``.
    """

    name: str
    points: list
    predicted: float
    tolerance: float
    sided: str = "upper"
    min_r_squared: float | None = None
    require_decreasing: bool = False
    param_name: str = "param"
    fit: Fit | None = None
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sided not in ("two-sided", "upper", "threshold"):
            raise ValueError(f"unknown pass rule {self.sided!r}")
        if self.fit is None and "degenerate" not in self.flags:
            values = [(p.param, p.geo_mean) for p in self.points]
            if len(values) < 3:
                self.flags.append("underdetermined")
            else:
                try:
                    self.fit = fit_exponent(values)
                except ValueError as exc:
                    self.flags.append(f"fit-rejected: {exc}")

    @property
    def fitted_slope(self) -> float:
        return self.fit.slope if self.fit else float("nan")

    @property
    def strictly_decreasing(self) -> bool:
        v = [p.geo_mean for p in self.points]
        return all(b < a for a, b in zip(v, v[1:]))

    @property
    def passed(self) -> bool:
        if self.fit is None:
            return False
        s = self.fit.slope
        if self.sided == "two-sided":
            ok = abs(s - self.predicted) <= self.tolerance
        elif self.sided == "upper":
            ok = s <= self.predicted + self.tolerance
        else:
            ok = s <= self.tolerance
        if self.min_r_squared is not None:
            ok = ok and self.fit.r_squared >= self.min_r_squared
        if self.require_decreasing:
            ok = ok and self.strictly_decreasing
        return bool(ok and all(self.checks.values()))

    def summary(self) -> dict:
        return {
            "schema": SIDECAR_SCHEMA,
            "name": self.name,
            "fitted_slope": self.fitted_slope,
            "stderr": self.fit.stderr if self.fit else float("nan"),
            "r_squared": self.fit.r_squared if self.fit else float("nan"),
            "predicted": float(self.predicted),
            "tolerance": float(self.tolerance),
            "rule": self.sided,
            "min_r_squared": self.min_r_squared,
            "require_decreasing": self.require_decreasing,
            "pass": self.passed,
            "flags": list(self.flags),
            "checks": dict(self.checks),
            "extra": self.extra,
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "value", "n_trials", "geo_mean", "stderr"])
            for p in self.points:
                w.writerow([repr(float(p.param)), repr(p.mean), p.n_trials, repr(p.geo_mean), repr(p.stderr)])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(_jsonable(self.summary()), indent=2, sort_keys=True) + "\n")
        return path

    def write(self, stem) -> tuple:
        """Write ``<stem>.csv`` and ``<stem>.json``."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        return self.write_csv(stem.with_suffix(".csv")), self.write_json(stem.with_suffix(".json"))


def read_scan_csv(path) -> list:
    with Path(path).open() as fh:
        return [
            {k: (int(v) if k == "n_trials" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
