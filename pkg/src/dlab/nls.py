"""Defocusing Hartree and power-type NLS on the torus by Strang splitting.

``i u_t + Delta u = V(u) u`` with ``V(u) = kappa |nabla|^{2-n} |u|^2`` (Hartree,
``n >= 3``, zero mode of ``|u|^2`` removed) or ``V(u) = kappa |u|^{4/n}``
(mass-critical power type).  One step is

    half free step -> multiply by exp(-i dt V(w)) -> half free step.

The middle substep is the exact flow of ``i u_t = V(u) u`` because ``|u|`` is
invariant under it, so mass is conserved to roundoff and the scheme is
time-reversible.  The conserved energy is

    E(u) = 1/2 ||nabla u||^2 + omega * int V(u) |u|^2,

with ``omega = 1/4`` (Hartree) or ``n / (4 + 2n)`` (power type).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Field, Grid, SpacetimeField, iter_propagate, save_field
from .littlewood_paley import keyed_normal
from .norms import sobolev_norm
from .report import SIDECAR_SCHEMA, ScanPoint, ScanReport


@dataclass(frozen=True)
class Nonlinearity:
    """``kind`` is ``"hartree"`` or ``"power"``; ``kappa`` is the coupling (``> 0`` defocusing, ``< 0`` focusing)."""

    kind: str = "hartree"
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("hartree", "power"):
            raise ValueError(f"unknown nonlinearity {self.kind!r}")
        if not np.isfinite(self.kappa):
            raise ValueError("coupling kappa must be finite")

    def omega(self, n: int) -> float:
        return 0.25 if self.kind == "hartree" else n / (4.0 + 2.0 * n)


@dataclass(frozen=True)
class NlsConfig:
    grid: Grid
    nonlinearity: Nonlinearity = Nonlinearity()
    dt: float = 1e-3
    T: float = 0.1
    save_stride: int = 1
    blowup_factor: float = 1e6

    def __post_init__(self):
        if self.nonlinearity.kind == "hartree" and self.grid.n < 3:
            raise ValueError("the Hartree potential |nabla|^(2-n)|u|^2 needs n >= 3")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.dt > self.T:
            raise ValueError("time step dt exceeds the final time T")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("T must be an integer multiple of dt")
        if self.save_stride < 1:
            raise ValueError("save_stride must be >= 1")
        if round(steps) % self.save_stride:
            raise ValueError("save_stride must divide the number of steps T/dt")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


# ---------------------------------------------------------------------------
# raw-array kernels
# ---------------------------------------------------------------------------
class _Kernels:
    """Precomputed symbols for one grid / nonlinearity."""

    def __init__(self, grid: Grid, nl: Nonlinearity):
        self.grid, self.nl = grid, nl
        n, M = grid.n, grid.M
        xi = grid.freq_abs()
        self.xi2 = xi * xi
        self.keep = [np.r_[0 : M // 2, 2 * M - M // 2 : 2 * M] for _ in range(n)]
        # spectral indices of the coarse band inside the padded rfft layout
        self.crop = tuple(np.r_[0 : M // 2, 2 * M - M // 2 : 2 * M] for _ in range(n - 1)) + (np.arange(M // 2 + 1),)
        if nl.kind == "hartree":
            kr = grid.dk * np.abs(np.fft.rfftfreq(M, d=1.0 / M))
            comps = [grid.k_axis.reshape([-1 if j == a else 1 for a in range(n)]) for j in range(n - 1)]
            last = kr.reshape([1] * (n - 1) + [-1])
            r = np.sqrt(sum(c * c for c in comps) + last * last)
            self.riesz_r = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0) ** (n - 2), 0.0)
            # zero the Nyquist planes so the truncated density stays Hermitian
            nyq = np.zeros(r.shape, dtype=bool)
            for j in range(n - 1):
                sl = [slice(None)] * n
                sl[j] = M // 2
                nyq[tuple(sl)] = True
            nyq[..., M // 2] = True
            self.riesz_r[nyq] = 0.0
            self.nyq = nyq

    def density_hat(self, uh: np.ndarray) -> np.ndarray:
        """rfft (coarse, unnormalised) of the alias-free ``|u|^2``."""
        g = self.grid
        n, M = g.n, g.M
        big = np.zeros((2 * M,) * n, dtype=complex)
        big[np.ix_(*self.keep)] = uh
        up = sfft.ifftn(big) * (2.0**n)
        rho_big = sfft.rfftn((up.real**2 + up.imag**2))
        rh = rho_big[np.ix_(*self.crop)] / (2.0**n)
        rh[self.nyq] = 0.0
        return rh

    def potential(self, w: np.ndarray, wh: np.ndarray | None = None) -> np.ndarray:
        nl = self.nl
        if nl.kappa == 0:
            return np.zeros(w.shape)
        if nl.kind == "power":
            return nl.kappa * np.abs(w) ** (4.0 / self.grid.n)
        if wh is None:
            wh = sfft.fftn(w)
        return nl.kappa * sfft.irfftn(self.riesz_r * self.density_hat(wh), s=self.grid.shape)

    def potential_energy(self, u: np.ndarray, uh: np.ndarray | None = None) -> float:
        """``int V(u) |u|^2`` (exact for the band-limited Hartree density)."""
        g, nl = self.grid, self.nl
        if nl.kappa == 0:
            return 0.0
        if nl.kind == "power":
            return float(nl.kappa * g.cell * np.sum(np.abs(u) ** (2.0 + 4.0 / g.n)))
        if uh is None:
            uh = sfft.fftn(u)
        rh = self.density_hat(uh)
        # Parseval on the rfft half-spectrum: double every column except 0 and M/2
        wts = np.full(rh.shape[-1], 2.0)
        wts[0] = 1.0
        if g.M % 2 == 0:
            wts[-1] = 1.0
        s = np.sum(wts * self.riesz_r * np.abs(rh) ** 2)
        return float(nl.kappa * g.cell / g.M**g.n * s)

    def kinetic_energy(self, uh: np.ndarray) -> float:
        g = self.grid
        return float(0.5 * g.cell / g.M**g.n * np.sum(self.xi2 * np.abs(uh) ** 2))

    def energy(self, u: np.ndarray, uh: np.ndarray | None = None) -> float:
        if uh is None:
            uh = sfft.fftn(u)
        return self.kinetic_energy(uh) + self.nl.omega(self.grid.n) * self.potential_energy(u, uh)


_KERNEL_CACHE: dict = {}


def _kernels(grid: Grid, nl: Nonlinearity) -> _Kernels:
    key = (grid, nl)
    if key not in _KERNEL_CACHE:
        if len(_KERNEL_CACHE) > 8:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = _Kernels(grid, nl)
    return _KERNEL_CACHE[key]


def _check_frame(u: Field):
    if any(u.carrier):
        raise ValueError("the NLS solver works in the rest frame (zero carrier)")


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------
def potential(u: Field, nl: Nonlinearity) -> Field:
    """Real potential ``V(u)`` as a Field."""
    _check_frame(u)
    return Field(u.grid, _kernels(u.grid, nl).potential(u.values).astype(complex))


def mass(u: Field) -> float:
    return u.norm() ** 2


def energy(u: Field, nl: Nonlinearity) -> float:
    _check_frame(u)
    return _kernels(u.grid, nl).energy(u.values)


def strang_step(u: Field, dt: float, nl: Nonlinearity) -> Field:
    """One symmetric splitting step of size ``dt`` (negative ``dt`` runs backward)."""
    _check_frame(u)
    k = _kernels(u.grid, nl)
    half = np.exp(-0.5j * dt * k.xi2)
    wh = half * sfft.fftn(u.values)
    w = sfft.ifftn(wh)
    w = w * np.exp(-1j * dt * k.potential(w, wh))
    return Field(u.grid, sfft.ifftn(half * sfft.fftn(w)))


@dataclass
class SolutionTrace:
    """Saved frames with mass and energy at every saved time."""

    config: NlsConfig
    frames: SpacetimeField
    mass: np.ndarray
    energy: np.ndarray
    aborted: bool = False
    steps_taken: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.frames.times

    @property
    def initial(self) -> Field:
        return self.frames.frame(0)

    @property
    def final(self) -> Field:
        return self.frames.frame(len(self.frames) - 1)

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])))

    def energy_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]))

    def write_csv(self, path, h1_of_duhamel: Sequence[float] | None = None) -> Path:
        """Columns ``t, mass, energy, H1_of_D``."""
        path = Path(path)
        if h1_of_duhamel is None:
            h1_of_duhamel = duhamel_h1(self)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "energy", "H1_of_D"])
            for row in zip(self.times, self.mass, self.energy, h1_of_duhamel):
                w.writerow([repr(float(v)) for v in row])
        return path

    def dump_frames(self, directory) -> list:
        """Write every saved frame as a binary field container."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(len(self.frames)):
            p = d / f"frame_{k:05d}.dlab"
            save_field(self.frames.frame(k), p)
            paths.append(p)
        return paths


def solve(config: NlsConfig, u0: Field, progress: Callable[[int, int], None] | None = None) -> SolutionTrace:
    """Integrate to ``config.T`` saving every ``save_stride`` steps (and the last step).

    Integration stops early (``aborted=True``) if ``||u||_{H^1}`` grows by more
    than ``blowup_factor`` or becomes non-finite.
    """
    if u0.grid != config.grid:
        raise ValueError("initial datum lives on a different grid than the config")
    _check_frame(u0)
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial datum is not finite")
    g, nl = config.grid, config.nonlinearity
    k = _kernels(g, nl)
    dt = config.dt
    half = np.exp(-0.5j * dt * k.xi2)
    uh = sfft.fftn(u0.values)
    h1_0 = max(sobolev_norm(u0, 1.0, "inhomogeneous"), 1e-300)
    xi_w = g.cell / g.M**g.n * (1.0 + k.xi2)

    times, frames, masses, energies = [0.0], [np.array(u0.values)], [mass(u0)], [k.energy(u0.values, uh)]
    aborted = False
    steps = config.steps
    done = 0
    for step in range(1, steps + 1):
        wh = half * uh
        w = sfft.ifftn(wh)
        w *= np.exp(-1j * dt * k.potential(w, wh))
        uh = half * sfft.fftn(w)
        done = step
        if step % config.save_stride == 0 or step == steps:
            u = sfft.ifftn(uh)
            h1 = math.sqrt(float(np.sum(xi_w * np.abs(uh) ** 2)))
            if not np.isfinite(h1) or h1 > config.blowup_factor * h1_0:
                aborted = True
                break
            times.append(step * dt)
            frames.append(u)
            masses.append(float(g.cell * np.sum(np.abs(u) ** 2)))
            energies.append(k.energy(u, uh))
        if progress is not None:
            progress(step, steps)
    st = SpacetimeField(g, np.array(times), np.stack(frames))
    return SolutionTrace(config, st, np.array(masses), np.array(energies), aborted, done)


def duhamel_part(trace: SolutionTrace) -> SpacetimeField:
    """``D(t) = u(t) - e^{it Delta} u_0`` at the saved times."""
    u0 = trace.initial
    lin = np.stack(list(iter_propagate(u0, trace.times)))
    return SpacetimeField(trace.frames.grid, trace.times, trace.frames.data - lin)


def duhamel_h1(trace: SolutionTrace) -> np.ndarray:
    D = duhamel_part(trace)
    return np.array([sobolev_norm(D.frame(k), 1.0, "inhomogeneous") for k in range(len(D))])


def rough_datum(grid: Grid, s: float, K: float, seed: int = 0, amplitude: float = 1.0) -> Field:
    """Mean-zero random datum ``sum_{0<|k|<=K} a <k>^{-(s+n/2)} e^{i phi_k} e^{ik.x}``.

    The phases are keyed by lattice index, so data with different ``K`` on the
    same box are nested truncations of one another, and the function does not
    depend on ``M``.  ``||u0||_{H^1}`` grows like ``K^{1-s}``.
    """
    if K > grid.resolvable:
        raise ValueError(f"truncation K={K} exceeds the resolved band {grid.resolvable:.4g}")
    xi = grid.freq_abs()
    z = keyed_normal(seed, grid.indices())
    phase = z / np.abs(z)
    coeffs = np.where((xi > 0) & (xi <= K), amplitude * (1.0 + xi * xi) ** (-(s + grid.n / 2) / 2) * phase, 0.0)
    return Field(grid, sfft.ifftn(coeffs * grid.parity()) * grid.M**grid.n)


def smoothing_scan(
    s: float,
    K_list: Sequence[float],
    config: NlsConfig,
    seed: int = 0,
    amplitude: float = 1.0,
    datum_tolerance: float = 0.1,
    duhamel_bound: float = 0.2,
) -> ScanReport:
    """Growth of ``sup_t ||D(t)||_{H^1}`` with the truncation ``K`` of a rough datum.

    The report fits the Duhamel growth (pass: slope ``<= duhamel_bound``) and
    records the datum growth ``||u0||_{H^1}`` against ``K`` (expected slope
    ``1 - s`` within ``datum_tolerance``) as an additional check.
    """
    from .report import fit_exponent

    Ks = [float(K) for K in K_list]
    d_pts, u_pts = [], []
    for K in Ks:
        u0 = rough_datum(config.grid, s, K, seed, amplitude)
        tr = solve(config, u0)
        d_pts.append(ScanPoint(K, (float(np.max(duhamel_h1(tr))),)))
        u_pts.append((K, sobolev_norm(u0, 1.0, "inhomogeneous")))
    extra = {"s": s, "datum_points": u_pts, "amplitude": amplitude, "predicted_datum_slope": 1 - s}
    checks = {}
    flags = []
    h1_max = max(v for _, v in u_pts)
    if all(p.trials[0] <= 1e-12 * h1_max for p in d_pts):
        flags.append("degenerate")
    if len(u_pts) >= 3:
        ds = fit_exponent(u_pts).slope
        extra["datum_slope"] = ds
        checks["datum_slope"] = abs(ds - (1 - s)) <= datum_tolerance
    return ScanReport(
        name="smoothing",
        points=d_pts,
        predicted=0.0,
        tolerance=duhamel_bound,
        sided="threshold",
        param_name="K",
        flags=flags,
        extra=extra,
        checks=checks,
    )


def tilted_gaussian(grid: Grid, amplitude: float = 1.0, width: float = 1.0, tilt: float = 0.5) -> Field:
    """Smooth datum ``a exp(-|x|^2 / (2 w^2)) (1 + i tilt x_1)`` centred in the box."""
    X = grid.coords()
    r2 = sum(x * x for x in X)
    return Field(grid, amplitude * np.exp(-r2 / (2 * width**2)) * (1 + 1j * tilt * X[0]))


def nls_experiment(cfg, out) -> dict:
    """Mass drift and energy-drift Richardson ratios over a list of step sizes.

    ``cfg`` is an experiment config (``grid``, ``params``).  Writes
    ``nls.csv`` (dt, steps, mass_drift_rel, energy_drift, ratio_to_previous), the
    trajectory of the finest run as ``nls_trace.csv`` and a JSON sidecar.
    """
    import json

    out = Path(out)
    p = cfg.params
    grid = cfg.make_grid()
    nl = Nonlinearity(p.get("kind", "hartree"), float(p["kappa"]))
    u0 = tilted_gaussian(grid, float(p["amplitude"]), float(p["width"]), float(p["tilt"]))
    dts = [float(d) for d in (p["dt"] if isinstance(p["dt"], list) else [p["dt"]])]
    rows, trace = [], None
    for dt in dts:
        conf = NlsConfig(grid, nl, dt=dt, T=float(p["T"]), save_stride=int(p["save_stride"]))
        trace = solve(conf, u0)
        rows.append((dt, conf.steps, trace.mass_drift() / trace.mass[0], trace.energy_drift(), trace.aborted))
    ratios = [float("nan")] + [a[3] / b[3] if b[3] > 0 else float("inf") for a, b in zip(rows, rows[1:])]
    lo, hi = (float(x) for x in p["ratio_range"])
    mass_ok = all(r[2] <= float(p["mass_tol"]) for r in rows)
    ratio_ok = len(rows) >= 2 and all(lo <= q <= hi for q in ratios[1:])
    p1 = out / "nls.csv"
    with p1.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt", "steps", "mass_drift_rel", "energy_drift", "ratio_to_previous"])
        for r, q in zip(rows, ratios):
            w.writerow([repr(r[0]), r[1], repr(r[2]), repr(r[3]), repr(q)])
    p2 = trace.write_csv(out / "nls_trace.csv")
    summary = {
        "schema": SIDECAR_SCHEMA,
        "name": "nls",
        "pass": bool(mass_ok and ratio_ok and not any(r[4] for r in rows)),
        "checks": {"mass": mass_ok, "richardson": ratio_ok},
        "ratios": ratios[1:],
        "mass_drift_rel": [r[2] for r in rows],
        "energy_drift": [r[3] for r in rows],
    }
    p3 = out / "nls.json"
    p3.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["files"] = [p1, p2, p3]
    return summary
