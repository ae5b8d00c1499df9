"""Bilinear and trilinear interaction measurements for free Schroedinger waves.

Decay scans use a *collision* geometry.  A slow, spatially localised random
packet with spectrum in ``A(N_slow)`` sits at the origin.  A fast packet with
spectrum in a ball inside ``A(N_fast)`` is represented in the moving frame of
its carrier ``1.5 * N_fast * e`` (random unit vector ``e``); its envelope uses
the same keyed random coefficients for every ``N_fast`` so the family is an
exact Galilean boost.  Both packets are centred at ``t = 0`` and measured on a
symmetric window whose length is a fixed number of crossing times, so the
measured decay reflects the shortening interaction time rather than box
effects.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Field, Grid, dealiased_values, from_spectrum, iter_propagate, normalize_carrier
from .littlewood_paley import SupportSpec, check_dyadic, localized_random
from .norms import (
    INF,
    LebesguePair,
    admissible_check,
    inv,
    predicted_exponents,
    sobolev_norm,
    spatial_norm,
    time_norm,
)
from .report import ScanPoint, ScanReport


def pmap(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Order-preserving map, threaded when ``jobs > 1``."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# primitive measurements
# ---------------------------------------------------------------------------
def bilinear_norm(f: Field, g: Field, p, times: Sequence[float]) -> float:
    """``|| e^{itD} f * e^{itD} g ||_{L^{q/2}_t L^{r/2}_x}`` over ``times``."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    half = LebesguePair.parse(p).half()
    if half.q < 1 or half.r < 1:
        raise ValueError(f"bilinear product norm needs q, r >= 2, got {p}")
    times = np.asarray(times, dtype=float)
    cell = f.grid.cell
    slices = [
        spatial_norm(F * G, half.r, cell)
        for F, G in zip(iter_propagate(f, times), iter_propagate(g, times))
    ]
    return time_norm(slices, times, half.q)


def _riesz_values(values: np.ndarray, grid: Grid, carrier) -> np.ndarray:
    xi = grid.freq_abs(carrier)
    sym = np.where(xi > 0, 1.0 / np.where(xi > 0, xi, 1.0) ** (grid.n - 2), 0.0)
    return sfft.ifftn(sym * sfft.fftn(values))


def trilinear_H_norm(f: Field, g: Field, h: Field, dual_pair, times: Sequence[float]) -> float:
    """``|| |nabla|^{2-n}(F G) H ||`` in the mixed norm ``dual_pair`` (n >= 3).

    ``F, G, H`` are the free evolutions of ``f, g, h``; the product ``F G`` is
    formed without aliasing before the Riesz multiplier is applied.
    """
    grid = f.grid
    if grid.n < 3:
        raise ValueError("the trilinear Hartree term needs n >= 3")
    if not (f.grid == g.grid == h.grid):
        raise ValueError("fields live on different grids")
    p = LebesguePair.parse(dual_pair)
    times = np.asarray(times, dtype=float)
    cfg = tuple(a + b for a, b in zip(f.carrier, g.carrier))
    slices = []
    for F, G, H in zip(iter_propagate(f, times), iter_propagate(g, times), iter_propagate(h, times)):
        V = _riesz_values(dealiased_values(F, G, grid), grid, cfg)
        slices.append(spatial_norm(V * H, p.r, grid.cell))
    return time_norm(slices, times, p.q)


# ---------------------------------------------------------------------------
# collision geometry
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CollisionGeometry:
    """Parameters of the localised-packet collision used by the decay scans.

    width:
        standard deviation of the Gaussian envelope of every packet.
    kappa:
        window length in units of the fast packet's crossing time
        ``6 * width / (2 * speed * N_fast)``.
    samples:
        number of time samples in the window.
    speed:
        carrier magnitude in units of ``N_fast``.
    fast_radius:
        radius of the fast packet's spectral ball (capped at ``N_fast / 2`` so the
        ball stays inside ``A(N_fast)``).
    """

    width: float = 1.5
    kappa: float = 2.0
    samples: int = 65
    speed: float = 1.5
    fast_radius: float = 1.0

    def window(self, N_fast: float) -> np.ndarray:
        T = self.kappa * 6.0 * self.width / (2.0 * self.speed * N_fast)
        return np.linspace(-T / 2, T / 2, self.samples)

    def fast_radius_for(self, N: float) -> float:
        return min(self.fast_radius, N / 2)

    def fast_field(self, grid: Grid, N: float, seed: int, direction) -> Field:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
        carrier = tuple(self.speed * N * e)
        spec = SupportSpec.ball(carrier, self.fast_radius_for(N))
        return localized_random(grid, spec, seed, self.width, carrier=carrier)

    def slow_field(self, grid: Grid, N: float, seed: int) -> Field:
        return localized_random(grid, SupportSpec.annulus(N), seed, self.width)


def random_direction(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0x5EED])
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _trial_seed(seed: int, trial: int, role: int) -> int:
    return (seed * 7919 + trial) * 8 + role


def _require_admissible(p: LebesguePair, n: int):
    if not admissible_check(p, n):
        raise ValueError(f"pair {p} is not Schroedinger-admissible in dimension {n}")


# ---------------------------------------------------------------------------
# bilinear decay
# ---------------------------------------------------------------------------
def bilinear_decay_scan(
    grid: Grid,
    p,
    N1: float,
    N2_list: Sequence[float],
    trials: int = 8,
    seed: int = 0,
    geometry: CollisionGeometry = CollisionGeometry(),
    tolerance: float = 0.15,
    min_r_squared: float | None = None,
    jobs: int = 1,
) -> ScanReport:
    """Normalised ``||F G||_{L^{q/2}L^{r/2}}`` against ``N2`` with ``N1`` fixed.

    The slope of ``log(value)`` against ``log(N2)`` is compared with the
    predicted ``-(1 - 2/r)``; the scan passes when the slope is at most the
    prediction plus ``tolerance``.
    """
    p = LebesguePair.parse(p)
    _require_admissible(p, grid.n)
    N1 = check_dyadic(N1)
    N2_list = [check_dyadic(N) for N in N2_list]
    if any(N < N1 for N in N2_list):
        raise ValueError("the scanned frequency N2 must be >= N1")
    if trials < 1:
        raise ValueError("need at least one trial")
    gain = predicted_exponents(p, grid.n).bilinear_gain
    slow = [geometry.slow_field(grid, N1, _trial_seed(seed, t, 0)) for t in range(trials)]

    def one(task):
        N2, t = task
        f_seed = _trial_seed(seed, t, 1)
        f = geometry.fast_field(grid, N2, f_seed, random_direction(grid.n, f_seed))
        return bilinear_norm(f, slow[t], p, geometry.window(N2))

    tasks = [(N2, t) for N2 in N2_list for t in range(trials)]
    vals = pmap(one, tasks, jobs)
    points = [ScanPoint(N2, tuple(vals[i * trials:(i + 1) * trials])) for i, N2 in enumerate(N2_list)]
    return ScanReport(
        name="bilinear",
        points=points,
        predicted=-float(gain),
        tolerance=tolerance,
        sided="upper",
        min_r_squared=min_r_squared,
        param_name="N2",
        extra={"pair": str(p), "N1": N1, "n": grid.n, "geometry": geometry.__dict__},
    )


# ---------------------------------------------------------------------------
# trilinear decay
# ---------------------------------------------------------------------------
_PATTERNS = {
    "high3": (False, False, True),  # N1 = N2 = 1, N3 = scale
    "high1": (True, False, False),  # N1 = scale, N2 = N3 = 1
    "high2": (False, True, False),
}


def trilinear_decay_scan(
    grid: Grid,
    dual_pairs,
    pattern: str,
    scale_list: Sequence[float],
    trials: int = 8,
    seed: int = 0,
    geometry: CollisionGeometry = CollisionGeometry(kappa=1.0),
    tolerance: float = 0.15,
    jobs: int = 1,
) -> dict:
    """Normalised trilinear Hartree norm against ``max N_j / min N_j``.

    ``pattern`` names the high-frequency slot (``"high3"``: ``N1 = N2 = 1``,
    ``N3 = scale``).  Every dual pair in ``dual_pairs`` is measured on the same
    trajectories; the result maps ``str(pair)`` to a :class:`ScanReport` with
    predicted slope ``-1/2``.
    """
    if grid.n < 3:
        raise ValueError("the trilinear Hartree estimate needs n >= 3")
    if pattern not in _PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {sorted(_PATTERNS)}")
    if isinstance(dual_pairs, (str, LebesguePair)):
        dual_pairs = [dual_pairs]
    pairs = [LebesguePair.parse(dp) for dp in dual_pairs]
    scales = [check_dyadic(s) for s in scale_list]
    if any(s < 1 for s in scales):
        raise ValueError("scale factors must be >= 1")
    fast_slot = _PATTERNS[pattern]

    def fields(scale, t):
        out = []
        for j, is_fast in enumerate(fast_slot):
            sd = _trial_seed(seed, t, j)
            if is_fast and scale > 1:
                out.append(geometry.fast_field(grid, scale, sd, random_direction(grid.n, sd)))
            else:
                out.append(geometry.slow_field(grid, 1.0, sd))
        return out

    def one(task):
        scale, t = task
        f, g, h = fields(scale, t)
        times = geometry.window(scale)
        return _trilinear_multi(f, g, h, pairs, times)

    tasks = [(s, t) for s in scales for t in range(trials)]
    vals = pmap(one, tasks, jobs)
    reports = {}
    for k, pr in enumerate(pairs):
        pts = [
            ScanPoint(s, tuple(vals[i * trials + t][k] for t in range(trials)))
            for i, s in enumerate(scales)
        ]
        reports[str(pr)] = ScanReport(
            name=f"trilinear{pr}",
            points=pts,
            predicted=-0.5,
            tolerance=tolerance,
            sided="upper",
            param_name="scale",
            extra={"pair": str(pr), "pattern": pattern, "geometry": geometry.__dict__},
        )
    return reports


def _trilinear_multi(f, g, h, pairs, times) -> list:
    grid = f.grid
    cfg = tuple(a + b for a, b in zip(f.carrier, g.carrier))
    slices = [[] for _ in pairs]
    for F, G, H in zip(iter_propagate(f, times), iter_propagate(g, times), iter_propagate(h, times)):
        VH = _riesz_values(dealiased_values(F, G, grid), grid, cfg) * H
        for k, pr in enumerate(pairs):
            slices[k].append(spatial_norm(VH, pr.r, grid.cell))
    return [time_norm(sl, times, pr.q) for sl, pr in zip(slices, pairs)]


# ---------------------------------------------------------------------------
# squashed caps
# ---------------------------------------------------------------------------
def cap_grid(n: int, rho: float, M: int = 256, box_factor: float = 40.0) -> Grid:
    """Grid of side ``box_factor / rho**2`` adapted to caps of parameter ``rho``."""
    return Grid(n, box_factor / rho**2, M)


def build_squashed_caps(grid: Grid, rho: float) -> tuple:
    """L^2-normalised ``(f, g)`` with ``f^ = 1`` on the cap near ``+e_1`` and ``g^`` near ``-e_1``.

    Requires the cap to contain several lattice points along ``xi_1``:
    ``rho**2 >= 4 * 2*pi / L``.
    """
    if not (0 < rho < 1):
        raise ValueError("rho must lie in (0, 1)")
    rho_min = math.sqrt(4 * grid.dk)
    if rho**2 < 4 * grid.dk:
        raise ValueError(f"cap too thin for this box: need rho >= {rho_min:.4g}")
    out = []
    for sign in (1, -1):
        spec = SupportSpec.cap(rho, sign)
        carrier = spec.natural_carrier(grid.n)
        if spec.extent(grid.n, carrier) > grid.resolvable:
            raise ValueError(f"cap of width rho={rho} is not resolved by M={grid.M}")
        mask = np.broadcast_to(spec.contains(grid.wavevector(carrier)), grid.shape)
        f = from_spectrum(grid, mask.astype(complex), carrier)
        out.append(f * (1.0 / f.norm()))
    return tuple(out)


def sharpness_scan(
    n: int,
    p,
    rho_list: Sequence[float],
    M: int = 256,
    box_factor: float = 40.0,
    time_factor: float = 6.0,
    samples: int = 65,
    tolerance: float = 0.2,
    jobs: int = 1,
) -> ScanReport:
    """Normalised bilinear norm of squashed caps against ``rho``.

    The window is ``|t| <= time_factor / (2 rho**2)``.  The slope is compared
    two-sidedly with the predicted lower-bound exponent.
    """
    p = LebesguePair.parse(p)
    _require_admissible(p, n)
    lower = predicted_exponents(p, n).cap_lower

    def one(rho):
        grid = cap_grid(n, rho, M, box_factor)
        f, g = build_squashed_caps(grid, rho)
        T = time_factor / rho**2
        return bilinear_norm(f, g, p, np.linspace(-T / 2, T / 2, samples))

    rhos = [float(r) for r in rho_list]
    vals = pmap(one, rhos, jobs)
    return ScanReport(
        name="sharpness",
        points=[ScanPoint(r, (v,)) for r, v in zip(rhos, vals)],
        predicted=float(lower),
        tolerance=tolerance,
        sided="two-sided",
        param_name="rho",
        extra={"pair": str(p), "n": n, "M": M, "box_factor": box_factor, "time_factor": time_factor},
    )


# ---------------------------------------------------------------------------
# weighted bilinear ratio
# ---------------------------------------------------------------------------
def theorem1_ratio_scan(
    grid: Grid,
    p,
    s: float,
    N2_list: Sequence[float],
    trials: int = 4,
    seed: int = 0,
    geometry: CollisionGeometry = CollisionGeometry(),
    tolerance: float = 0.15,
    jobs: int = 1,
) -> ScanReport:
    """``||F G|| / (||f||_{\\dot H^s} ||g||_{\\dot H^{-s}})`` with ``f`` on ``A(N2)``, ``g`` on ``A(1)``.

    For ``|s| < 1 - 2/r`` the ratio should stay bounded (slope at most 0 up to
    ``tolerance``).  Outside that range the report is flagged.  The largest
    ratio and the ``N2 = min`` ratio are stored in ``extra``.
    """
    p = LebesguePair.parse(p)
    _require_admissible(p, grid.n)
    N2_list = [check_dyadic(N) for N in N2_list]
    gain = float(predicted_exponents(p, grid.n).bilinear_gain)
    slow = [geometry.slow_field(grid, 1.0, _trial_seed(seed, t, 0)) for t in range(trials)]

    def one(task):
        N2, t = task
        sd = _trial_seed(seed, t, 1)
        f = geometry.fast_field(grid, N2, sd, random_direction(grid.n, sd))
        g = slow[t]
        num = bilinear_norm(f, g, p, geometry.window(max(N2, 1.0)))
        return num / (sobolev_norm(f, s, "homogeneous") * sobolev_norm(g, -s, "homogeneous"))

    tasks = [(N2, t) for N2 in N2_list for t in range(trials)]
    vals = pmap(one, tasks, jobs)
    points = [ScanPoint(N2, tuple(vals[i * trials:(i + 1) * trials])) for i, N2 in enumerate(N2_list)]
    flags = [] if abs(s) < gain else ["outside-theorem-range"]
    ratios = [pt.geo_mean for pt in points]
    return ScanReport(
        name="theorem1",
        points=points,
        predicted=0.0,
        tolerance=tolerance,
        sided="upper",
        param_name="N2",
        flags=flags,
        extra={"pair": str(p), "s": s, "max_ratio": max(ratios), "first_ratio": ratios[0]},
    )
