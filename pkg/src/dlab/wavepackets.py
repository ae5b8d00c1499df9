"""Wave-packet decomposition of band-limited data and tube diagnostics.

For a scale ``lam`` put ``s = lam**(1/2)``.  A packet ``T = (y, v)`` has
``y`` in ``s Z^n`` and ``v`` in ``s^{-1} Z^n`` inside ``Q(2)`` and

    f_T(x) = eta((x - y)/s) * F^{-1}[ f^ psi(s(. - v)) ](x).

``psi`` is a radial C-infinity bump on ``B(0, 1)`` divided by its integer
periodisation, so ``sum_k psi(. - k) = 1``.  ``eta`` has Fourier transform a
radial bump on ``B(0, 1)`` with ``eta^(0) = 1``; by Poisson summation
``sum_k eta(. - k) = 1``.  On a torus whose side is a multiple of ``s`` both
partitions hold exactly, so the packets sum back to ``f`` up to roundoff.
``e^{itD} f_T`` stays essentially inside the tube ``|x - (y + 2tv)| <= s``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Field, Grid, from_spectrum, iter_propagate, spectrum
from .norms import trapezoid_weights
from .report import SIDECAR_SCHEMA


def bump(r) -> np.ndarray:
    """Radial C-infinity bump ``exp(1 - 1/(1 - r^2))`` on ``|r| < 1`` (value 1 at 0)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def psi(u: tuple) -> np.ndarray:
    """Periodised-normalised bump: ``b(u) / sum_m b(u - m)`` with ``b = bump(|.|)``.

    ``u`` is a tuple of broadcastable coordinate arrays.
    """
    n = len(u)
    shape = np.broadcast_shapes(*(np.shape(c) for c in u))
    u = [np.broadcast_to(np.asarray(c, dtype=float), shape) for c in u]
    base = [np.floor(c) for c in u]
    num = bump(np.sqrt(sum(c * c for c in u)))
    den = np.zeros(shape)
    for shift in itertools.product((-1, 0, 1, 2), repeat=n):
        d2 = sum((c - (b + s)) ** 2 for c, b, s in zip(u, base, shift))
        den += bump(np.sqrt(d2))
    return num / den


@dataclass(frozen=True)
class Tube:
    """Tube ``{(x, t): |t| <= 4 lam, |x - (y + 2tv)| <= lam^(1/2)}``."""

    y: tuple
    v: tuple
    lam: float

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("tube scale lam must exceed 1")
        s = math.sqrt(self.lam)
        y = tuple(float(a) for a in np.atleast_1d(self.y))
        v = tuple(float(a) for a in np.atleast_1d(self.v))
        if len(y) != len(v):
            raise ValueError("y and v must have the same dimension")
        for a in y:
            if abs(a / s - round(a / s)) > 1e-9:
                raise ValueError(f"y component {a} is not on the grid lam^(1/2) Z")
        for a in v:
            if abs(a * s - round(a * s)) > 1e-9:
                raise ValueError(f"v component {a} is not on the grid lam^(-1/2) Z")
            if abs(a) > 2 + 1e-12:
                raise ValueError("velocity must lie in Q(2)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def radius(self) -> float:
        return math.sqrt(self.lam)

    def contains(self, x, t: float, dilation: float = 1.0) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if abs(t) > 4 * self.lam:
            return False
        c = np.asarray(self.y) + 2 * t * np.asarray(self.v)
        return bool(np.linalg.norm(x - c) <= dilation * self.radius)


def _check_grid(grid: Grid, lam: float):
    if grid.n not in (1, 2):
        raise ValueError("wave-packet decompositions are limited to n = 1, 2")
    if lam < 64:
        raise ValueError("packet scale lam must be >= 64")
    s = math.sqrt(lam)
    J = grid.L / s
    step = s / grid.dx
    if abs(J - round(J)) > 1e-9 or abs(step - round(step)) > 1e-9 or round(J) % 2:
        raise ValueError(
            f"grid does not resolve the packet lattice: need L/lam^(1/2) an even integer "
            f"(got {J:.6g}) and lam^(1/2)/dx an integer (got {step:.6g})"
        )
    if grid.dk > 0.5 / s:
        raise ValueError("frequency spacing too coarse for lam^(-1/2) packets; enlarge L")
    if 2.0 + 2.0 / s > grid.resolvable:
        raise ValueError("grid does not resolve Q(2); refine M")


def eta_field(grid: Grid, lam: float) -> np.ndarray:
    """Samples of ``eta(x / lam^(1/2))`` (real, centred at the origin)."""
    s = math.sqrt(lam)
    xi = grid.freq_abs()
    coeffs = s**grid.n * bump(s * xi)
    return from_spectrum(grid, coeffs).values.real


def packet_grid(lam: float, n: int = 1, cells: int = 32) -> Grid:
    """Grid with ``cells`` packet cells per side (``L = cells * lam^(1/2)``) resolving ``Q(2)``.

    ``cells`` must be a power of two >= 16; the points per cell are the smallest
    power of two giving ``dx <= 1.2``.
    """
    s = math.sqrt(lam)
    ppc = 2 ** max(0, math.ceil(math.log2(s / 1.2)))
    return Grid(n, cells * s, cells * ppc)


@dataclass
class PacketDecomposition:
    """Packets ``f_T`` of a field, stored as frequency pieces and spatial windows.

    Packets are materialised on demand; ``tubes`` and ``norms`` list the
    retained packets in lexicographic ``(y, v)`` order.
    """

    grid: Grid
    lam: float
    tubes: list
    norms: np.ndarray
    dropped: list = field(default_factory=list)
    dropped_norms: list = field(default_factory=list)
    _pieces: dict = field(default_factory=dict, repr=False)
    _eta: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.tubes)

    def _shift(self, y: tuple) -> tuple:
        return tuple(int(round(a / self.grid.dx)) for a in y)

    def window(self, y: tuple) -> np.ndarray:
        return np.roll(self._eta, self._shift(y), axis=tuple(range(self.grid.n)))

    def packet(self, i: int) -> Field:
        T = self.tubes[i]
        return Field(self.grid, self.window(T.y) * self._pieces[T.v])

    def __iter__(self) -> Iterator:
        for i, T in enumerate(self.tubes):
            yield T, self.packet(i)

    @property
    def packets(self) -> list:
        return list(self)

    def write_csv(self, path) -> Path:
        """Inventory ``y, v, norm, retained``."""
        path = Path(path)
        rows = [(T, nrm, 1) for T, nrm in zip(self.tubes, self.norms)]
        rows += [(T, nrm, 0) for T, nrm in zip(self.dropped, self.dropped_norms)]
        rows.sort(key=lambda r: (r[0].y, r[0].v))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "v", "norm", "retained"])
            for T, nrm, keep in rows:
                w.writerow([" ".join(repr(a) for a in T.y), " ".join(repr(a) for a in T.v), repr(float(nrm)), keep])
        return path


def packet_decompose(f: Field, lam: float, drop_tol: float = 1e-12) -> PacketDecomposition:
    """Split ``f`` (spectrum in ``Q(1)``) into wave packets at scale ``lam``."""
    grid = f.grid
    if any(f.carrier):
        raise ValueError("packet decomposition expects a rest-frame field")
    _check_grid(grid, lam)
    s = math.sqrt(lam)
    fh = spectrum(f)
    xi = grid.wavevector()
    outside = np.zeros(grid.shape, dtype=bool)
    for c in xi:
        outside |= np.abs(np.broadcast_to(c, grid.shape)) > 1.0 + 1e-12
    scale = np.abs(fh).max() if fh.size else 0.0
    if scale > 0 and np.abs(fh[outside]).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("spectrum of f is not contained in Q(1)")
    fnorm = f.norm()
    eta = eta_field(grid, lam)
    eta2h = sfft.fftn(eta * eta)
    J = int(round(grid.L / s))
    step = int(round(s / grid.dx))
    y_idx = np.arange(-J // 2, J // 2)
    vmax = int(math.floor((1.0 + 1.0 / s) * s + 1e-9))
    v_idx = np.arange(-vmax, vmax + 1)

    pieces = {}
    tubes, norms, dropped, dnorms = [], [], [], []
    records = []
    for vi in itertools.product(v_idx, repeat=grid.n):
        v = tuple(float(a) / s for a in vi)
        w = psi(tuple(s * (c - a) for c, a in zip(xi, v)))
        if not np.any(w * np.abs(fh) > 0):
            continue
        piece = from_spectrum(grid, fh * w).values
        # ||eta_y piece||^2 for every shift via circular correlation
        corr = sfft.ifftn(np.conj(eta2h) * sfft.fftn(np.abs(piece) ** 2)).real * grid.cell
        pieces[v] = piece
        for yi in itertools.product(y_idx, repeat=grid.n):
            # corr[p] = sum_x eta^2(x - p dx) |piece(x)|^2, i.e. the norm of the packet at y = p dx
            pos = tuple((int(a) * step) % grid.M for a in yi)
            nrm = math.sqrt(max(corr[pos], 0.0))
            records.append((tuple(float(a) * s for a in yi), v, nrm))
    records.sort(key=lambda r: (r[0], r[1]))
    for y, v, nrm in records:
        T = Tube(y, v, lam)
        if nrm < drop_tol * fnorm:
            dropped.append(T)
            dnorms.append(nrm)
        else:
            tubes.append(T)
            norms.append(nrm)
    return PacketDecomposition(grid, lam, tubes, np.array(norms), dropped, dnorms, pieces, eta)


def packet_reconstruct(d: PacketDecomposition) -> Field:
    """Sum of all retained packets."""
    g = d.grid
    if not d.tubes:
        return g.zeros()
    by_v: dict = {}
    for T in d.tubes:
        by_v.setdefault(T.v, []).append(T.y)
    total = np.zeros(g.shape, dtype=complex)
    eh = sfft.fftn(d._eta)
    for v, ys in by_v.items():
        comb = np.zeros(g.shape)
        for y in ys:
            comb[tuple(i % g.M for i in d._shift(y))] += 1.0
        windows = sfft.ifftn(eh * sfft.fftn(comb)).real
        total += windows * d._pieces[v]
    return Field(g, total)


def synthesize_packet(grid: Grid, tube: Tube) -> Field:
    """The packet of the datum with ``f^ = 1`` on ``Q(1)``, L^2-normalised."""
    _check_grid(grid, tube.lam)
    s = math.sqrt(tube.lam)
    xi = grid.wavevector()
    w = psi(tuple(s * (c - a) for c, a in zip(xi, tube.v)))
    inside = np.ones(grid.shape, dtype=bool)
    for c in xi:
        inside &= np.abs(np.broadcast_to(c, grid.shape)) <= 1.0
    piece = from_spectrum(grid, np.where(inside, w, 0.0)).values
    eta = eta_field(grid, tube.lam)
    win = np.roll(eta, tuple(int(round(a / grid.dx)) for a in tube.y), axis=tuple(range(grid.n)))
    f = Field(grid, win * piece)
    return f * (1.0 / f.norm())


def tube_mask(tube: Tube, dilation: float, grid: Grid, times: Sequence[float]) -> np.ndarray:
    """Boolean ``(len(times),) + grid.shape`` indicator of the dilated tube (periodic distance)."""
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(times),) + grid.shape, dtype=bool)
    R = dilation * tube.radius
    for k, t in enumerate(times):
        if abs(t) > 4 * tube.lam:
            continue
        c = np.asarray(tube.y) + 2 * t * np.asarray(tube.v)
        out[k] = grid.periodic_distance(c) <= R
    return out


def off_tube_mass(packet: tuple, delta: float, times: Sequence[float]) -> float:
    """Space-time L^2 mass fraction of ``e^{itD} f_T`` outside the ``lam^delta``-dilated tube."""
    tube, f = packet
    if not (0 < delta <= 0.5):
        raise ValueError("delta must lie in (0, 1/2]")
    times = np.asarray(times, dtype=float)
    grid = f.grid
    R = tube.lam**delta * tube.radius
    w = trapezoid_weights(times) if len(times) > 1 else np.ones(1)
    total = outside = 0.0
    for k, u in enumerate(iter_propagate(f, times)):
        dens = np.abs(u) ** 2
        t = times[k]
        c = np.asarray(tube.y) + 2 * t * np.asarray(tube.v)
        inside = (grid.periodic_distance(c) <= R) & (abs(t) <= 4 * tube.lam)
        total += w[k] * dens.sum()
        outside += w[k] * dens[~inside].sum()
    return float(min(max(outside / total, 0.0), 1.0)) if total > 0 else 0.0


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------
def random_q1_datum(grid: Grid, seed: int) -> Field:
    """Random L^2-normalised datum with spectrum in ``Q(1)``."""
    from .littlewood_paley import SupportSpec, band_random

    return band_random(grid, SupportSpec.cube(1.0), seed)


def wavepacket_experiment(n: int, params: dict, seed: int, out: Path) -> dict:
    """Reconstruction errors at ``params['lam']`` and off-tube masses over ``offtube_lams``.

    Writes ``wavepacket_reconstruction.csv`` (trial, seed, rel_error, n_packets,
    packet_mass_ratio), ``wavepacket_offtube.csv`` (lam, delta, off_tube_fraction)
    and a JSON sidecar.  Pass: every error <= ``reconstruction_tol`` and the
    off-tube fractions strictly decrease in ``lam``.
    """
    import json

    out = Path(out)
    lam = float(params["lam"])
    grid = packet_grid(lam, n, int(params["cells"]))
    rows = []
    for t in range(int(params["trials"])):
        sd = seed * 1000 + t
        f = random_q1_datum(grid, sd)
        d = packet_decompose(f, lam)
        err = (packet_reconstruct(d) - f).norm() / f.norm()
        rows.append((t, sd, err, len(d.tubes), float(np.sum(d.norms**2)) / f.norm() ** 2))
    lams = [float(x) for x in params["offtube_lams"]]
    delta = float(params["delta"])
    v = float(params["velocity"])
    fracs = []
    for lm in lams:
        g = packet_grid(lm, n, int(params["cells"]))
        s = math.sqrt(lm)
        vv = round(v * s) / s
        tube = Tube((0.0,) * n, (vv,) + (0.0,) * (n - 1), lm)
        times = np.linspace(-4 * lm, 4 * lm, int(params["time_samples"]))
        fracs.append(off_tube_mass((tube, synthesize_packet(g, tube)), delta, times))
    rec_ok = all(r[2] <= float(params["reconstruction_tol"]) for r in rows)
    dec_ok = all(b < a for a, b in zip(fracs, fracs[1:]))
    p1 = out / "wavepacket_reconstruction.csv"
    with p1.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "seed", "rel_error", "n_packets", "packet_mass_ratio"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), r[3], repr(r[4])])
    p2 = out / "wavepacket_offtube.csv"
    with p2.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lam", "delta", "off_tube_fraction"])
        for lm, fr in zip(lams, fracs):
            w.writerow([repr(lm), repr(delta), repr(fr)])
    summary = {
        "schema": SIDECAR_SCHEMA,
        "name": "wavepacket",
        "pass": bool(rec_ok and dec_ok),
        "checks": {"reconstruction": rec_ok, "off_tube_decreasing": dec_ok},
        "max_rel_error": max(r[2] for r in rows),
        "off_tube": dict(zip([str(x) for x in lams], fracs)),
        "delta": delta,
    }
    p3 = out / "wavepacket.json"
    p3.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["files"] = [p1, p2, p3]
    return summary
