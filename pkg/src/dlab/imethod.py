"""The smoothing operator I, its modified energy and the associated error terms.

``I`` is the radial Fourier multiplier with symbol ``m`` equal to 1 for
``|xi| <= N`` and ``(N/|xi|)^(1-s)`` for ``|xi| >= 2N``.  On ``N < |xi| < 2N``
``log m`` is a cubic Hermite interpolant in ``log |xi|`` with end slopes ``0``
and ``-(1-s)``; with ``tau = log(|xi|/N) / log 2`` this is
``log m = -(1-s) log 2 * (2 tau^2 - tau^3)``, which is C^1 and nonincreasing.

The modified energy ``E(Iu)`` is not conserved; its change is driven by the
commutator ``N_bad = I(V(u)u) - V(Iu) Iu``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Field, Grid, SpacetimeField, apply_symbol, dealiased_values
from .littlewood_paley import check_dyadic
from .nls import Nonlinearity, NlsConfig, SolutionTrace, _kernels, energy, solve
from .norms import INF, LebesguePair, admissible_check, spatial_norm, time_norm, trapezoid_weights
from .report import ScanPoint, ScanReport, _jsonable


@dataclass(frozen=True)
class IParams:
    """Cutoff ``N`` (a power of two >= 4) and regularity ``s`` in ``(0, 1]``.

    ``s = 1`` gives the identity multiplier.
    """

    N: float
    s: float

    def __post_init__(self):
        N = check_dyadic(self.N)
        if N < 4:
            raise ValueError("the I-method cutoff N must be >= 4")
        if not (0 < self.s <= 1):
            raise ValueError("s must lie in (0, 1]")
        object.__setattr__(self, "N", N)


def i_multiplier_value(xi_abs, p: IParams) -> np.ndarray:
    """Symbol ``m(|xi|)`` of ``I``; vectorised over ``xi_abs``."""
    r = np.asarray(xi_abs, dtype=float)
    a = 1.0 - p.s
    out = np.ones_like(r)
    if a == 0:
        return out
    N = p.N
    hi = r >= 2 * N
    out[hi] = (N / r[hi]) ** a
    mid = (r > N) & ~hi
    tau = np.log(r[mid] / N) / math.log(2.0)
    out[mid] = np.exp(-a * math.log(2.0) * (2 * tau**2 - tau**3))
    return out


def apply_I(f: Field, p: IParams) -> Field:
    return apply_symbol(f, i_multiplier_value(f.grid.freq_abs(f.carrier), p))


def modified_energy(u: Field, p: IParams, nl: Nonlinearity) -> float:
    """``E(Iu)``."""
    return energy(apply_I(u, p), nl)


def default_pairs(n: int) -> list:
    """Finite surrogate of the admissible-pair family used for ``Z_I``."""
    if n < 3:
        raise ValueError("the Z_I surrogate is defined for n >= 3")
    from fractions import Fraction

    pairs = [LebesguePair(INF, 2), LebesguePair(2, Fraction(2 * n, n - 2))]
    if n == 3:
        pairs += [LebesguePair(3, Fraction(18, 5)), LebesguePair(Fraction(8, 3), 4)]
    return pairs


def z_norm(trace: SolutionTrace, p: IParams, pairs: Sequence | None = None) -> float:
    """``max`` over ``pairs`` of ``||<nabla> I u||`` on the saved frames."""
    g = trace.frames.grid
    pairs = default_pairs(g.n) if pairs is None else [LebesguePair.parse(pr) for pr in pairs]
    for pr in pairs:
        if not admissible_check(pr, g.n):
            raise ValueError(f"pair {pr} is not admissible in dimension {g.n}")
    xi = g.freq_abs()
    sym = i_multiplier_value(xi, p) * np.sqrt(1.0 + xi * xi)
    slices = [[] for _ in pairs]
    for k in range(len(trace.frames)):
        v = sfft.ifftn(sym * sfft.fftn(trace.frames.data[k]))
        for j, pr in enumerate(pairs):
            slices[j].append(spatial_norm(v, pr.r, g.cell))
    return max(time_norm(sl, trace.times, pr.q) for sl, pr in zip(slices, pairs))


# ---------------------------------------------------------------------------
# commutator and bounds
# ---------------------------------------------------------------------------
def _require_hartree(grid: Grid):
    if grid.n < 3:
        raise ValueError("the Hartree commutator needs n >= 3")


def _n_bad_values(u: np.ndarray, grid: Grid, msym: np.ndarray, kappa: float) -> tuple:
    """Return ``(Iu, N_bad)`` as raw arrays."""
    k = _kernels(grid, Nonlinearity("hartree", kappa))
    uh = sfft.fftn(u)
    Iuh = msym * uh
    Iu = sfft.ifftn(Iuh)
    Vu = k.potential(u, uh)
    VIu = k.potential(Iu, Iuh)
    first = sfft.ifftn(msym * sfft.fftn(dealiased_values(Vu.astype(complex), u, grid)))
    second = dealiased_values(VIu.astype(complex), Iu, grid)
    return Iu, first - second


def n_bad(u: Field, p: IParams, kappa: float = 1.0) -> Field:
    """``I(V(u) u) - V(Iu) Iu`` with alias-free products."""
    _require_hartree(u.grid)
    msym = i_multiplier_value(u.grid.freq_abs(), p)
    return Field(u.grid, _n_bad_values(u.values, u.grid, msym, kappa)[1])


def _shell_points(rng, n: int, N: float, count: int) -> np.ndarray:
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = N * 2.0 ** rng.uniform(-1, 1, size=(count, 1))
    return d * r


def b_bound(N2, N3, N4, p: IParams, samples: int = 2000, seed: int = 0, n: int = 3) -> dict:
    """Sampled lower bound for ``sup |1 - m(x2+x3+x4) / (m(x2) m(x3) m(x4))|`` over shells.

    ``|x_j|`` ranges over ``[N_j/2, 2N_j]``.  Besides ``samples`` random triples a
    deterministic set of aligned / anti-aligned axis configurations at the
    shell radii is included.  Returns ``{"value", "m_min", "lower_bound": True}``.
    """
    Ns = [check_dyadic(N) for N in (N2, N3, N4)]
    rng = np.random.default_rng(seed)
    pts = [_shell_points(rng, n, N, samples) for N in Ns]
    # deterministic extremal configurations along e_1
    radii = [(N / 2, N, 2 * N) for N in Ns]
    det = []
    for r2 in radii[0]:
        for r3 in radii[1]:
            for r4 in radii[2]:
                for s3 in (1, -1):
                    for s4 in (1, -1):
                        det.append((r2, s3 * r3, s4 * r4))
    det = np.asarray(det)
    e = np.zeros(n)
    e[0] = 1.0
    pts = [np.vstack([P, det[:, j : j + 1] * e]) for j, P in enumerate(pts)]
    m = lambda X: i_multiplier_value(np.linalg.norm(X, axis=1), p)
    num = m(pts[0] + pts[1] + pts[2])
    den = m(pts[0]) * m(pts[1]) * m(pts[2])
    vals = np.abs(1.0 - num / den)
    rmax = max(np.linalg.norm(P, axis=1).max() for P in pts)
    return {
        "value": float(vals.max()),
        "m_min": float(i_multiplier_value(np.array([rmax]), p)[0]),
        "lower_bound": True,
    }


def _kernel_components(grid: Grid) -> list:
    """FFTs of ``K(z) = -z/|z|`` on the minimal-image lattice (``K(0) = 0``)."""
    key = ("morawetz",)
    if key not in grid._cache:
        d = []
        for j in range(grid.n):
            shp = [1] * grid.n
            shp[j] = grid.M
            d.append((grid.index_axis * grid.dx).reshape(shp))
        r = np.sqrt(sum(np.broadcast_to(c * c, grid.shape) for c in d))
        safe = np.where(r > 0, r, 1.0)
        comps = [sfft.fftn(np.where(r > 0, -c / safe, 0.0)) for c in d]
        grid._cache[key] = comps
    return grid._cache[key]


def _gradient_values(v: np.ndarray, grid: Grid) -> list:
    vh = sfft.fftn(v)
    return [sfft.ifftn(1j * xi * vh) for xi in grid.wavevector()]


def _morawetz_density(u: np.ndarray, grid: Grid, msym: np.ndarray, kappa: float) -> float:
    """``int W . {N_bad, Iu} dy`` at one time."""
    Iu, nb = _n_bad_values(u, grid, msym, kappa)
    k = _kernels(grid, Nonlinearity("hartree", kappa))
    w_hat = k.density_hat(sfft.fftn(Iu))  # rfft layout, alias-free |Iu|^2
    w = sfft.irfftn(w_hat, s=grid.shape)
    wh = sfft.fftn(w)
    W = [sfft.ifftn(Kc * wh).real * grid.cell for Kc in _kernel_components(grid)]
    gI = _gradient_values(Iu, grid)
    gN = _gradient_values(nb, grid)
    total = 0.0
    for j in range(grid.n):
        br = dealiased_values(nb, gI[j], grid, conj_b=True) - dealiased_values(Iu, gN[j], grid, conj_b=True)
        total += float(np.sum(W[j] * br.real)) * grid.cell
    return total


def error_term(trace: SolutionTrace, p: IParams, kappa: float | None = None) -> float:
    """``| int_0^T int W(y) . {N_bad, Iu}(y) dy dt |`` with ``W = |Iu|^2 * K``."""
    g = trace.frames.grid
    _require_hartree(g)
    if kappa is None:
        kappa = trace.config.nonlinearity.kappa
    msym = i_multiplier_value(g.freq_abs(), p)
    vals = [_morawetz_density(trace.frames.data[k], g, msym, kappa) for k in range(len(trace.frames))]
    return float(abs(np.sum(trapezoid_weights(trace.times) * np.asarray(vals))))


def energy_deviation(trace: SolutionTrace, p: IParams) -> float:
    """``|E(Iu)(T) - E(Iu_0)|``."""
    nl = trace.config.nonlinearity
    return abs(modified_energy(trace.final, p, nl) - modified_energy(trace.initial, p, nl))


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------
@dataclass
class IMethodScan:
    """Per-``N`` measurements with the fitted report."""

    report: ScanReport
    N: list
    values: list
    z: list

    def write_csv(self, path) -> Path:
        """Columns ``N, deviation_or_error, Z_surrogate, slope_partial``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "deviation_or_error", "Z_surrogate", "slope_partial"])
            for i, (N, v, z) in enumerate(zip(self.N, self.values, self.z)):
                if i == 0 or v <= 0 or self.values[i - 1] <= 0:
                    sp = float("nan")
                else:
                    sp = math.log(v / self.values[i - 1]) / math.log(N / self.N[i - 1])
                w.writerow([repr(float(N)), repr(float(v)), repr(float(z)), repr(sp)])
        return path


def imethod_scan(
    kind: str,
    N_list: Sequence[float],
    s: float,
    config: NlsConfig,
    u0: Field,
    degenerate_below: float = 1e-10,
    trace: SolutionTrace | None = None,
) -> IMethodScan:
    """Decay in ``N`` of ``|E(Iu)(T) - E(Iu0)|`` (``kind="energy_deviation"``) or of the
    Morawetz error term (``kind="error_term"``) along one solution.

    Predicted slope ``-3/2`` (an upper-bound rate); the report passes when the
    fitted slope is ``<= -1`` and the values decrease strictly.  If every value
    is below ``degenerate_below`` the fit is skipped and flagged ``degenerate``.
    """
    if kind not in ("energy_deviation", "error_term"):
        raise ValueError(f"unknown scan kind {kind!r}")
    if config.nonlinearity.kind != "hartree":
        raise ValueError("I-method scans are defined for the Hartree nonlinearity")
    g = config.grid
    Ns = [check_dyadic(N) for N in N_list]
    for N in Ns:
        if N > g.resolvable:
            raise ValueError(f"N={N} lies beyond the resolved band {g.resolvable:.4g}")
    if trace is None:
        trace = solve(config, u0)
    vals, zs = [], []
    for N in Ns:
        p = IParams(N, s)
        vals.append(energy_deviation(trace, p) if kind == "energy_deviation" else error_term(trace, p))
        zs.append(z_norm(trace, p))
    flags = ["z-surrogate: finite pair list"]
    if all(v <= degenerate_below for v in vals):
        flags.append("degenerate")
    report = ScanReport(
        name=f"imethod-{kind}",
        points=[ScanPoint(N, (v,)) for N, v in zip(Ns, vals)],
        predicted=-1.5,
        tolerance=-1.0,
        sided="threshold",
        require_decreasing=True,
        param_name="N",
        flags=flags,
        extra={"kind": kind, "s": s, "z_surrogate": zs, "aborted": trace.aborted},
    )
    return IMethodScan(report, Ns, vals, zs)


def imethod_experiment(cfg, kind: str, out) -> dict:
    """Reference I-method scan plus the low-frequency control.

    The main scan uses the rough datum at cutoff ``K`` rescaled to mean density
    ``density``.  The control uses a small datum with spectrum in ``|xi| <=
    N_min / 4`` on a box of side ``control_L``; its values must all be at most
    ``control_tol`` (and the scan is flagged degenerate).
    """
    import json

    from .nls import mass, rough_datum

    out = Path(out)
    p = cfg.params
    grid = cfg.make_grid()
    nl = Nonlinearity("hartree", float(p["kappa"]))
    s, Ns = float(p["s"]), [float(N) for N in p["N"]]
    conf = NlsConfig(grid, nl, dt=float(p["dt"]), T=float(p["T"]), save_stride=int(p["save_stride"]))
    u = rough_datum(grid, s, float(p["K"]), cfg.seed)
    u0 = u * math.sqrt(float(p["density"]) * grid.L**grid.n / mass(u))
    scan = imethod_scan(kind, Ns, s, conf, u0)

    cgrid = Grid(grid.n, float(p["control_L"]), grid.M)
    cK = min(Ns) / 4
    c0 = rough_datum(cgrid, s, cK, cfg.seed, float(p["control_amplitude"]))
    cconf = NlsConfig(cgrid, nl, dt=conf.dt, T=conf.T, save_stride=int(p["save_stride"]))
    control = imethod_scan(kind, Ns, s, cconf, c0)
    ctrl_ok = max(control.values) <= float(p["control_tol"]) and "degenerate" in control.report.flags

    stem = "imethod_energy" if kind == "energy_deviation" else "imethod_error"
    p1 = scan.write_csv(out / f"{stem}.csv")
    p2 = control.write_csv(out / f"{stem}_control.csv")
    summary = scan.report.summary()
    summary["control"] = {"values": control.values, "tol": float(p["control_tol"]), "pass": bool(ctrl_ok)}
    summary["checks"] = {**summary.get("checks", {}), "control": bool(ctrl_ok)}
    summary["pass"] = bool(scan.report.passed and ctrl_ok)
    p3 = out / f"{stem}.json"
    p3.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    summary["files"] = [p1, p2, p3]
    return summary
