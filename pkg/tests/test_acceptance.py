"""Acceptance gate.

Each test prints one ``[PASS]/[FAIL] <criterion>`` line (also collected in the
terminal summary) and then asserts it.  Tolerances are fixed constants below and
must not be loosened to make a run pass.

Run only this file with ``pytest -m acceptance -s``.
"""
from fractions import Fraction
import math

import numpy as np
import pytest

from dlab.grid import Field, Grid, free_propagate, from_spectrum, spectrum
from dlab.imethod import IParams, b_bound, imethod_scan
from dlab.interaction import CollisionGeometry, bilinear_decay_scan, sharpness_scan, trilinear_decay_scan
from dlab.littlewood_paley import SupportSpec, band_random, lp_decompose
from dlab.nls import Nonlinearity, NlsConfig, mass, rough_datum, smoothing_scan, solve, tilted_gaussian
from dlab.norms import predicted_exponents, smoothing_threshold
from dlab.wavepackets import (
    Tube, off_tube_mass, packet_decompose, packet_grid, packet_reconstruct, random_q1_datum, synthesize_packet,
)

pytestmark = pytest.mark.acceptance

# ---- pinned tolerances -------------------------------------------------------
CORE_TOL = 1e-10
BILINEAR_PREDICTED, BILINEAR_TOL, BILINEAR_R2 = -0.5, 0.15, 0.95
TRILINEAR_PREDICTED, TRILINEAR_TOL = -0.5, 0.15
SHARP_PREDICTED, SHARP_TOL = 0.5, 0.2
WAVEPACKET_RECON_TOL = 1e-8
RICHARDSON_RANGE = (3.0, 5.0)
MASS_TOL = 1e-10
DATUM_SLOPE, DATUM_TOL, DUHAMEL_MAX_SLOPE = 0.25, 0.1, 0.2
IMETHOD_MAX_SLOPE, CONTROL_TOL = -1.0, 1e-10


def _rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


# ---- 1 -----------------------------------------------------------------------
def test_c01_core_exactness(record_criterion):
    rng = np.random.default_rng(1)
    errs = {}
    # Parseval (n = 1, 2, 3)
    e = 0.0
    for n, M in ((1, 256), (2, 64), (3, 32)):
        g = Grid(n, 20.0, M)
        f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
        fh = spectrum(f)
        l2_hat = math.sqrt(np.sum(np.abs(fh) ** 2) * (g.dk / (2 * math.pi)) ** n)
        e = max(e, abs(l2_hat - f.norm()) / f.norm(), _rel(from_spectrum(g, fh).values, f.values))
    errs["parseval"] = e
    # unitarity and group law
    g = Grid(2, 20.0, 64)
    e_u = e_g = 0.0
    for _ in range(20):
        f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
        s, t = rng.uniform(-10, 10, 2)
        e_u = max(e_u, abs(free_propagate(f, t).norm() - f.norm()) / f.norm())
        e_g = max(e_g, _rel(free_propagate(free_propagate(f, s), t).values, free_propagate(f, s + t).values))
    errs["unitarity"], errs["group_law"] = e_u, e_g
    # LP partition of unity
    f = band_random(Grid(2, 40.0, 128), "ball:c=(0,0),r=8", 3)
    low, bands = lp_decompose(f)
    total = low.values + sum(b.values for b in bands.values())
    errs["lp_partition"] = _rel(total, f.values)
    # gauge invariance and mass conservation of the solver
    g3 = Grid(3, 8.0, 32)
    u0 = tilted_gaussian(g3)
    cfg = NlsConfig(g3, Nonlinearity("hartree", 1.0), dt=0.01, T=0.2, save_stride=20)
    theta = 0.7
    a = solve(cfg, u0)
    b = solve(cfg, u0 * np.exp(1j * theta))
    errs["gauge"] = _rel(b.final.values, np.exp(1j * theta) * a.final.values)
    errs["mass"] = a.mass_drift() / a.mass[0]
    worst = max(errs.values())
    ok = worst <= CORE_TOL
    record_criterion("1 core exactness", ok, ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f" (tol {CORE_TOL:g})")
    assert ok


# ---- 2 -----------------------------------------------------------------------
def test_c02_bilinear_decay(record_criterion):
    rep = bilinear_decay_scan(Grid(2, 96.0, 128), "4,4", 1, [4, 8, 16, 32], trials=8, seed=0,
                              geometry=CollisionGeometry(width=1.5, kappa=2.0, samples=65),
                              tolerance=BILINEAR_TOL, min_r_squared=BILINEAR_R2)
    slope, r2 = rep.fit.slope, rep.fit.r_squared
    ok = slope <= BILINEAR_PREDICTED + BILINEAR_TOL and r2 >= BILINEAR_R2
    record_criterion("2 bilinear decay", ok,
                     f"slope={slope:.3f} (<= {BILINEAR_PREDICTED + BILINEAR_TOL:g}), r2={r2:.4f} (>= {BILINEAR_R2})")
    assert ok and rep.passed


# ---- 3 -----------------------------------------------------------------------
def test_c03_trilinear_decay(record_criterion):
    reps = trilinear_decay_scan(Grid(3, 48.0, 64), ["1,2", "2,6/5"], "high3", [2, 4, 8, 16], trials=8, seed=0,
                                geometry=CollisionGeometry(width=1.5, kappa=1.0, samples=33),
                                tolerance=TRILINEAR_TOL)
    bound = TRILINEAR_PREDICTED + TRILINEAR_TOL
    slopes = {k: r.fit.slope for k, r in reps.items()}
    ok = all(s <= bound for s in slopes.values())
    record_criterion("3 trilinear decay", ok,
                     ", ".join(f"{k}: slope={s:.3f}" for k, s in slopes.items()) + f" (<= {bound:g})")
    assert ok


# ---- 4 -----------------------------------------------------------------------
def test_c04_sharpness(record_criterion):
    rep = sharpness_scan(2, "4,4", [1 / 4, 1 / 8, 1 / 16], M=256, tolerance=SHARP_TOL)
    assert rep.predicted == SHARP_PREDICTED
    slope = rep.fit.slope
    ok = abs(slope - SHARP_PREDICTED) <= SHARP_TOL
    record_criterion("4 sharpness lower bound", ok, f"slope={slope:.3f} ({SHARP_PREDICTED} +/- {SHARP_TOL})")
    assert ok


# ---- 5 -----------------------------------------------------------------------
def test_c05_wave_packets(record_criterion):
    lam = 256
    grid = packet_grid(lam, 1)
    errs = []
    for t in range(20):
        f = random_q1_datum(grid, t)
        errs.append((packet_reconstruct(packet_decompose(f, lam)) - f).norm() / f.norm())
    fr = []
    for lm in (256, 1024):
        g = packet_grid(lm, 1)
        s = math.sqrt(lm)
        tube = Tube((0.0,), (round(0.5 * s) / s,), lm)
        fr.append(off_tube_mass((tube, synthesize_packet(g, tube)), 0.25, np.linspace(-4 * lm, 4 * lm, 129)))
    ok = max(errs) <= WAVEPACKET_RECON_TOL and fr[1] < fr[0]
    record_criterion("5 wave packets", ok,
                     f"max reconstruction error={max(errs):.1e} (<= {WAVEPACKET_RECON_TOL:g}), "
                     f"off-tube(256)={fr[0]:.4f} > off-tube(1024)={fr[1]:.4f}")
    assert ok


# ---- 6 -----------------------------------------------------------------------
def test_c06_solver_order(record_criterion):
    g = Grid(3, 8.0, 64)
    u0 = tilted_gaussian(g)
    nl = Nonlinearity("hartree", 1.0)
    drifts, mdrift = [], []
    for dt in (0.01, 0.005):
        tr = solve(NlsConfig(g, nl, dt=dt, T=0.5, save_stride=5), u0)
        drifts.append(tr.energy_drift())
        mdrift.append(tr.mass_drift() / tr.mass[0])
    ratio = drifts[0] / drifts[1]
    ok = RICHARDSON_RANGE[0] <= ratio <= RICHARDSON_RANGE[1] and max(mdrift) <= MASS_TOL
    record_criterion("6 solver order", ok,
                     f"Richardson ratio={ratio:.3f} (in {list(RICHARDSON_RANGE)}), mass drift={max(mdrift):.1e} (<= {MASS_TOL:g})")
    assert ok


# ---- 7 -----------------------------------------------------------------------
def test_c07_smoothing(record_criterion):
    cfg = NlsConfig(Grid(3, 5.5, 64), Nonlinearity("hartree", 1.0), dt=0.0025, T=0.5, save_stride=20)
    rep = smoothing_scan(0.75, [8, 16, 32], cfg, seed=0, amplitude=0.3,
                         datum_tolerance=DATUM_TOL, duhamel_bound=DUHAMEL_MAX_SLOPE)
    d_slope, u_slope = rep.fit.slope, rep.extra["datum_slope"]
    ok = abs(u_slope - DATUM_SLOPE) <= DATUM_TOL and d_slope <= DUHAMEL_MAX_SLOPE
    record_criterion("7 smoothing", ok,
                     f"datum H1 slope={u_slope:.3f} ({DATUM_SLOPE} +/- {DATUM_TOL}), "
                     f"sup|D|_H1 slope={d_slope:.3f} (<= {DUHAMEL_MAX_SLOPE})")
    assert ok


# ---- 8, 9 --------------------------------------------------------------------
IM_S, IM_N = 0.75, [8, 16, 32]


@pytest.fixture(scope="module")
def imethod_traces():
    g = Grid(3, 2.8, 64)
    nl = Nonlinearity("hartree", 1.0)
    cfg = NlsConfig(g, nl, dt=0.00125, T=0.5, save_stride=40)
    u = rough_datum(g, IM_S, 24, 0)
    u0 = u * math.sqrt(g.L**3 / mass(u))  # mean density 1
    gc = Grid(3, 5.6, 64)
    ccfg = NlsConfig(gc, nl, dt=0.00125, T=0.5, save_stride=40)
    c0 = rough_datum(gc, IM_S, min(IM_N) / 4, 0, 0.02)  # spectrum inside |xi| <= N_min / 4
    return (cfg, u0, solve(cfg, u0)), (ccfg, c0, solve(ccfg, c0))


def test_c08_almost_conservation(record_criterion, imethod_traces):
    (cfg, u0, tr), (ccfg, c0, ctr) = imethod_traces
    sc = imethod_scan("energy_deviation", IM_N, IM_S, cfg, u0, trace=tr)
    ctrl = imethod_scan("energy_deviation", IM_N, IM_S, ccfg, c0, trace=ctr)
    slope = sc.report.fit.slope
    dec = sc.report.strictly_decreasing
    ok = dec and slope <= IMETHOD_MAX_SLOPE and max(ctrl.values) <= CONTROL_TOL
    record_criterion("8 almost conservation", ok,
                     f"deviation={['%.2e' % v for v in sc.values]} decreasing={dec}, slope={slope:.2f} "
                     f"(<= {IMETHOD_MAX_SLOPE}), control max={max(ctrl.values):.1e} (<= {CONTROL_TOL:g})")
    assert ok


def test_c09_morawetz_error(record_criterion, imethod_traces):
    (cfg, u0, tr), _ = imethod_traces
    sc = imethod_scan("error_term", IM_N, IM_S, cfg, u0, trace=tr)
    slope = sc.report.fit.slope
    dec = sc.report.strictly_decreasing
    case1 = [b_bound(N2, N3, N4, IParams(64, IM_S), samples=500, seed=1)["value"]
             for N2, N3, N4 in ((4, 2, 1), (4, 4, 4), (2, 1, 1))]
    ok = dec and slope <= IMETHOD_MAX_SLOPE and all(v == 0.0 for v in case1)
    record_criterion("9 Morawetz error decay", ok,
                     f"error={['%.2e' % v for v in sc.values]} decreasing={dec}, slope={slope:.2f} "
                     f"(<= {IMETHOD_MAX_SLOPE}), case-1 multiplier bound={case1}")
    assert ok


# ---- 10 ----------------------------------------------------------------------
def test_c10_thresholds(record_criterion):
    alpha = predicted_exponents("8/3,4", 3).alpha
    gwp = predicted_exponents("2,6", 3).gwp_threshold
    s5 = smoothing_threshold(5)
    ok = (alpha == Fraction(1, 2) and isinstance(alpha, Fraction)
          and gwp == Fraction(4, 13) and s5 == 1 - Fraction(8, 25) and isinstance(s5, Fraction))
    record_criterion("10 thresholds", ok, f"alpha={alpha}, gwp(3)={gwp}, s_5={s5}")
    assert ok
