import math

import numpy as np
import pytest

from dlab.grid import Field, Grid, free_propagate, load_field
from dlab.norms import sobolev_norm
from dlab.nls import (
    NlsConfig, Nonlinearity, duhamel_h1, duhamel_part, energy, mass, potential, rough_datum, smoothing_scan, solve,
    strang_step, tilted_gaussian,
)

from conftest import plane_wave, random_field

HARTREE = Nonlinearity("hartree", 1.0)
G3 = Grid(3, 2 * math.pi, 16)


def _two_modes(grid, a, k, b, p):
    X = grid.coords()
    e = lambda q: np.exp(1j * sum(qj * x for qj, x in zip(q, X)))  # noqa: E731
    return Field(grid, a * e(k) + b * e(p))


# --- configuration ---------------------------------------------------------------------
def test_nonlinearity_and_config_validation():
    assert Nonlinearity("hartree").omega(3) == 0.25
    assert Nonlinearity("power").omega(3) == pytest.approx(0.3)
    Nonlinearity("power", -1.0)  # focusing is allowed
    with pytest.raises(ValueError):
        Nonlinearity("cubic")
    with pytest.raises(ValueError):
        Nonlinearity("power", math.nan)
    with pytest.raises(ValueError):
        NlsConfig(Grid(2, 6.0, 8), HARTREE)
    with pytest.raises(ValueError):
        NlsConfig(G3, HARTREE, dt=0.3, T=1.0)
    with pytest.raises(ValueError):
        NlsConfig(G3, HARTREE, dt=0.1, T=1.0, save_stride=3)
    with pytest.raises(ValueError):
        NlsConfig(G3, HARTREE, dt=2.0, T=1.0)
    assert NlsConfig(G3, HARTREE, dt=0.1, T=1.0, save_stride=5).steps == 10


# --- potential -------------------------------------------------------------------------
def test_hartree_plane_wave_potential_vanishes():
    V = potential(plane_wave(G3, (1, 2, 0)), HARTREE)
    assert np.max(np.abs(V.values)) <= 1e-13


def test_hartree_two_mode_potential_closed_form():
    a, b = 0.7 + 0.2j, -0.4 + 0.5j
    k, p = (1, 0, 2), (-1, 1, 0)
    u = _two_modes(G3, a, k, b, p)
    q = np.subtract(k, p)
    X = G3.coords()
    c = a * np.conj(b)
    expected = 2 * np.real(c * np.exp(1j * sum(qj * x for qj, x in zip(q, X)))) / np.linalg.norm(q)
    for kappa in (1.0, -0.5):
        V = potential(u, Nonlinearity("hartree", kappa))
        assert np.allclose(V.values, kappa * expected, atol=1e-12)
    # int V |u|^2 = 2 |c|^2 L^n / |q|
    E = energy(u, HARTREE)
    kin = 0.5 * G3.L**3 * (abs(a) ** 2 * np.dot(k, k) + abs(b) ** 2 * np.dot(p, p))
    assert E == pytest.approx(kin + 0.25 * 2 * abs(c) ** 2 * G3.L**3 / np.linalg.norm(q), rel=1e-12)


def test_power_potential_and_energy():
    g = Grid(3, 3.0, 8)
    u = plane_wave(Grid(3, 2 * math.pi, 8), (1, 0, 0))
    nl = Nonlinearity("power", 2.0)
    assert np.allclose(potential(u, nl).values, 2.0)
    L3 = u.grid.L**3
    assert energy(u, nl) == pytest.approx(0.5 * L3 + 0.3 * 2.0 * L3, rel=1e-12)
    assert energy(u, Nonlinearity("power", 0.0)) == pytest.approx(0.5 * mass(u), rel=1e-12)
    assert g.n == 3


def test_potential_is_real(rng):
    u = random_field(Grid(3, 5.0, 16), rng)
    for nl in (HARTREE, Nonlinearity("power", 1.0)):
        assert np.max(np.abs(potential(u, nl).values.imag)) <= 1e-13


def test_kinetic_energy_of_single_mode():
    u = plane_wave(G3, (2, 1, 0))
    assert energy(u, Nonlinearity("hartree", 0.0)) == pytest.approx(0.5 * 5 * mass(u), rel=1e-12)


def test_solver_rejects_carrier_frames():
    f = Field(G3, np.ones(G3.shape), carrier=(1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        strang_step(f, 0.1, HARTREE)


# --- stepping --------------------------------------------------------------------------
def test_free_step_is_exact(rng):
    u = random_field(G3, rng)
    nl0 = Nonlinearity("hartree", 0.0)
    assert np.allclose(strang_step(u, 0.37, nl0).values, free_propagate(u, 0.37).values, atol=1e-12)
    tr = solve(NlsConfig(G3, nl0, dt=0.05, T=1.0, save_stride=4), u)
    assert (tr.final - free_propagate(u, 1.0)).norm() <= 1e-10 * u.norm()
    D = duhamel_part(tr)
    assert np.max(np.abs(D.data)) <= 1e-10 * np.abs(u.values).max()


def test_mass_conservation_one_thousand_steps():
    g = Grid(3, 8.0, 16)
    u0 = tilted_gaussian(g)
    tr = solve(NlsConfig(g, HARTREE, dt=0.002, T=2.0, save_stride=100), u0)
    assert tr.steps_taken == 1000 and len(tr.frames) == 11
    assert tr.mass_drift() <= 1e-10 * tr.mass[0]
    step = strang_step(u0, 0.01, HARTREE)
    assert mass(step) == pytest.approx(mass(u0), rel=1e-12)


def _there_and_back(u0, dt, steps, nl):
    u = u0
    for _ in range(steps):
        u = strang_step(u, dt, nl)
    for _ in range(steps):
        u = strang_step(u, -dt, nl)
    return (u - u0).norm() / u0.norm()


def test_time_reversal_power_is_exact():
    g = Grid(3, 8.0, 16)
    # |u| is invariant under the phase substep, so a pointwise potential is recovered exactly
    assert _there_and_back(tilted_gaussian(g), 0.01, 20, Nonlinearity("power", 1.0)) <= 1e-13


def test_time_reversal_hartree_limited_by_resolution():
    # the alias-free density uses the trigonometric interpolant of |w|^2, which the phase substep
    # does not preserve; the return error therefore shrinks with M rather than with dt
    errs = [_there_and_back(tilted_gaussian(Grid(3, 8.0, M)), 0.01, 20, HARTREE) for M in (16, 32)]
    assert errs[0] <= 1e-8 and errs[1] <= errs[0] / 10


def test_gauge_invariance():
    g = Grid(3, 8.0, 16)
    u0 = tilted_gaussian(g)
    conf = NlsConfig(g, HARTREE, dt=0.01, T=0.1, save_stride=10)
    a = solve(conf, u0).final
    b = solve(conf, u0 * np.exp(0.9j)).final
    assert (b - a * np.exp(0.9j)).norm() <= 1e-12 * a.norm()


@pytest.mark.parametrize("nl,grid", [(Nonlinearity("power", 1.0), Grid(2, 10.0, 64)),
                                     (Nonlinearity("power", 1.0), Grid(3, 8.0, 32))])
def test_energy_drift_is_second_order_power(nl, grid):
    u0 = tilted_gaussian(grid)
    drifts = [solve(NlsConfig(grid, nl, dt=dt, T=0.5, save_stride=1), u0).energy_drift() for dt in (0.01, 0.005)]
    assert 3 <= drifts[0] / drifts[1] <= 5


def test_duhamel_starts_at_zero_and_scales_linearly_in_coupling():
    g = Grid(3, 8.0, 16)
    u0 = tilted_gaussian(g, amplitude=0.05)
    norms = []
    for kappa in (1.0, 0.5):
        tr = solve(NlsConfig(g, Nonlinearity("hartree", kappa), dt=0.01, T=0.5, save_stride=50), u0)
        D = duhamel_part(tr)
        assert np.all(D.data[0] == 0)
        norms.append(D.frame(len(D) - 1).norm())
    assert norms[0] / norms[1] == pytest.approx(2.0, rel=1e-3)


def test_blowup_proxy_aborts_with_partial_trace():
    g = Grid(2, 10.0, 64)
    u0 = tilted_gaussian(g, amplitude=3.0, tilt=0.0)
    conf = NlsConfig(g, Nonlinearity("power", -1.0), dt=0.001, T=0.5, save_stride=10, blowup_factor=2.0)
    tr = solve(conf, u0)
    assert tr.aborted and tr.steps_taken < conf.steps
    assert np.all(np.isfinite(tr.energy))
    assert tr.times[-1] < conf.T


def test_trace_exports(tmp_path):
    g = Grid(3, 8.0, 16)
    tr = solve(NlsConfig(g, HARTREE, dt=0.01, T=0.04, save_stride=2), tilted_gaussian(g))
    p = tr.write_csv(tmp_path / "trace.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "t,mass,energy,H1_of_D" and len(lines) == 4
    paths = tr.dump_frames(tmp_path / "frames")
    back = load_field(paths[-1])
    assert np.array_equal(back.values, tr.final.values)


# --- rough data and smoothing ------------------------------------------------------------
def test_rough_datum_h1_matches_lattice_sum():
    g = Grid(3, 5.5, 32)
    s, K, a = 0.75, 8.0, 0.3
    u0 = rough_datum(g, s, K, seed=4, amplitude=a)
    k = [np.arange(-g.M // 2, g.M // 2) * g.dk] * 3
    KX, KY, KZ = np.meshgrid(*k, indexing="ij")
    r2 = KX**2 + KY**2 + KZ**2
    sel = (r2 > 0) & (r2 <= K * K)
    oracle = math.sqrt(g.L**3 * np.sum(a * a * (1 + r2[sel]) ** (1 - s - 1.5)))
    assert sobolev_norm(u0, 1.0, "inhomogeneous") == pytest.approx(oracle, rel=1e-12)
    assert abs(u0.values.mean()) <= 1e-14


def test_rough_datum_is_nested_in_K():
    g = Grid(3, 5.5, 32)
    from dlab.grid import spectrum

    a = spectrum(rough_datum(g, 0.75, 4.0, seed=1))
    b = spectrum(rough_datum(g, 0.75, 8.0, seed=1))
    nz = np.abs(a) > 1e-10 * np.abs(a).max()
    assert np.allclose(a[nz], b[nz], rtol=1e-12)
    with pytest.raises(ValueError):
        rough_datum(g, 0.75, 100.0)


def test_rough_datum_growth_slope():
    from dlab.report import fit_exponent

    g = Grid(3, 5.5, 64)
    pts = [(K, sobolev_norm(rough_datum(g, 0.75, K), 1.0, "inhomogeneous")) for K in (8.0, 16.0, 32.0)]
    # lattice-sum value of the datum slope on this box; approaches 1 - s = 1/4 only slowly
    assert fit_exponent(pts).slope == pytest.approx(0.368, abs=0.01)


def test_smoothing_scan_degenerate_without_coupling():
    g = Grid(3, 5.5, 16)
    conf = NlsConfig(g, Nonlinearity("hartree", 0.0), dt=0.01, T=0.05, save_stride=5)
    r = smoothing_scan(0.75, [2.0, 4.0, 6.0], conf, amplitude=0.3)
    assert "degenerate" in r.flags and r.fit is None and not r.passed


def test_smoothing_scan_report_contents():
    g = Grid(3, 5.5, 16)
    conf = NlsConfig(g, HARTREE, dt=0.01, T=0.1, save_stride=5)
    r = smoothing_scan(0.75, [2.0, 4.0, 6.0], conf, amplitude=0.3)
    # too short and too coarse to show smoothing; checks only the report contents
    assert r.fit is not None and r.sided == "threshold" and r.tolerance == 0.2
    assert len(r.extra["datum_points"]) == 3 and "datum_slope" in r.checks
    assert all(p.trials[0] > 0 for p in r.points)


def test_duhamel_h1_zero_at_start():
    g = Grid(3, 8.0, 16)
    tr = solve(NlsConfig(g, HARTREE, dt=0.01, T=0.02), tilted_gaussian(g))
    h = duhamel_h1(tr)
    assert h[0] == 0 and h[-1] > 0
