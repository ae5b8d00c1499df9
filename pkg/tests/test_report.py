import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlab.report import ScanPoint, ScanReport, fit_exponent, read_scan_csv


def _points(values, params=(2, 4, 8, 16)):
    return [ScanPoint(p, (v,)) for p, v in zip(params, values)]


def test_fit_exact_power_law():
    fit = fit_exponent([(N, 3 * N**-0.5) for N in (1, 2, 4, 8, 16)])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)


def test_fit_constant_data():
    fit = fit_exponent([(1, 2.0), (2, 2.0), (4, 2.0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-14) and fit.r_squared == 1.0


def test_fit_with_noise():
    rng = np.random.default_rng(7)
    Ns = 2.0 ** np.arange(1, 9)
    pts = [(N, 3 * N**-0.5 * (1 + 0.01 * rng.standard_normal())) for N in Ns]
    fit = fit_exponent(pts)
    assert abs(fit.slope + 0.5) <= 0.05
    assert fit.r_squared > 0.99


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (4, 1)], [(1, 1), (-2, 1), (4, 1)],
                                 [(2, 1), (2, 2), (2, 3)], [(1, 1), (2, math.inf), (4, 1)]])
def test_fit_rejects(pts):
    with pytest.raises(ValueError):
        fit_exponent(pts)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 100))
def test_fit_recovers_any_exponent(a, c):
    fit = fit_exponent([(N, c * N**a) for N in (1, 2, 4, 8)])
    assert fit.slope == pytest.approx(a, abs=1e-9)


def test_scan_point_statistics():
    p = ScanPoint(4, (1.0, 4.0))
    assert p.mean == 2.5 and p.geo_mean == pytest.approx(2.0) and p.n_trials == 2
    assert p.stderr == pytest.approx(np.std(np.log([1, 4]), ddof=1) / math.sqrt(2))
    assert ScanPoint(4, (3.0,)).stderr == 0.0
    assert math.isnan(ScanPoint(4, (0.0, 1.0)).geo_mean)


def test_pass_rules():
    pts = _points([N**-0.5 for N in (2, 4, 8, 16)])
    assert ScanReport("a", pts, predicted=-0.5, tolerance=0.1, sided="two-sided").passed
    assert not ScanReport("b", pts, predicted=-0.2, tolerance=0.1, sided="two-sided").passed
    # upper: decay at least as fast as predicted
    assert ScanReport("c", pts, predicted=-0.2, tolerance=0.1, sided="upper").passed
    assert not ScanReport("d", pts, predicted=-0.8, tolerance=0.1, sided="upper").passed
    assert ScanReport("e", pts, predicted=0, tolerance=-0.4, sided="threshold").passed
    assert not ScanReport("f", pts, predicted=0, tolerance=-0.6, sided="threshold").passed
    with pytest.raises(ValueError):
        ScanReport("g", pts, predicted=0, tolerance=0, sided="sideways")


def test_extra_requirements():
    pts = _points([1.0, 0.5, 0.6, 0.2])
    base = dict(predicted=-0.5, tolerance=1.0, sided="two-sided")
    assert ScanReport("a", pts, **base).passed
    assert not ScanReport("b", pts, require_decreasing=True, **base).passed
    assert not ScanReport("c", pts, min_r_squared=0.99, **base).passed
    assert not ScanReport("d", pts, checks={"ok": False}, **base).passed


def test_underdetermined_and_degenerate():
    r = ScanReport("a", _points([1.0, 0.5], params=(2, 4)), predicted=-1, tolerance=0.1)
    assert "underdetermined" in r.flags and not r.passed and math.isnan(r.fitted_slope)
    d = ScanReport("b", _points([1, 1, 1]), predicted=0, tolerance=1, flags=["degenerate"])
    assert d.fit is None and not d.passed
    z = ScanReport("c", _points([1.0, 0.0, 1.0]), predicted=0, tolerance=1)
    assert any(f.startswith("fit-rejected") for f in z.flags)


def test_csv_and_json_round_trip(tmp_path):
    pts = [ScanPoint(N, (N**-0.5, 1.1 * N**-0.5)) for N in (2, 4, 8)]
    r = ScanReport("demo", pts, predicted=-0.5, tolerance=0.1, extra={"pair": "4,4", "inf": math.inf})
    csv_path, json_path = r.write(tmp_path / "sub" / "demo")
    rows = read_scan_csv(csv_path)
    assert [row["param"] for row in rows] == [2.0, 4.0, 8.0]
    assert rows[1]["n_trials"] == 2 and rows[1]["geo_mean"] == pytest.approx(pts[1].geo_mean, rel=1e-15)
    side = json.loads(json_path.read_text())
    assert side["schema"] == 1 and side["pass"] is True and side["rule"] == "upper"
    assert side["fitted_slope"] == pytest.approx(-0.5, abs=1e-12)
    assert side["extra"] == {"pair": "4,4", "inf": "inf"}
    # deterministic bytes
    first = csv_path.read_bytes(), json_path.read_bytes()
    r.write(tmp_path / "sub" / "demo")
    assert (csv_path.read_bytes(), json_path.read_bytes()) == first
