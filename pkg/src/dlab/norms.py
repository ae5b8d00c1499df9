"""Mixed space-time norms, Sobolev norms, admissibility and predicted exponents.

Exponent arithmetic is done with :class:`fractions.Fraction` whenever the inputs
are rational, so threshold identities can be checked exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

import numpy as np
import scipy.fft as sfft

from .grid import Field, Grid, SpacetimeField

Exponent = Union[Fraction, float]
INF = math.inf


def as_exponent(x) -> Exponent:
    """Parse ``x`` as an exponent in ``[1, inf]``: ints, Fractions and strings stay exact."""
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return INF
        return Fraction(s)
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    x = float(x)
    return INF if math.isinf(x) else x


def inv(x: Exponent) -> Exponent:
    """``1/x`` with ``1/inf = 0`` (exact for Fractions)."""
    if x == INF:
        return Fraction(0)
    if isinstance(x, Fraction):
        return 1 / x
    return 1.0 / x


def _from_inv(y: Exponent) -> Exponent:
    if y == 0:
        return INF
    return 1 / y


@dataclass(frozen=True)
class LebesguePair:
    """A pair ``(q, r)`` indexing ``L^q_t L^r_x``."""

    q: Exponent
    r: Exponent

    def __post_init__(self):
        q, r = as_exponent(self.q), as_exponent(self.r)
        for name, v in (("q", q), ("r", r)):
            if not (v >= 1):
                raise ValueError(f"exponent {name}={v} must be >= 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @classmethod
    def parse(cls, text) -> "LebesguePair":
        """Accept ``"8/3,4"``, ``(8/3, 4)``, ``["inf", 2]`` or a LebesguePair."""
        if isinstance(text, LebesguePair):
            return text
        if isinstance(text, str):
            parts = text.strip().strip("()").split(",")
        else:
            parts = list(text)
        if len(parts) != 2:
            raise ValueError(f"expected two exponents, got {text!r}")
        return cls(as_exponent(parts[0]), as_exponent(parts[1]))

    def half(self) -> "LebesguePair":
        """``(q/2, r/2)``, the pair used for bilinear products."""
        return LebesguePair(self.q / 2 if self.q != INF else INF, self.r / 2 if self.r != INF else INF)

    def dual(self) -> "LebesguePair":
        """Hoelder conjugates ``(q', r')``."""
        return LebesguePair(_from_inv(1 - inv(self.q)), _from_inv(1 - inv(self.r)))

    def __str__(self) -> str:
        def f(v):
            if v == INF:
                return "inf"
            if isinstance(v, Fraction):
                return str(v)
            return repr(v)

        return f"({f(self.q)},{f(self.r)})"

    def as_floats(self) -> tuple:
        return float(self.q), float(self.r)


def admissible_check(p: LebesguePair, n: int) -> bool:
    """Schroedinger admissibility ``2/q = n (1/2 - 1/r)``, ``q >= 2`` and ``(q,r,n) != (2,inf,2)``."""
    p = LebesguePair.parse(p)
    if p.q < 2:
        return False
    if n == 2 and p.q == 2 and p.r == INF:
        return False
    lhs = 2 * inv(p.q)
    rhs = n * (Fraction(1, 2) - inv(p.r)) if isinstance(inv(p.r), Fraction) else n * (0.5 - inv(p.r))
    if isinstance(lhs, Fraction) and isinstance(rhs, Fraction):
        return lhs == rhs
    return abs(float(lhs) - float(rhs)) <= 1e-12


@dataclass(frozen=True)
class Exponents:
    """Predicted scaling exponents for a pair ``(q, r)`` in dimension ``n``."""

    alpha: Exponent
    bilinear_gain: Exponent
    trilinear_gain: Exponent
    cap_lower: Exponent
    gwp_threshold: Exponent


def predicted_exponents(p, n: int) -> Exponents:
    """Closed-form exponents; exact rationals for rational ``(q, r)``.

    * ``alpha = (n+1)(1 - 2/r) - 4/q`` (scaling exponent of the bilinear estimate)
    * ``bilinear_gain = 1 - 2/r``
    * ``trilinear_gain = 1/2``
    * ``cap_lower = n + 1 - 2(n+1)/r - 4/q`` (squashed-cap lower bound)
    * ``gwp_threshold = 4(n-2)/(7n-8)``
    """
    p = LebesguePair.parse(p)
    iq, ir = inv(p.q), inv(p.r)
    alpha = (n + 1) * (1 - 2 * ir) - 4 * iq
    cap = n + 1 - 2 * (n + 1) * ir - 4 * iq
    return Exponents(
        alpha=alpha,
        bilinear_gain=1 - 2 * ir,
        trilinear_gain=Fraction(1, 2),
        cap_lower=cap,
        gwp_threshold=Fraction(4 * (n - 2), 7 * n - 8),
    )


def smoothing_threshold(n: int, kind: str = "power") -> Fraction:
    """Regularity above which the nonlinear part is predicted to be smoother.

    Power-type: ``1/2`` for ``n = 3, 4`` and ``1 - 8/n**2`` for ``n >= 5``.
    Hartree (``n >= 3``): ``1/2``.
    """
    if n < 3:
        raise ValueError("smoothing thresholds are defined for n >= 3")
    if kind == "hartree" or n in (3, 4):
        return Fraction(1, 2)
    if kind == "power":
        return 1 - Fraction(8, n * n)
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------
def spatial_norm(values: np.ndarray, r: Exponent, cell: float) -> float:
    """``L^r`` norm of grid samples with volume element ``cell``."""
    a = np.abs(values)
    if r == INF:
        return float(a.max())
    r = float(r)
    if r == 2.0:
        return float(np.sqrt(cell * np.sum(a * a)))
    if r == 1.0:
        return float(cell * np.sum(a))
    return float((cell * np.sum(a**r)) ** (1.0 / r))


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def time_norm(slice_norms: Sequence[float], times: Sequence[float], q: Exponent) -> float:
    """``L^q_t`` norm of per-time spatial norms (trapezoidal quadrature)."""
    g = np.asarray(slice_norms, dtype=float)
    if q == INF:
        return float(g.max())
    q = float(q)
    w = trapezoid_weights(np.asarray(times, dtype=float))
    return float(np.sum(w * g**q) ** (1.0 / q))


def mixed_norm(F: SpacetimeField, p) -> float:
    """``||F||_{L^q_t L^r_x}`` with trapezoidal time quadrature."""
    p = LebesguePair.parse(p)
    cell = F.grid.cell
    slices = [spatial_norm(F.data[k], p.r, cell) for k in range(len(F))]
    return time_norm(slices, F.times, p.q)


def sobolev_norm(f: Field, s: float, kind: str = "homogeneous") -> float:
    """``||f||_{H^s}`` (``<xi>^s`` weight) or ``||f||_{\\dot H^s}`` (``|xi|^s``, zero mode dropped)."""
    g = f.grid
    xi = g.freq_abs(f.carrier)
    if kind == "homogeneous":
        if s == 0:
            w = np.ones_like(xi)
        else:
            w = np.where(xi > 0, np.power(np.where(xi > 0, xi, 1.0), s), 0.0)
    elif kind == "inhomogeneous":
        w = np.power(1.0 + xi * xi, s / 2)
    else:
        raise ValueError(f"kind must be 'homogeneous' or 'inhomogeneous', got {kind!r}")
    fh = sfft.fftn(f.values)
    # Parseval with the unnormalised FFT: ||f||^2 = cell / M^n * sum |fft|^2
    return float(np.sqrt(g.cell / g.M**g.n * np.sum(w * w * np.abs(fh) ** 2)))


def smooth_window(times: np.ndarray) -> np.ndarray:
    """C-infinity bump on ``[t0, t0+T]`` equal to 1 on the middle half."""
    from .littlewood_paley import smooth_step

    t = np.asarray(times, dtype=float)
    t0, T = t[0], t[-1] - t[0]
    if T <= 0:
        raise ValueError("window needs a positive time span")
    a = (t - t0) / (T / 4)
    b = (t0 + T - t) / (T / 4)
    return smooth_step(a) * smooth_step(b)


def xsb_norm(
    F: SpacetimeField,
    s: float,
    b: float,
    window: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Windowed Bourgain norm ``||<xi>^s <tau - |xi|^2>^b (window * u)~||_{L^2}``.

    The time transform is taken periodically over the ``K`` uniform samples
    (period ``K * dt``), and the transform sign is such that ``e^{it Delta} f``
    concentrates on ``tau = |xi|^2``.  For ``s = b = 0`` the result equals the
    rectangle-rule space-time L^2 norm of the windowed trajectory.
    """
    t = F.times
    K = len(t)
    if K < 8:
        raise ValueError("X^{s,b} needs at least 8 time samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("X^{s,b} needs uniformly spaced times")
    dt = float(dt[0])
    w = smooth_window(t) if window is None else np.asarray(window(t), dtype=float)
    g = F.grid
    U = F.data * w.reshape((K,) + (1,) * g.n)
    # space: forward FFT; time: e^{+i t tau} so that e^{-i t |xi|^2} -> tau = |xi|^2
    Uh = sfft.ifft(sfft.fftn(U, axes=tuple(range(1, g.n + 1))), axis=0) * K
    tau = 2 * np.pi * np.fft.fftfreq(K, d=dt)
    xi = g.freq_abs(F.carrier)
    weight = (1.0 + xi * xi) ** (s / 2)
    modulation = np.sqrt(1.0 + (tau.reshape((K,) + (1,) * g.n) - xi * xi) ** 2) ** b
    total = np.sum((weight * modulation * np.abs(Uh)) ** 2)
    # Parseval: dt * cell * sum |U|^2 = dt/K * cell/M^n * sum |Uh|^2
    return float(np.sqrt(dt / K * g.cell / g.M**g.n * total))
