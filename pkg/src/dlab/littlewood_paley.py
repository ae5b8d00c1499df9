"""Littlewood-Paley projections, frequency sets and reproducible random data.

The cutoff ``chi(xi) = theta(|xi|) - theta(2|xi|)`` is built from a C-infinity
ramp ``theta`` equal to 1 on ``[0, 1]`` and 0 on ``[2, inf)``.  ``P_N`` has
symbol ``chi(xi / N)`` and is supported in the annulus ``N/2 <= |xi| <= 2N``;
the low piece has symbol ``theta(|xi|)`` and carries the zero frequency.

Random coefficients are drawn from a counter-based generator keyed by
``(seed, integer lattice index)``.  A coefficient therefore does not depend on
the grid size, on the frequency set or on the order of evaluation, so families
of data at different truncations are nested and grid refinement keeps the
same function.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import Field, Grid, apply_symbol, from_spectrum, normalize_carrier


class EmptyBandWarning(UserWarning):
    """The requested dyadic band does not meet the frequency lattice."""


# ---------------------------------------------------------------------------
# smooth cutoffs
# ---------------------------------------------------------------------------
def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``, monotone in between."""
    a = _g(x)
    b = _g(1.0 - np.asarray(x, dtype=float))
    return a / (a + b)


def theta(r) -> np.ndarray:
    """Radial ramp: 1 on ``[0, 1]``, 0 on ``[2, inf)``."""
    return smooth_step(2.0 - np.asarray(r, dtype=float))


def chi(r) -> np.ndarray:
    """Dyadic annulus cutoff ``theta(r) - theta(2r)`` supported in ``[1/2, 2]``."""
    r = np.asarray(r, dtype=float)
    return theta(r) - theta(2.0 * r)


def check_dyadic(N) -> float:
    """Validate that ``N`` is an integer power of two (possibly negative exponent)."""
    N = float(N)
    if not (N > 0 and np.isfinite(N)):
        raise ValueError(f"dyadic index must be positive, got {N}")
    e = math.log2(N)
    if abs(e - round(e)) > 1e-12:
        raise ValueError(f"dyadic index must be a power of two, got {N}")
    return float(2.0 ** round(e))


def lp_project(f: Field, N) -> Field:
    """``P_N f`` with symbol ``chi(|xi| / N)``."""
    N = check_dyadic(N)
    xi = f.grid.freq_abs(f.carrier)
    sym = chi(xi / N)
    if not np.any(sym > 0):
        warnings.warn(f"annulus A({N:g}) meets no lattice frequency; output is zero", EmptyBandWarning, stacklevel=2)
    return apply_symbol(f, sym)


def low_project(f: Field) -> Field:
    """Low-frequency piece with symbol ``theta(|xi|)`` (spectrum in ``|xi| <= 2``)."""
    return apply_symbol(f, theta(f.grid.freq_abs(f.carrier)))


def dyadic_levels(grid: Grid, carrier=None, homogeneous: bool = False) -> list:
    """Dyadic ``N`` whose annuli cover the lattice.

    Inhomogeneous: ``N = 2, 4, ...`` complementing :func:`low_project`.
    Homogeneous: all ``N`` down to the smallest non-zero lattice frequency.
    """
    xi = grid.freq_abs(carrier)
    top = float(xi.max())
    # theta(|xi|) + sum_{N=2..2^J} chi(|xi|/N) = theta(|xi| / 2^J), which is 1 once 2^J >= |xi|
    j_hi = max(1, math.ceil(math.log2(max(top, 1.0)) - 1e-12))
    if not homogeneous:
        return [2.0**j for j in range(1, j_hi + 1)]
    nz = xi[xi > 0]
    lo = float(nz.min()) if nz.size else 1.0
    # sum_{N=2^a..} chi(|xi|/N) misses only theta(2|xi|/2^a), which vanishes for |xi| >= 2^a
    j_lo = math.floor(math.log2(lo) + 1e-12)
    return [2.0**j for j in range(j_lo, j_hi + 1)]


def lp_decompose(f: Field, homogeneous: bool = False):
    """Return ``(low, {N: P_N f})`` summing exactly to ``f``.

    In the homogeneous decomposition the low piece only holds the exact zero
    frequency.
    """
    levels = dyadic_levels(f.grid, f.carrier, homogeneous)
    pieces = {N: lp_project(f, N) for N in levels}
    if homogeneous:
        xi = f.grid.freq_abs(f.carrier)
        low = apply_symbol(f, (xi == 0).astype(float))
    else:
        low = low_project(f)
    return low, pieces


# ---------------------------------------------------------------------------
# frequency sets
# ---------------------------------------------------------------------------
def _num(text: str) -> float:
    return float(Fraction(text.strip()))


def _fmt(x: float) -> str:
    fr = Fraction(x).limit_denominator(1 << 20)
    if float(fr) == x:
        return str(fr.numerator) if fr.denominator == 1 else f"{fr.numerator}/{fr.denominator}"
    return repr(float(x))


@dataclass(frozen=True)
class SupportSpec:
    """A frequency set: ``annulus`` A(N), ``ball`` B(c, r), ``cube`` Q(a) or squashed ``cap``.

    Text forms: ``annulus:N=8``, ``ball:c=(1,0,0),r=0.25``, ``cube:a=1`` (the cube
    ``|xi_j| <= a``) and ``cap:rho=0.125,sign=+`` (the set
    ``|xi_1 - sign| <= rho**2``, ``|xi_j| <= rho`` for ``j >= 2``).
    """

    kind: str
    N: float = 0.0
    center: tuple = ()
    radius: float = 0.0
    rho: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if self.kind not in ("annulus", "ball", "cube", "cap"):
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.kind == "annulus":
            check_dyadic(self.N)
        if self.kind in ("ball", "cube") and not self.radius > 0:
            raise ValueError("ball/cube radius must be positive")
        if self.kind == "cap":
            if not (0 < self.rho < 1):
                raise ValueError("cap parameter rho must lie in (0, 1)")
            if self.sign not in (1, -1):
                raise ValueError("cap sign must be +1 or -1")

    # constructors -----------------------------------------------------------
    @classmethod
    def annulus(cls, N) -> "SupportSpec":
        return cls("annulus", N=check_dyadic(N))

    @classmethod
    def ball(cls, center, r) -> "SupportSpec":
        return cls("ball", center=tuple(float(c) for c in center), radius=float(r))

    @classmethod
    def cube(cls, a) -> "SupportSpec":
        return cls("cube", radius=float(a))

    @classmethod
    def cap(cls, rho, sign=1) -> "SupportSpec":
        return cls("cap", rho=float(rho), sign=int(sign))

    @classmethod
    def parse(cls, text: str) -> "SupportSpec":
        text = text.strip().replace(" ", "")
        kind, _, rest = text.partition(":")
        try:
            if kind == "annulus":
                m = re.fullmatch(r"N=([^,]+)", rest)
                return cls.annulus(_num(m.group(1)))
            if kind == "ball":
                m = re.fullmatch(r"c=\(([^)]*)\),r=([^,]+)", rest)
                center = tuple(_num(c) for c in m.group(1).split(","))
                return cls.ball(center, _num(m.group(2)))
            if kind == "cube":
                m = re.fullmatch(r"a=([^,]+)", rest)
                return cls.cube(_num(m.group(1)))
            if kind == "cap":
                m = re.fullmatch(r"rho=([^,]+),sign=([+-])", rest)
                return cls.cap(_num(m.group(1)), 1 if m.group(2) == "+" else -1)
        except (AttributeError, ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed support spec {text!r}") from exc
        raise ValueError(f"unknown support kind in {text!r}")

    def __str__(self) -> str:
        if self.kind == "annulus":
            return f"annulus:N={_fmt(self.N)}"
        if self.kind == "ball":
            return f"ball:c=({','.join(_fmt(c) for c in self.center)}),r={_fmt(self.radius)}"
        if self.kind == "cube":
            return f"cube:a={_fmt(self.radius)}"
        return f"cap:rho={_fmt(self.rho)},sign={'+' if self.sign > 0 else '-'}"

    # geometry ---------------------------------------------------------------
    def _center(self, n: int) -> np.ndarray:
        if self.kind == "ball":
            if len(self.center) != n:
                raise ValueError(f"ball center has {len(self.center)} components, grid has n={n}")
            return np.asarray(self.center)
        if self.kind == "cap":
            c = np.zeros(n)
            c[0] = self.sign
            return c
        return np.zeros(n)

    def natural_carrier(self, n: int) -> tuple:
        """A carrier placing the set near the origin of the envelope lattice."""
        return tuple(self._center(n))

    def extent(self, n: int, carrier=None) -> float:
        """Max per-axis distance of the set from ``carrier``."""
        c = np.asarray(normalize_carrier(carrier, n))
        ctr = self._center(n)
        if self.kind == "annulus":
            return float(np.max(np.abs(c)) + 2 * self.N)
        if self.kind == "ball":
            return float(np.max(np.abs(ctr - c)) + self.radius)
        if self.kind == "cube":
            return float(np.max(np.abs(c)) + self.radius)
        half = np.full(n, self.rho)
        half[0] = self.rho**2
        return float(np.max(np.abs(ctr - c) + half))

    def contains(self, xi: tuple) -> np.ndarray:
        n = len(xi)
        if self.kind == "annulus":
            r = np.sqrt(sum(x * x for x in xi))
            return (r >= self.N / 2) & (r <= 2 * self.N)
        if self.kind == "ball":
            ctr = self._center(n)
            r = np.sqrt(sum((x - c) ** 2 for x, c in zip(xi, ctr)))
            return r <= self.radius
        if self.kind == "cube":
            out = True
            for x in xi:
                out = out & (np.abs(x) <= self.radius)
            return out
        out = np.abs(xi[0] - self.sign) <= self.rho**2
        for x in xi[1:]:
            out = out & (np.abs(x) <= self.rho)
        return out

    def smooth_weight(self, xi: tuple) -> np.ndarray:
        """A C-infinity weight supported inside the set (1 on its inner half)."""
        n = len(xi)
        if self.kind == "annulus":
            r = np.sqrt(sum(x * x for x in xi))
            return chi(r / self.N)
        if self.kind == "ball":
            ctr = self._center(n)
            r = np.sqrt(sum((x - c) ** 2 for x, c in zip(xi, ctr)))
            return theta(2.0 * r / self.radius)
        if self.kind == "cube":
            out = 1.0
            for x in xi:
                out = out * theta(2.0 * np.abs(x) / self.radius)
            return out
        out = theta(2.0 * np.abs(xi[0] - self.sign) / self.rho**2)
        for x in xi[1:]:
            out = out * theta(2.0 * np.abs(x) / self.rho)
        return out


# ---------------------------------------------------------------------------
# counter-based random numbers
# ---------------------------------------------------------------------------
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLD
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _uniform(key: np.ndarray) -> np.ndarray:
    return ((key >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def keyed_normal(seed: int, index: tuple, stream: int = 0) -> np.ndarray:
    """Standard complex normals (``E|z|**2 = 1``) keyed by lattice index.

    ``index`` is a tuple of broadcastable integer arrays.  The same
    ``(seed, stream, index)`` always yields the same number.
    """
    shape = np.broadcast_shapes(*(np.shape(i) for i in index))
    packed = np.zeros(shape, dtype=np.uint64)
    for j, ind in enumerate(index):
        v = (np.broadcast_to(np.asarray(ind, dtype=np.int64), shape) + (1 << 20)).astype(np.uint64)
        packed |= v << np.uint64(21 * j)
    with np.errstate(over="ignore"):
        base = _splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix(np.uint64(stream)))
        k0 = _splitmix(packed * np.uint64(2) ^ base)
        k1 = _splitmix((packed * np.uint64(2) + np.uint64(1)) ^ base)
    u1 = _uniform(k0)
    u2 = _uniform(k1)
    return np.sqrt(-np.log(u1)) * np.exp(2j * np.pi * u2)


def _check_resolved(grid: Grid, spec: SupportSpec, carrier) -> None:
    ext = spec.extent(grid.n, carrier)
    if ext > grid.resolvable + 1e-12:
        raise ValueError(
            f"{spec} extends to {ext:.4g} from the carrier but the grid only resolves "
            f"{grid.resolvable:.4g}; refine M or shrink L"
        )


def band_random(grid: Grid, spec: SupportSpec | str, seed: int, carrier=None) -> Field:
    """L^2-normalised field whose Fourier coefficients are keyed complex normals on ``spec``."""
    if isinstance(spec, str):
        spec = SupportSpec.parse(spec)
    _check_resolved(grid, spec, carrier)
    mask = np.broadcast_to(spec.contains(grid.wavevector(carrier)), grid.shape)
    if not mask.any():
        raise ValueError(f"{spec} contains no lattice frequency on this grid")
    coeffs = np.where(mask, keyed_normal(seed, grid.indices()), 0.0)
    f = from_spectrum(grid, coeffs, carrier)
    return f * (1.0 / f.norm())


def localized_random(
    grid: Grid,
    spec: SupportSpec | str,
    seed: int,
    width: float,
    carrier=None,
    center=None,
) -> Field:
    """Random field with spectrum inside ``spec`` and a Gaussian-localised envelope.

    Keyed coefficients on ``spec`` are multiplied by ``exp(-|x-center|^2 / 2 width^2)``
    and re-projected with the smooth weight of ``spec``, so the spectrum stays
    inside the set exactly.  The result is L^2-normalised.
    """
    if isinstance(spec, str):
        spec = SupportSpec.parse(spec)
    if not width > 0:
        raise ValueError("width must be positive")
    base = band_random(grid, spec, seed, carrier)
    ctr = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    env = np.exp(-grid.periodic_distance(ctr) ** 2 / (2.0 * width**2))
    f = apply_symbol(base.with_values(base.values * env), spec.smooth_weight)
    nrm = f.norm()
    if nrm == 0:
        raise ValueError("localised field vanished; widen the support set")
    return f * (1.0 / nrm)
