"""Periodic lattices, fields and exact Fourier multipliers.

Conventions
-----------
* Physical coordinates are ``x_j = -L/2 + j*dx`` on each axis, so ``x = 0`` sits
  at index ``M/2``.
* The continuum Fourier transform is ``f^(xi) = int exp(-i x.xi) f(x) dx`` with
  inverse normalised by ``(2*pi)**-n``.  :func:`spectrum` returns the lattice
  samples of ``f^`` and satisfies Parseval,
  ``||f||_2**2 = (2*pi)**-n * dk**n * sum |f^|**2``.
* A :class:`Field` may carry a *carrier* frequency ``xi0``.  Its values are then
  an envelope and the physical function is ``exp(i x.xi0) * values``.  Its
  frequency lattice is ``xi0 + (2*pi/L) Z^n`` and every multiplier is evaluated
  there.  By Galilean invariance the free flow of a carrier field is exact, which
  lets fast wave packets live on grids that only resolve their envelopes.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, Sequence, Union

import numpy as np
import scipy.fft as sfft

MAGIC = b"DLAB"
_HEADER = struct.Struct("<4sIIdI")

Symbol = Union[np.ndarray, Callable[[tuple], np.ndarray]]


class WrapAroundWarning(UserWarning):
    """Raised (as a warning) when a periodic box is too small for a time window."""


def _is_pow2(m: int) -> bool:
    return m >= 2 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice ``[-L/2, L/2)^n`` with ``M`` points per axis."""

    n: int
    L: float
    M: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension n must be 1, 2 or 3, got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"box length L must be positive and finite, got {self.L}")
        if not _is_pow2(int(self.M)) or int(self.M) != self.M:
            raise ValueError(f"M must be a power of two >= 2, got {self.M}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "M", int(self.M))

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return (self.M,) * self.n

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.L

    @property
    def cell(self) -> float:
        """Volume element ``dx**n``."""
        return self.dx**self.n

    @property
    def nyquist(self) -> float:
        return np.pi * self.M / self.L

    @property
    def resolvable(self) -> float:
        """Largest per-axis frequency (relative to the carrier) deemed resolved."""
        return 0.9 * self.nyquist

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.M)

    @cached_property
    def index_axis(self) -> np.ndarray:
        """Integer lattice indices in FFT order: 0..M/2-1, -M/2..-1."""
        return np.fft.fftfreq(self.M, d=1.0 / self.M).round().astype(np.int64)

    @cached_property
    def k_axis(self) -> np.ndarray:
        return self.dk * self.index_axis

    def _bcast(self, axis_values: np.ndarray, j: int) -> np.ndarray:
        shp = [1] * self.n
        shp[j] = self.M
        return axis_values.reshape(shp)

    def coords(self) -> tuple:
        """Broadcastable coordinate arrays ``(x_1, ..., x_n)``."""
        return tuple(self._bcast(self.x_axis, j) for j in range(self.n))

    def indices(self) -> tuple:
        """Broadcastable integer frequency indices in FFT order."""
        return tuple(self._bcast(self.index_axis, j) for j in range(self.n))

    def wavevector(self, carrier=None) -> tuple:
        """Broadcastable components of ``xi = carrier + k`` in FFT order."""
        c = normalize_carrier(carrier, self.n)
        return tuple(self._bcast(self.k_axis + c[j], j) for j in range(self.n))

    def freq_abs(self, carrier=None) -> np.ndarray:
        """``|xi|`` on the (shifted) frequency lattice, cached per carrier."""
        c = normalize_carrier(carrier, self.n)
        key = ("abs", c)
        if key not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            xi = self.wavevector(c)
            sq = sum(np.broadcast_to(x * x, self.shape) for x in xi)
            arr = np.sqrt(sq)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    def parity(self) -> np.ndarray:
        """``(-1)**(sum of indices)``: the phase relating FFT and continuum transforms."""
        key = ("parity",)
        if key not in self._cache:
            s = sum(np.broadcast_to(i, self.shape) for i in self.indices())
            arr = np.where(s % 2 == 0, 1.0, -1.0)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    def periodic_distance(self, center) -> np.ndarray:
        """Minimal-image Euclidean distance of every grid point to ``center``."""
        c = np.asarray(center, dtype=float).reshape(self.n)
        sq = 0.0
        for j, xj in enumerate(self.coords()):
            d = np.mod(xj - c[j] + self.L / 2, self.L) - self.L / 2
            sq = sq + d * d
        return np.sqrt(np.broadcast_to(sq, self.shape))

    def zeros(self, carrier=None) -> "Field":
        return Field(self, np.zeros(self.shape, dtype=complex), carrier)


def normalize_carrier(carrier, n: int) -> tuple:
    if carrier is None:
        return (0.0,) * n
    c = tuple(float(v) for v in np.atleast_1d(np.asarray(carrier, dtype=float)))
    if len(c) != n:
        raise ValueError(f"carrier must have {n} components, got {len(c)}")
    if not all(np.isfinite(c)):
        raise ValueError("carrier must be finite")
    return c


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a :class:`Grid`, optionally modulated by a carrier."""

    grid: Grid
    values: np.ndarray
    carrier: tuple = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if v.flags.writeable:
            v = v.copy() if v is self.values else v
            v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "carrier", normalize_carrier(self.carrier, self.grid.n))

    # -- helpers ---------------------------------------------------------
    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.carrier)

    def _check_compatible(self, other: "Field"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if not np.allclose(other.carrier, self.carrier, rtol=0, atol=1e-12):
            raise ValueError("fields have different carriers")

    def __add__(self, other: "Field") -> "Field":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar) -> "Field":
        if isinstance(scalar, Field):
            raise TypeError("use pointwise_product or dealiased_product for field products")
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values), tuple(-c for c in self.carrier))

    def norm(self) -> float:
        """L^2 norm ``(dx**n * sum |f|**2)**(1/2)``."""
        return float(np.sqrt(self.grid.cell * np.vdot(self.values, self.values).real))

    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def physical_values(self) -> np.ndarray:
        """Samples of ``exp(i x.xi0) * values`` (the un-framed function)."""
        if not any(self.carrier):
            return np.array(self.values)
        phase = sum(c * x for c, x in zip(self.carrier, self.grid.coords()))
        return self.values * np.exp(1j * phase)


def spectrum(f: Field) -> np.ndarray:
    """Continuum-normalised Fourier samples of ``f`` at ``carrier + k`` (FFT order)."""
    return f.grid.cell * f.grid.parity() * sfft.fftn(f.values)


def from_spectrum(grid: Grid, coeffs: np.ndarray, carrier=None) -> Field:
    """Inverse of :func:`spectrum`."""
    coeffs = np.asarray(coeffs, dtype=complex)
    return Field(grid, sfft.ifftn(coeffs * grid.parity()) / grid.cell, carrier)


def _evaluate_symbol(grid: Grid, sigma: Symbol, carrier) -> np.ndarray:
    if callable(sigma):
        arr = sigma(grid.wavevector(carrier))
    else:
        arr = sigma
    arr = np.broadcast_to(np.asarray(arr), grid.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("symbol is not finite on the frequency lattice")
    return arr


def radial(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[tuple], np.ndarray]:
    """Wrap a function of ``|xi|`` as a symbol acting on wavevector tuples."""

    def sym(xi):
        sq = sum(x * x for x in xi)
        return fn(np.sqrt(sq))

    return sym


def apply_symbol(f: Field, sigma: Symbol) -> Field:
    """Exact Fourier multiplier ``F^-1[sigma * f^]`` on the carrier-shifted lattice.

    ``sigma`` is an array broadcastable to the grid (FFT order) or a callable that
    receives the tuple of wavevector components.
    """
    arr = _evaluate_symbol(f.grid, sigma, f.carrier)
    return f.with_values(sfft.ifftn(arr * sfft.fftn(f.values)))


def free_symbol(grid: Grid, t: float, carrier=None) -> np.ndarray:
    xi = grid.freq_abs(carrier)
    return np.exp(-1j * t * xi * xi)


def free_propagate(f: Field, t: float) -> Field:
    """``e^{it Delta} f``, exact on the lattice."""
    return f.with_values(sfft.ifftn(free_symbol(f.grid, t, f.carrier) * sfft.fftn(f.values)))


def iter_propagate(f: Field, times: Sequence[float]) -> Iterator[np.ndarray]:
    """Yield the envelope values of ``e^{it Delta} f`` for each ``t`` in ``times``."""
    fh = sfft.fftn(f.values)
    sq = f.grid.freq_abs(f.carrier) ** 2
    for t in times:
        # t = 0 returns the datum itself, so differences against it vanish exactly
        yield np.array(f.values) if t == 0 else sfft.ifftn(np.exp(-1j * float(t) * sq) * fh)


def _check_uniform(t: np.ndarray):
    if len(t) < 2:
        return
    d = np.diff(t)
    if np.any(d <= 0):
        raise ValueError("times must be strictly increasing")
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("times must be uniformly spaced")


@dataclass(frozen=True, eq=False)
class SpacetimeField:
    """A sequence of frames sampled at increasing times."""

    grid: Grid
    times: np.ndarray
    data: np.ndarray
    carrier: tuple = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.data, dtype=complex)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("need at least one time sample")
        _check_uniform(t)
        if d.shape != (len(t),) + self.grid.shape:
            raise ValueError("frame data shape does not match times x grid")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "carrier", normalize_carrier(self.carrier, self.grid.n))

    def __len__(self) -> int:
        return len(self.times)

    def frame(self, k: int) -> Field:
        return Field(self.grid, self.data[k], self.carrier)

    @property
    def frames(self) -> list:
        return [self.frame(k) for k in range(len(self))]


def propagate_trajectory(f: Field, times: Sequence[float]) -> SpacetimeField:
    """Frames of ``e^{it Delta} f`` at uniform ``times`` starting at 0."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 1 or t[0] != 0.0:
        raise ValueError("times must be a non-empty sequence starting at 0")
    _check_uniform(t)
    data = np.stack(list(iter_propagate(f, t)))
    return SpacetimeField(f.grid, t, data, f.carrier)


def riesz_potential(f: Field) -> Field:
    """``|nabla|^{2-n} f`` with the zero frequency set to 0 (requires n >= 3)."""
    if f.grid.n < 3:
        raise ValueError("the Riesz potential |nabla|^(2-n) is only used for n >= 3")
    return fractional_power(f, 2 - f.grid.n, "homogeneous")


def fractional_power(f: Field, s: float, kind: str = "homogeneous") -> Field:
    """``|nabla|^s`` (homogeneous) or ``<nabla>^s`` (inhomogeneous).

    For the homogeneous kind the exact zero frequency is mapped to 0 when
    ``s != 0``.
    """
    xi = f.grid.freq_abs(f.carrier)
    if kind == "homogeneous":
        if s == 0:
            return f.with_values(np.array(f.values))
        with np.errstate(divide="ignore"):
            sym = np.where(xi > 0, np.power(np.where(xi > 0, xi, 1.0), s), 0.0)
    elif kind == "inhomogeneous":
        sym = np.power(1.0 + xi * xi, s / 2)
    else:
        raise ValueError(f"kind must be 'homogeneous' or 'inhomogeneous', got {kind!r}")
    return apply_symbol(f, sym)


def gradient(f: Field) -> list:
    """Spectral gradient of the *physical* function, returned in the field's frame."""
    fh = sfft.fftn(f.values)
    return [f.with_values(sfft.ifftn(1j * xi * fh)) for xi in f.grid.wavevector(f.carrier)]


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------
def _occupied_extent(fh: np.ndarray, grid: Grid, rtol: float = 1e-14) -> int:
    """Largest |index| (per axis, max over axes) carrying non-negligible spectrum."""
    mag = np.abs(fh)
    peak = mag.max()
    if peak == 0:
        return 0
    occupied = mag > rtol * peak
    ext = 0
    for j, ind in enumerate(grid.indices()):
        vals = np.abs(np.broadcast_to(ind, grid.shape))[occupied]
        ext = max(ext, int(vals.max()))
    return ext


def _pad(fh: np.ndarray, M: int, n: int) -> np.ndarray:
    big = np.zeros((2 * M,) * n, dtype=complex)
    sl = tuple(slice(M // 2, M // 2 + M) for _ in range(n))
    big[sl] = np.fft.fftshift(fh)
    return np.fft.ifftshift(big)


def _crop(Fh: np.ndarray, M: int, n: int) -> np.ndarray:
    sl = tuple(slice(M // 2, M // 2 + M) for _ in range(n))
    return np.fft.ifftshift(np.fft.fftshift(Fh)[sl])


def dealiased_values(a: np.ndarray, b: np.ndarray, grid: Grid, conj_b: bool = False) -> np.ndarray:
    """Alias-free ``a * b`` (or ``a * conj(b)``) truncated to the grid band.

    The product is formed on a 2x zero-padded lattice.  When the occupied bands
    of ``a`` and ``b`` cannot alias the padding is skipped, which gives the same
    result up to roundoff.
    """
    n, M = grid.n, grid.M
    ah = sfft.fftn(a)
    bh = sfft.fftn(np.conj(b) if conj_b else b)
    if _occupied_extent(ah, grid) + _occupied_extent(bh, grid) < M // 2:
        return a * (np.conj(b) if conj_b else b)
    scale = 2.0**n
    ap = sfft.ifftn(_pad(ah, M, n)) * scale
    bp = sfft.ifftn(_pad(bh, M, n)) * scale
    Ph = sfft.fftn(ap * bp) / scale
    return sfft.ifftn(_crop(Ph, M, n))


def dealiased_product(a: Field, b: Field) -> Field:
    """Alias-free product of two fields; carriers add."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    carrier = tuple(x + y for x, y in zip(a.carrier, b.carrier))
    return Field(a.grid, dealiased_values(a.values, b.values, a.grid), carrier)


def dealiased_modulus_squared(u: Field) -> Field:
    """Alias-free ``|u|**2`` (zero carrier, real up to roundoff)."""
    return Field(u.grid, dealiased_values(u.values, u.values, u.grid, conj_b=True).real.astype(complex))


def pointwise_product(a: Field, b: Field) -> Field:
    """Plain sample-wise product (no dealiasing); carriers add."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    carrier = tuple(x + y for x, y in zip(a.carrier, b.carrier))
    return Field(a.grid, a.values * b.values, carrier)


# ---------------------------------------------------------------------------
# wrap-around guard
# ---------------------------------------------------------------------------
def wraparound_ok(grid: Grid, support_width: float, max_frequency: float, T: float) -> bool:
    """Whether ``L >= 2 (support + 2 |xi|_max T)``; warns otherwise."""
    need = 2.0 * (support_width + 2.0 * max_frequency * abs(T))
    if grid.L < need:
        warnings.warn(
            f"box L={grid.L:.4g} shorter than 2*(support + 2*|xi|*T) = {need:.4g}; "
            "periodic images may interact",
            WrapAroundWarning,
            stacklevel=2,
        )
        return False
    return True


# ---------------------------------------------------------------------------
# binary container
# ---------------------------------------------------------------------------
def save_field(f: Field, path) -> None:
    """Write ``f`` in the little-endian ``DLAB`` container.

    Version 1 holds header and samples; version 2 (written when the carrier is
    non-zero) appends the carrier components after the header.
    """
    g = f.grid
    version = 2 if any(f.carrier) else 1
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, g.n, g.L, g.M))
        if version == 2:
            fh.write(struct.pack(f"<{g.n}d", *f.carrier))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated container header")
    magic, version, n, L, M = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("bad magic: not a DLAB field container")
    if version not in (1, 2):
        raise ValueError(f"unsupported container version {version}")
    grid = Grid(n, L, M)
    off = _HEADER.size
    carrier = None
    if version == 2:
        carrier = struct.unpack_from(f"<{n}d", raw, off)
        off += 8 * n
    count = M**n
    if len(raw) - off != 16 * count:
        raise ValueError("container payload size does not match header")
    vals = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape(grid.shape)
    return Field(grid, vals.astype(complex), carrier)
