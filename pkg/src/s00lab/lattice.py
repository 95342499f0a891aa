"""Periodic sampled fields on R^n and their discrete Fourier transforms.

A function on R^n is realized as a periodic function with a large period.
Space samples sit at ``x_j = (j - P/2) * dx`` and frequency samples at
``xi_k = (k - P/2) * dxi`` with ``dxi = 2*pi / period``; both are stored in
ascending (centered) order, row-major with axis 0 slowest.

Conventions::

    F f(xi)    = int e^{-i xi.x} f(x) dx          ~ dx^n  * sum_x e^{-i xi.x} f(x)
    F^-1 g(x)  = (2 pi)^-n int e^{i x.xi} g(xi) dxi ~ period^-n * sum_xi e^{i x.xi} g(xi)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, PreconditionError, StructuralError

__all__ = [
    "GridSpec",
    "LatticeField",
    "forward_transform",
    "inverse_transform",
    "modulate_translate",
    "save_field",
    "load_field",
    "DEFAULT_MEMORY_BUDGET",
]

#: Maximum number of grid points a single field may hold.
DEFAULT_MEMORY_BUDGET = 2**24

SPACE = "space"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the cube ``[-period/2, period/2)^n``.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 to 3.
    points_per_axis : int
        Power of two, at least 4.
    period : float
        Side length of the periodic cell, typically ``2*pi*R``.
    memory_budget : int
        Upper bound on ``points_per_axis**n``.
    """

    n: int
    points_per_axis: int
    period: float
    memory_budget: int = field(default=DEFAULT_MEMORY_BUDGET, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not 1 <= self.n <= 3:
            raise ParameterError(f"n must be an integer in [1, 3], got {self.n!r}")
        P = self.points_per_axis
        if not isinstance(P, (int, np.integer)) or P < 4 or P & (P - 1):
            raise ParameterError(
                f"points_per_axis must be a power of two >= 4, got {P!r}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ParameterError(f"period must be positive, got {self.period!r}")
        if P**self.n > self.memory_budget:
            raise ParameterError(
                f"grid of {P}^{self.n} points exceeds memory budget "
                f"{self.memory_budget}")

    @classmethod
    def with_scale(cls, n: int, points_per_axis: int, R: float = 1.0, **kw):
        """Grid with ``period = 2*pi*R``, so frequencies are multiples of ``1/R``."""
        return cls(n, points_per_axis, 2 * math.pi * R, **kw)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.n

    @property
    def size(self) -> int:
        return self.points_per_axis**self.n

    @property
    def dx(self) -> float:
        return self.period / self.points_per_axis

    @property
    def dxi(self) -> float:
        return 2 * math.pi / self.period

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def dual_cell_volume(self) -> float:
        return self.dxi**self.n

    def axis(self) -> np.ndarray:
        """1-D space coordinates along one axis."""
        P = self.points_per_axis
        return (np.arange(P) - P // 2) * self.dx

    def freq_axis(self) -> np.ndarray:
        """1-D frequency coordinates along one axis."""
        P = self.points_per_axis
        return (np.arange(P) - P // 2) * self.dxi

    def coords(self) -> np.ndarray:
        """Space coordinates, shape ``shape + (n,)``."""
        return _mesh(self.axis(), self.n)

    def freq_coords(self) -> np.ndarray:
        """Frequency coordinates, shape ``shape + (n,)``."""
        return _mesh(self.freq_axis(), self.n)

    @property
    def max_frequency(self) -> float:
        """Largest representable |xi_i| (the negative Nyquist frequency)."""
        return self.points_per_axis // 2 * self.dxi


def _mesh(ax: np.ndarray, n: int) -> np.ndarray:
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack(grids, axis=-1)


class LatticeField:
    """Complex samples of a function on a :class:`GridSpec`.

    ``values`` is an n-dimensional array of shape ``grid.shape``; a flat
    row-major array of the right length is reshaped on construction.
    The array is copied and frozen.
    """

    __slots__ = ("grid", "values", "domain_tag")

    def __init__(self, grid: GridSpec, values, domain_tag: str = SPACE):
        if domain_tag not in (SPACE, FREQUENCY):
            raise ParameterError(f"domain_tag must be 'space' or 'frequency', got {domain_tag!r}")
        arr = np.array(values, dtype=complex)
        if arr.size != grid.size:
            raise StructuralError(
                f"values hold {arr.size} entries but grid has {grid.size} points")
        if arr.shape != grid.shape:
            if arr.ndim not in (1, grid.n):
                raise StructuralError(
                    f"values shape {arr.shape} incompatible with grid shape {grid.shape}")
            arr = arr.reshape(grid.shape)
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr
        self.domain_tag = domain_tag

    @classmethod
    def from_function(cls, grid: GridSpec, func, domain_tag: str = SPACE):
        """Sample ``func(coords)`` where ``coords`` has shape ``grid.shape + (n,)``."""
        pts = grid.coords() if domain_tag == SPACE else grid.freq_coords()
        return cls(grid, func(pts), domain_tag)

    @classmethod
    def zeros(cls, grid: GridSpec, domain_tag: str = SPACE):
        return cls(grid, np.zeros(grid.shape, complex), domain_tag)

    def _check_compatible(self, other: "LatticeField"):
        if self.grid != other.grid or self.domain_tag != other.domain_tag:
            raise StructuralError("fields live on different grids or domains")

    def __add__(self, other):
        self._check_compatible(other)
        return LatticeField(self.grid, self.values + other.values, self.domain_tag)

    def __sub__(self, other):
        self._check_compatible(other)
        return LatticeField(self.grid, self.values - other.values, self.domain_tag)

    def __mul__(self, other):
        if isinstance(other, LatticeField):
            self._check_compatible(other)
            return LatticeField(self.grid, self.values * other.values, self.domain_tag)
        return LatticeField(self.grid, self.values * other, self.domain_tag)

    __rmul__ = __mul__

    def __neg__(self):
        return LatticeField(self.grid, -self.values, self.domain_tag)

    def __repr__(self):
        g = self.grid
        return (f"LatticeField(n={g.n}, points_per_axis={g.points_per_axis}, "
                f"period={g.period:g}, domain_tag={self.domain_tag!r})")

    def flat(self) -> np.ndarray:
        """Row-major flat copy of the values."""
        return self.values.reshape(-1).copy()

    def l2_distance(self, other: "LatticeField") -> float:
        """Relative l2 distance ``|self - other| / |other|``."""
        self._check_compatible(other)
        den = np.linalg.norm(other.values)
        num = np.linalg.norm(self.values - other.values)
        return float(num / den) if den > 0 else float(num)


def forward_transform(f: LatticeField) -> LatticeField:
    """Quadrature approximation of ``int e^{-i xi.x} f(x) dx`` on the dual lattice."""
    if f.domain_tag != SPACE:
        raise PreconditionError("forward_transform expects a space-domain field")
    g = f.grid
    axes = tuple(range(g.n))
    spec = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(f.values, axes), axes=axes), axes)
    # ifftshift moves x=0 to index 0, so no further phase is needed
    return LatticeField(g, spec * g.cell_volume, FREQUENCY)


def inverse_transform(h: LatticeField) -> LatticeField:
    """Quadrature approximation of ``(2 pi)^-n int e^{i x.xi} h(xi) dxi``."""
    if h.domain_tag != FREQUENCY:
        raise PreconditionError("inverse_transform expects a frequency-domain field")
    g = h.grid
    axes = tuple(range(g.n))
    vals = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(h.values, axes), axes=axes), axes)
    return LatticeField(g, vals * (g.size / g.period**g.n), SPACE)


def spectrum(f: LatticeField) -> np.ndarray:
    """Shortcut for ``forward_transform(f).values``."""
    return forward_transform(f).values


def from_spectrum(grid: GridSpec, values) -> LatticeField:
    """Space field whose transform is ``values`` (frequency-ordered array)."""
    return inverse_transform(LatticeField(grid, values, FREQUENCY))


def apply_multiplier(f: LatticeField, m) -> LatticeField:
    """``m(D) f`` for a multiplier given as a callable on frequency coords or an array."""
    fh = forward_transform(f)
    mult = m(f.grid.freq_coords()) if callable(m) else np.asarray(m)
    return inverse_transform(LatticeField(f.grid, fh.values * mult, FREQUENCY))


def _lattice_steps(vec, step: float, n: int, what: str) -> np.ndarray:
    v = np.broadcast_to(np.asarray(vec, float), (n,))
    steps = v / step
    r = np.rint(steps)
    if np.any(np.abs(steps - r) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise PreconditionError(f"{what} {tuple(v)} is not a multiple of the grid step {step!r}")
    return r.astype(int)


def modulate_translate(f: LatticeField, shift=0.0, freq_shift=0.0) -> LatticeField:
    """Return ``x -> e^{i freq_shift.x} f(x + shift)`` without transforms.

    ``shift`` must be a multiple of ``dx`` and ``freq_shift`` a multiple of
    ``dxi`` (per axis); both may be scalars or length-n vectors.
    """
    if f.domain_tag != SPACE:
        raise PreconditionError("modulate_translate expects a space-domain field")
    g = f.grid
    s = _lattice_steps(shift, g.dx, g.n, "shift")
    _lattice_steps(freq_shift, g.dxi, g.n, "freq_shift")
    vals = np.roll(f.values, tuple(-s), axis=tuple(range(g.n)))
    w = np.broadcast_to(np.asarray(freq_shift, float), (g.n,))
    if np.any(w):
        vals = vals * np.exp(1j * (g.coords() @ w))
    return LatticeField(g, vals, SPACE)


# -- text serialization -------------------------------------------------------

_HEADER = "n,points_per_axis,period,domain_tag"


def save_field(f: LatticeField, path) -> None:
    """Write ``f`` in the flat text format.

    Line 1 is the header ``n,points_per_axis,period,domain_tag``, line 2 the
    header values, then one ``re,im`` line per sample in row-major order.
    """
    g = f.grid
    lines = [_HEADER, f"{g.n},{g.points_per_axis},{g.period!r},{f.domain_tag}"]
    lines.extend(f"{z.real!r},{z.imag!r}" for z in f.values.reshape(-1).tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> LatticeField:
    """Inverse of :func:`save_field`."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _HEADER:
        raise StructuralError(f"{path}: missing field header")
    n, P, period, tag = text[1].split(",")
    grid = GridSpec(int(n), int(P), float(period), memory_budget=memory_budget)
    body = [ln for ln in text[2:] if ln.strip()]
    if len(body) != grid.size:
        raise StructuralError(f"{path}: expected {grid.size} samples, found {len(body)}")
    data = np.loadtxt(body, delimiter=",", ndmin=2)
    return LatticeField(grid, data[:, 0] + 1j * data[:, 1], tag.strip())


def random_band_limited(grid: GridSpec, rng: np.random.Generator, band: float,
                        packets: int = 4, width: Sequence[float] = (0.7, 3.0),
                        center_spread: float | None = None) -> LatticeField:
    """Random sum of Gaussian wave packets with spectrum cut smoothly at ``band``.

    Each packet has a random position, width and carrier frequency with
    ``|carrier_i| <= band - 1``; the spectrum is multiplied by a smooth cutoff
    equal to 1 on ``|xi|_inf <= band - 1/2`` and 0 beyond ``band``.
    """
    from .bumps import smooth_step  # local import keeps lattice dependency-free

    x = grid.coords()
    spread = grid.period / 4 if center_spread is None else center_spread
    vals = np.zeros(grid.shape, complex)
    for _ in range(packets):
        c = rng.uniform(-spread, spread, grid.n)
        w = rng.uniform(*width)
        om = rng.uniform(-(band - 1), band - 1, grid.n)
        amp = rng.normal() + 1j * rng.normal()
        r2 = np.sum((x - c) ** 2, axis=-1)
        vals += amp * np.exp(-r2 / (2 * w * w) + 1j * (x @ om))
    f = LatticeField(grid, vals)
    cut = np.prod(1 - smooth_step(np.abs(grid.freq_coords()), band - 0.5, band), axis=-1)
    return apply_multiplier(f, cut)
