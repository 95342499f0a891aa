"""Quasinorms of L^p, L^{p,inf}, Wiener amalgam, local Hardy and (local) BMO type.

All functions take space-domain :class:`~s00lab.lattice.LatticeField` inputs
and approximate the continuous quantity by Riemann sums on the periodic grid.
Exponents may be given as ints, floats, :class:`fractions.Fraction` or
``math.inf``; the reciprocal of infinity is 0 throughout.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .bumps import standard_bump
from .errors import ParameterError, PreconditionError, QualityWarning
from .lattice import SPACE, GridSpec, LatticeField, forward_transform, random_band_limited

TAIL_THRESHOLD = 1e-10


# -- exponents ----------------------------------------------------------------

def as_exponent(p, name: str = "p", allow_inf: bool = True):
    """Validate an exponent in ``(0, inf]`` and normalise infinity to ``math.inf``."""
    if isinstance(p, str):
        p = math.inf if p.strip().lower() in ("inf", "infinity", "∞") else Fraction(p)
    if p is None or (isinstance(p, float) and math.isnan(p)):
        raise ParameterError(f"{name} ∈ (0,∞] violated: {name}={p!r}")
    if p == math.inf:
        if not allow_inf:
            raise ParameterError(f"{name} ∈ (0,∞) violated: {name}=∞")
        return math.inf
    if not p > 0:
        raise ParameterError(f"{name} ∈ (0,∞] violated: {name}={p}")
    return p


def recip(p):
    """``1/p`` with ``1/inf = 0``; exact for ints and Fractions."""
    if p == math.inf:
        return 0
    if isinstance(p, (int, Fraction)):
        return Fraction(1) / Fraction(p)
    return 1.0 / p


def conjugate(p):
    """Hölder conjugate ``p'`` for ``1 <= p <= inf``."""
    if p == 1:
        return math.inf
    if p == math.inf:
        return 1
    r = 1 - recip(p)
    return 1 / r


@dataclass(frozen=True)
class ExponentTuple:
    """Target exponent ``p`` and source exponents ``p_1..p_N``."""

    p: object
    p_list: tuple

    def __post_init__(self):
        object.__setattr__(self, "p", as_exponent(self.p, "p"))
        ps = tuple(as_exponent(q, f"p_{j + 1}") for j, q in enumerate(self.p_list))
        if not ps:
            raise ParameterError("at least one source exponent is required")
        object.__setattr__(self, "p_list", ps)
        if recip(self.p) > sum(recip(q) for q in ps):
            raise ParameterError(
                "scaling constraint 1/p ≤ 1/p_1 + ... + 1/p_N violated")

    @property
    def N(self) -> int:
        return len(self.p_list)

    @property
    def inv_p0(self):
        return sum(recip(q) for q in self.p_list)

    @property
    def p0(self):
        s = self.inv_p0
        return math.inf if s == 0 else 1 / s

    @property
    def J(self) -> tuple:
        """1-based indices with ``p_j >= 2``."""
        return tuple(j + 1 for j, q in enumerate(self.p_list) if q >= 2)

    @property
    def Jc(self) -> tuple:
        """1-based indices with ``p_j < 2``."""
        return tuple(j + 1 for j, q in enumerate(self.p_list) if q < 2)


# -- windows ------------------------------------------------------------------

@lru_cache(maxsize=32)
def _min_cover_1d(halfwidth: float, offsets: tuple, samples: int = 20001) -> float:
    t = np.linspace(0.0, 1.0, samples)
    ks = np.arange(-int(math.ceil(halfwidth)) - 3, int(math.ceil(halfwidth)) + 4)
    total = np.zeros_like(t)
    for o in offsets:
        total += standard_bump((t[:, None] - ks[None, :] - o) / halfwidth).sum(axis=1)
    return float((total / len(offsets)).min())


@dataclass(frozen=True)
class WindowKappa:
    """Window ``kappa(xi) = c * prod_i mean_o b((xi_i - o) / halfwidth)``.

    ``b`` is the standard bump. The constant ``c`` is chosen so that
    ``|sum_k kappa(xi - k)| >= 1`` everywhere; the per-axis sum is sampled
    densely once and cached.
    """

    n: int = 1
    halfwidth: float = 0.75
    offsets: tuple = (0.0,)
    cover_constant: float = field(init=False)

    def __post_init__(self):
        if not 0.5 < self.halfwidth:
            raise ParameterError("halfwidth must exceed 1/2 for the cover condition")
        m = _min_cover_1d(float(self.halfwidth), tuple(float(o) for o in self.offsets))
        object.__setattr__(self, "cover_constant", (1.0 / m) ** self.n)

    @property
    def support_halfwidth(self) -> float:
        return self.halfwidth + max(abs(o) for o in self.offsets)

    def axis_profile(self, t):
        t = np.asarray(t, float)
        acc = sum(standard_bump((t - o) / self.halfwidth) for o in self.offsets)
        return acc / len(self.offsets)

    def __call__(self, xi):
        """Evaluate on points of shape ``(..., n)``."""
        return self.cover_constant * np.prod(self.axis_profile(xi), axis=-1)

    def cover_minimum(self, samples: int = 4001) -> float:
        """Numerical minimum of ``sum_k kappa(xi - k)`` over a dense sample of the unit cell."""
        t = np.linspace(0.0, 1.0, samples)
        R = int(math.ceil(self.support_halfwidth)) + 2
        ks = np.arange(-R, R + 1)
        s1 = self.axis_profile(t[:, None] - ks[None, :]).sum(axis=1)
        return float(self.cover_constant * s1.min() ** self.n)

    def symmetrized(self, shift: float = 0.25) -> "WindowKappa":
        """Average of the translates by ``+shift`` and ``-shift`` (per axis)."""
        offs = tuple(o + s for o in self.offsets for s in (-shift, shift))
        return WindowKappa(self.n, self.halfwidth, offs)


@dataclass(frozen=True)
class MaximalPhi:
    """Gaussian ``phi(x) = exp(-|x|^2/2)`` and the dyadic scales ``t = 2^-j``.

    ``levels=None`` means ``j = 0 .. log2(points_per_axis) - 2``.
    """

    levels: tuple | None = None

    def integral_in(self, n: int) -> float:
        return (2 * math.pi) ** (n / 2)

    def scales(self, grid: GridSpec) -> list:
        if self.levels is not None:
            return [2.0 ** (-j) for j in self.levels]
        jmax = int(math.log2(grid.points_per_axis)) - 2
        return [2.0 ** (-j) for j in range(jmax + 1)]

    def check_grid(self, grid: GridSpec):
        if math.exp(-(grid.period / 2) ** 2 / 2) > 1e-12:
            raise PreconditionError(
                f"Gaussian maximal kernel does not decay below 1e-12 at the half "
                f"period {grid.period / 2:g}; use a larger period")

    def hat(self, xi, t: float):
        """Fourier transform of ``phi_t`` at points ``xi`` of shape ``(..., n)``."""
        n = xi.shape[-1]
        return (2 * math.pi) ** (n / 2) * np.exp(-0.5 * t * t * np.sum(xi**2, axis=-1))


# -- basic norms --------------------------------------------------------------

def _space(f: LatticeField):
    if f.domain_tag != SPACE:
        raise PreconditionError("norms are computed on space-domain fields")


def _lp_of_array(a: np.ndarray, p, cell: float) -> float:
    a = np.abs(a)
    if p == math.inf:
        return float(a.max()) if a.size else 0.0
    p = float(p)
    return float((np.sum(a**p) * cell) ** (1.0 / p))


def lp_norm(f: LatticeField, p) -> float:
    """Riemann-sum ``L^p`` quasinorm; grid maximum for ``p = inf``."""
    _space(f)
    p = as_exponent(p)
    return _lp_of_array(f.values, p, f.grid.cell_volume)


def weak_lp_norm(f: LatticeField, p) -> float:
    """``L^{p,inf}`` quasinorm from the decreasing rearrangement of ``|f|``."""
    _space(f)
    p = as_exponent(p, allow_inf=False)
    v = np.sort(np.abs(f.values).reshape(-1))[::-1]
    j = np.arange(1, v.size + 1)
    return float(np.max((j * f.grid.cell_volume) ** (1.0 / float(p)) * v))


def lq_sum(pieces: np.ndarray, q, weights=None, axis: int = 0) -> np.ndarray:
    """Pointwise ``l^q`` norm of ``weights * |pieces|`` along ``axis``."""
    a = np.abs(pieces)
    if weights is not None:
        a = a * np.expand_dims(weights, tuple(range(1, a.ndim)))
    if q == math.inf:
        return a.max(axis=axis)
    q = float(q)
    return np.sum(a**q, axis=axis) ** (1.0 / q)


# -- Wiener amalgam -----------------------------------------------------------

@dataclass(frozen=True)
class AmalgamNorm:
    value: float
    tail: float
    tail_warning: bool

    def __float__(self):
        return self.value


def _band_lattice(grid: GridSpec, kappa: WindowKappa) -> np.ndarray:
    K = int(math.floor(grid.max_frequency + kappa.support_halfwidth))
    ax = np.arange(-K, K + 1)
    ks = np.stack(np.meshgrid(*([ax] * grid.n), indexing="ij"), -1).reshape(-1, grid.n)
    return ks


def spectral_tail(f: LatticeField, margin: float = 1.0) -> float:
    """Fraction of spectral energy within ``margin`` of the Nyquist boundary."""
    fh = forward_transform(f).values
    xi = f.grid.freq_coords()
    outer = np.any(np.abs(xi) > f.grid.max_frequency - margin, axis=-1)
    tot = np.sum(np.abs(fh) ** 2)
    return float(np.sum(np.abs(fh[outer]) ** 2) / tot) if tot > 0 else 0.0


def band_pieces(f: LatticeField, kappa: WindowKappa, ks: np.ndarray,
                chunk: int = 2**22):
    """Yield ``(k_block, pieces)`` with ``pieces[i] = kappa(D - k_i) f`` on the grid."""
    g = f.grid
    fh = forward_transform(f).values
    xi = g.freq_axis()
    axes = tuple(range(1, g.n + 1))
    scale = g.size / g.period**g.n
    per = max(1, chunk // g.size)
    for start in range(0, len(ks), per):
        kb = ks[start:start + per]
        mult = np.full((len(kb),) + g.shape, kappa.cover_constant)
        for i in range(g.n):
            prof = kappa.axis_profile(xi[None, :] - kb[:, i:i + 1])
            shape = [len(kb)] + [1] * g.n
            shape[i + 1] = g.points_per_axis
            mult = mult * prof.reshape(shape)
        spec = mult * fh[None]
        sp = np.fft.ifftshift(spec, axes=axes)
        vals = np.fft.fftshift(np.fft.ifftn(sp, axes=axes), axes=axes) * scale
        yield kb, vals


def wiener_amalgam_norm(f: LatticeField, p, q, s: float = 0.0,
                        kappa: WindowKappa | None = None, full_output: bool = False):
    """``|| || <k>^s kappa(D-k) f(x) ||_{l^q_k} ||_{L^p_x}``.

    Every integer ``k`` whose window meets the frequency grid is included. If
    more than ``1e-10`` of the spectral energy sits within one unit of the
    Nyquist boundary a :class:`QualityWarning` is issued and, with
    ``full_output=True``, reported in the returned :class:`AmalgamNorm`.
    """
    _space(f)
    p, q = as_exponent(p), as_exponent(q, "q")
    g = f.grid
    kappa = kappa or WindowKappa(g.n)
    if kappa.n != g.n:
        raise ParameterError("window dimension does not match grid dimension")
    ks = _band_lattice(g, kappa)
    weights = (1.0 + np.sum(ks.astype(float) ** 2, axis=1)) ** (s / 2)
    acc = np.zeros(g.shape)
    for kb, pieces in band_pieces(f, kappa, ks):
        w = weights[:len(kb)]
        weights = weights[len(kb):]
        a = np.abs(pieces) * w.reshape((-1,) + (1,) * g.n)
        if q == math.inf:
            acc = np.maximum(acc, a.max(axis=0))
        else:
            acc += np.sum(a ** float(q), axis=0)
    pointwise = acc if q == math.inf else acc ** (1.0 / float(q))
    value = _lp_of_array(pointwise, p, g.cell_volume)
    tail = spectral_tail(f)
    warn = tail > TAIL_THRESHOLD
    if warn:
        warnings.warn(f"amalgam norm: spectral tail {tail:.2e} near Nyquist boundary",
                      QualityWarning, stacklevel=2)
    if full_output:
        return AmalgamNorm(value, tail, warn)
    return value


# -- local Hardy space ---------------------------------------------------------

def maximal_function(f: LatticeField, phi: MaximalPhi | None = None) -> np.ndarray:
    """Pointwise ``max_t |phi_t * f|`` over the dyadic scales of ``phi``."""
    _space(f)
    phi = phi or MaximalPhi()
    g = f.grid
    phi.check_grid(g)
    fh = forward_transform(f).values
    xi = g.freq_coords()
    axes = tuple(range(g.n))
    scale = g.size / g.period**g.n
    out = np.zeros(g.shape)
    for t in phi.scales(g):
        spec = np.fft.ifftshift(fh * phi.hat(xi, t), axes)
        conv = np.fft.fftshift(np.fft.ifftn(spec, axes=axes), axes) * scale
        out = np.maximum(out, np.abs(conv))
    return out


def local_hardy_norm(f: LatticeField, p, phi: MaximalPhi | None = None) -> float:
    """``|| sup_{0<t<1} |phi_t * f| ||_{L^p}`` with ``t`` restricted to dyadic scales."""
    p = as_exponent(p)
    return _lp_of_array(maximal_function(f, phi), p, f.grid.cell_volume)


# -- BMO ----------------------------------------------------------------------

def _cube_stats(vals: np.ndarray, b: int, n: int):
    """Means and mean oscillations of all aligned cubes of ``b`` points per side."""
    P = vals.shape[0]
    m = P // b
    shape = []
    for _ in range(n):
        shape += [m, b]
    blocks = vals.reshape(shape)
    inner = tuple(range(1, 2 * n, 2))
    means = blocks.mean(axis=inner, keepdims=True)
    osc = np.abs(blocks - means).mean(axis=inner)
    avg_abs = np.abs(blocks).mean(axis=inner)
    return osc, avg_abs


def bmo_norm(f: LatticeField, local: bool = False) -> float:
    """Mean-oscillation norm over dyadic cubes and their half-shifted translates.

    With ``local=False`` this is the BMO seminorm (sup of mean oscillation).
    With ``local=True`` it is the bmo norm: sup of mean oscillation over cubes
    of volume at most 1 plus sup of the mean of ``|f|`` over cubes of volume
    at least 1.
    """
    _space(f)
    g = f.grid
    P, n = g.points_per_axis, g.n
    sup_osc_small = 0.0
    sup_osc = 0.0
    sup_avg_big = 0.0
    b = P
    while b >= 1:
        vol = (b * g.dx) ** n
        shifts = [0] if b == 1 else [0, b // 2]
        for combo in np.ndindex(*([len(shifts)] * n)):
            sh = tuple(-shifts[c] for c in combo)
            v = np.roll(f.values, sh, axis=tuple(range(n))) if any(sh) else f.values
            osc, avg = _cube_stats(v, b, n)
            mo = float(osc.max())
            sup_osc = max(sup_osc, mo)
            if vol <= 1:
                sup_osc_small = max(sup_osc_small, mo)
            if vol >= 1:
                sup_avg_big = max(sup_avg_big, float(avg.max()))
        b //= 2
    if local:
        return sup_osc_small + sup_avg_big
    return sup_osc


# -- embeddings ---------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    id: str
    source: str
    target: str
    p: object
    description: str


def _emb_table():
    inf = math.inf
    return {
        "W-W": Embedding("W-W", "W^{1,1}", "W^{2,2}", 1, "W^{p1,q1} into W^{p2,q2}, p1<=p2, q1<=q2"),
        "L-Wpp'": Embedding("L-Wpp'", "L^p", "W^{p,p'}", Fraction(3, 2), "L^p into W^{p,p'}, 1<=p<=2"),
        "L-Wp2": Embedding("L-Wp2", "L^p", "W^{p,2}", 4, "L^p into W^{p,2}, p>=2"),
        "h-W": Embedding("h-W", "h^p", "W^{p,2}_{n(1/2-1/p)}", 1, "h^p into W^{p,2}_{n(1/2-1/p)}, p<=2"),
        "bmo-W": Embedding("bmo-W", "bmo", "W^{inf,2}", inf, "bmo into W^{inf,2}"),
        "W-h": Embedding("W-h", "W^{p,2}", "h^p", 1, "W^{p,2} into h^p, p<=2"),
        "W-L": Embedding("W-L", "W^{p,p'}", "L^p", 4, "W^{p,p'} into L^p, p>=2"),
    }


EMBEDDINGS = _emb_table()


def embedding_norms(eid: str, f: LatticeField, p=None, kappa=None, phi=None):
    """Return ``(source_norm, target_norm)`` of ``f`` for embedding ``eid``."""
    if eid not in EMBEDDINGS:
        raise ParameterError(f"unknown embedding id {eid!r}; known: {sorted(EMBEDDINGS)}")
    e = EMBEDDINGS[eid]
    p = as_exponent(e.p if p is None else p)
    n = f.grid.n
    kappa = kappa or WindowKappa(n)
    W = lambda pp, qq, ss=0.0: wiener_amalgam_norm(f, pp, qq, ss, kappa)  # noqa: E731
    if eid == "W-W":
        return W(1, 1), W(2, 2)
    if eid == "L-Wpp'":
        if not 1 <= p <= 2:
            raise ParameterError("L-Wpp' needs 1 <= p <= 2")
        return lp_norm(f, p), W(p, conjugate(p))
    if eid == "L-Wp2":
        if p < 2:
            raise ParameterError("L-Wp2 needs p >= 2")
        return lp_norm(f, p), W(p, 2)
    if eid == "h-W":
        if p > 2:
            raise ParameterError("h-W needs p <= 2")
        return local_hardy_norm(f, p, phi), W(p, 2, n * (0.5 - float(recip(p))))
    if eid == "bmo-W":
        return bmo_norm(f, local=True), W(math.inf, 2)
    if eid == "W-h":
        if p > 2:
            raise ParameterError("W-h needs p <= 2")
        return W(p, 2), local_hardy_norm(f, p, phi)
    if eid == "W-L":
        if p < 2:
            raise ParameterError("W-L needs p >= 2")
        return W(p, conjugate(p)), lp_norm(f, p)
    raise AssertionError(eid)


@dataclass
class EmbeddingStats:
    id: str
    trials: int
    max_ratio: float
    max_ratio_doubled: float
    min_ratio: float
    skipped: int
    ratios: np.ndarray = field(repr=False)

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.max_ratio_doubled))

    @property
    def doubling_factor(self) -> float:
        return self.max_ratio_doubled / self.max_ratio

    @property
    def stable(self) -> bool:
        return self.finite and self.doubling_factor <= 2.0


def default_embedding_grid() -> GridSpec:
    return GridSpec.with_scale(1, 256, R=8)


def check_embedding(eid: str, trials: int = 100, seed: int = 0, grid: GridSpec | None = None,
                    band: float = 6.0, p=None, fields: Sequence[LatticeField] | None = None):
    """Empirical ``max(target / source)`` over random band-limited fields.

    ``2 * trials`` fields are drawn; ``max_ratio`` uses the first ``trials``
    and ``max_ratio_doubled`` all of them. Zero fields (source norm 0) are
    skipped rather than divided.
    """
    if eid not in EMBEDDINGS:
        raise ParameterError(f"unknown embedding id {eid!r}; known: {sorted(EMBEDDINGS)}")
    grid = grid or default_embedding_grid()
    if fields is None:
        rng = np.random.default_rng(np.random.SeedSequence([seed, sorted(EMBEDDINGS).index(eid)]))
        fields = []
        for _ in range(2 * trials):
            bw = rng.uniform(1.5, band)
            fields.append(random_band_limited(grid, rng, bw, packets=int(rng.integers(1, 6))))
    kappa = WindowKappa(grid.n)
    ratios = []
    skipped = 0
    for f in fields:
        src, tgt = embedding_norms(eid, f, p, kappa)
        if src == 0:
            skipped += 1
            ratios.append(np.nan)
            continue
        ratios.append(tgt / src)
    r = np.asarray(ratios, float)
    half = len(r) // 2 if len(r) > 1 else len(r)
    first, full = r[:half], r
    def _mx(a):
        a = a[np.isfinite(a)]
        return float(a.max()) if a.size else float("nan")
    def _mn(a):
        a = a[np.isfinite(a)]
        return float(a.min()) if a.size else float("nan")
    return EmbeddingStats(eid, half, _mx(first), _mx(full), _mn(full), skipped, r)


# -- CSV ----------------------------------------------------------------------

NORM_CSV_COLUMNS = ("norm_id", "p", "q", "s", "grid", "value", "tail_warning_flag")


def _fmt_exp(p) -> str:
    if p is None or p == "":
        return ""
    return "inf" if p == math.inf else str(p)


def norm_row(norm_id: str, grid: GridSpec, value: float, p=None, q=None, s=None,
             tail_warning: bool = False) -> dict:
    return {
        "norm_id": norm_id,
        "p": _fmt_exp(p),
        "q": _fmt_exp(q),
        "s": "" if s is None else repr(float(s)),
        "grid": f"{grid.n}x{grid.points_per_axis}@{grid.period!r}",
        "value": repr(float(value)),
        "tail_warning_flag": int(bool(tail_warning)),
    }


def write_norm_csv(rows, path, extra_columns: Sequence[str] = ()) -> None:
    cols = list(NORM_CSV_COLUMNS) + list(extra_columns)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
