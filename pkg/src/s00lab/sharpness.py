"""Critical exponents, discrete convolution inequalities and growth experiments.

The growth experiments build explicit multiplier families whose operator
ratios scale like ``2^{slope * scale}``; the fitted slope is compared with
the value predicted by exponent arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.signal import correlate, fftconvolve

from .bumps import annulus_bump, annulus_plateau
from .errors import BudgetError, ConvergenceError, ParameterError, PreconditionError
from .lattice import GridSpec, LatticeField, from_spectrum
from .norms import ExponentTuple, as_exponent, lp_norm, recip
from .operators import apply_multiplier_fft
from .symbols import SymbolSpec

# -- exponent arithmetic ------------------------------------------------------


def critical_exponent(n: int, exps: ExponentTuple):
    """``min(n/p, n/2) - sum_j max(n/p_j, n/2)``; exact for rational exponents."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    half = Fraction(n, 2)
    first = min(n * recip(exps.p), half)
    return first - sum(max(n * recip(q), half) for q in exps.p_list)


def bilinear_closed_form(n: int, exps: ExponentTuple):
    """Bilinear closed form ``-n max{1/2, 1/p1, 1/p2, 1-1/p1-1/p2, 1/p1+1/p2-1/2}``.

    Valid on the hyperplane ``1/p = 1/p1 + 1/p2``.
    """
    if exps.N != 2:
        raise ParameterError("the bilinear closed form needs N = 2")
    a, b = (recip(q) for q in exps.p_list)
    return -n * max(Fraction(1, 2), a, b, 1 - a - b, a + b - Fraction(1, 2))


# -- slope fitting --------------------------------------------------------------


@dataclass
class SharpnessReport:
    family: str
    points: list  # (scale index, measured value)
    fitted_slope: float
    theory_slope: float
    residual: float
    extra: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        return abs(self.fitted_slope - self.theory_slope)


def fit_slope(scales: Sequence[float], values: Sequence[float]) -> tuple:
    """Least-squares slope of ``log2(values)`` against ``scales``.

    Returns ``(slope, intercept, rms_residual)``; needs at least 4 points.
    """
    x = np.asarray(scales, float)
    v = np.asarray(values, float)
    if len(x) < 4:
        raise ParameterError(f"slope fit needs at least 4 scale points, got {len(x)}")
    if np.any(v <= 0):
        raise ParameterError("slope fit needs positive values")
    y = np.log2(v)
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(slope), float(icpt), res


# -- discrete Hilbert-type inequalities -------------------------------------------


@dataclass
class ConstantEstimate:
    value: float
    residual: float
    iterations: int
    factors: list = field(default_factory=list, repr=False)


def _lattice(radius: int, n: int) -> np.ndarray:
    ax = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*([ax] * n), indexing="ij"), -1)


def _weights(radius: int, n: int, a: float) -> np.ndarray:
    r = np.sqrt(np.sum(_lattice(radius, n).astype(float) ** 2, axis=-1))
    return (1.0 + r) ** a


def _embed(prev: np.ndarray, radius: int, n: int) -> np.ndarray:
    out = np.zeros((2 * radius + 1,) * n)
    R0 = (prev.shape[0] - 1) // 2
    sl = tuple(slice(radius - R0, radius + R0 + 1) for _ in range(n))
    out[sl] = prev
    return out


def _conv_all(arrs):
    out = arrs[0]
    for a in arrs[1:]:
        out = fftconvolve(out, a)
    return np.clip(out, 0, None)


def _normalize(a: np.ndarray, q) -> np.ndarray:
    a = np.clip(a, 0, None)
    nrm = np.max(a) if q == math.inf else np.sum(a ** float(q)) ** (1 / float(q))
    return a / nrm if nrm > 0 else a


def hilbert_type_constant(N: int, n: int, r=None, a_list=None, lattice_radius: int = 64,
                          max_iter: int = 20000, tol: float = 1e-11, warm=None,
                          seed: int = 0, starts: int = 1) -> ConstantEstimate:
    """Best constant of a discrete multilinear inequality on ``|nu_j|_inf <= radius``.

    Without ``r`` the kernel form ``sum (1 + sum|nu_j|)^{-Nn/2} prod A_j(nu_j)
    <= C prod ||A_j||_2`` is used; for ``N = 2`` the constant is the largest
    singular value of the kernel matrix. With ``r`` and ``a_list`` the weighted
    convolution form ``|| sum_{sum nu_j = mu} prod <nu_j>^{a_j} A_j(nu_j) ||_{l^{r'}}
    <= C prod ||A_j||_2`` is used. Both are maximized by alternating updates
    over nonnegative unit factors (the dual factor lies in ``l^r``); every
    update cannot decrease the objective, so a warm start from a smaller
    radius gives nondecreasing estimates.
    """
    if N < 2 or n < 1:
        raise ParameterError("need N >= 2 and n >= 1")
    R = int(lattice_radius)
    weighted = r is not None
    if weighted:
        r = as_exponent(r, "r", allow_inf=False)
        if not 1 < r:
            raise ParameterError("weighted form needs 1 < r < inf")
        if a_list is None or len(a_list) != N:
            raise ParameterError("a_list must have N entries")
        a_list = [float(a) for a in a_list]
        if any(not (-n / 2 < a < 0) for a in a_list):
            raise ParameterError("weights need -n/2 < a_j < 0")
        if abs(sum(a_list) - (n / float(r) - N * n / 2)) > 1e-12:
            raise ParameterError("weights need sum a_j = n/r - N n/2")
        rp = 1 / (1 - 1 / float(r))
    pts = _lattice(R, n).astype(float)
    mags = np.sqrt(np.sum(pts**2, axis=-1))
    if not weighted and N == 2:
        side = mags.size
        if side > 8192:
            raise BudgetError(f"kernel matrix side {side} exceeds 8192")
        m = mags.reshape(-1)
        K = (1 + m[:, None] + m[None, :]) ** (-n)
        val = float(np.linalg.eigvalsh(K)[-1])
        return ConstantEstimate(val, 0.0, 1)
    rng = np.random.default_rng(seed)
    best = None
    for st in range(starts):
        if warm is not None and st == 0:
            facs = [_embed(w, R, n) for w in warm]
        else:
            facs = [rng.uniform(0.5, 1.0, mags.shape) * (1 + mags) ** (-n / 2) for _ in range(N)]
        facs = [_normalize(f, 2) for f in facs]
        if weighted:
            ws = [_weights(R, n, a) for a in a_list]
            dual = _normalize(np.ones((2 * N * R + 1,) * n), float(r))
        obj_old, it = -1.0, 0
        for it in range(1, max_iter + 1):
            if weighted:
                g = _conv_all([w * f for w, f in zip(ws, facs)])
                dual = _normalize(g ** (rp - 1), float(r))
                for j in range(N):
                    others = [ws[i] * facs[i] for i in range(N) if i != j]
                    C = _conv_all(others)
                    grad = ws[j] * np.clip(correlate(dual, C, mode="valid"), 0, None)
                    facs[j] = _normalize(grad, 2)
                g = _conv_all([w * f for w, f in zip(ws, facs)])
                obj = float(np.sum(g**rp) ** (1 / rp))
            else:
                for j in range(N):
                    grad = _kernel_grad(mags, facs, j, n, N)
                    facs[j] = _normalize(grad, 2)
                obj = float(np.sum(_kernel_grad(mags, facs, 0, n, N) * facs[0]))
            if obj_old > 0 and abs(obj - obj_old) <= tol * obj:
                break
            obj_old = obj
        else:
            raise ConvergenceError(
                f"alternating maximization did not converge in {max_iter} iterations "
                f"(relative change {abs(obj - obj_old) / obj:.2e})")
        res = abs(obj - obj_old) / obj
        if best is None or obj > best.value:
            best = ConstantEstimate(obj, res, it, [f.copy() for f in facs])
    return best


def _kernel_grad(mags: np.ndarray, facs, j: int, n: int, N: int) -> np.ndarray:
    """Contract the kernel ``(1 + sum|nu_i|)^{-Nn/2}`` with all factors but ``j``.

    The kernel depends on the magnitudes only through their sum, so the
    factors are pushed forward to the distribution of ``|nu_i|`` first.
    """
    m = mags.reshape(-1)
    levels, inv = np.unique(np.round(m, 12), return_inverse=True)
    inv = inv.reshape(-1)
    # marginal of each factor over magnitude levels
    marg = [np.bincount(inv, f.reshape(-1), len(levels)) for f in facs]
    others = [marg[i] for i in range(N) if i != j]
    # distribution of sums over the others as a sparse dictionary
    sums = {0.0: 1.0}
    for mg in others:
        nxt = {}
        for s, wgt in sums.items():
            for lv, w2 in zip(levels, mg):
                if w2 == 0:
                    continue
                key = round(s + lv, 9)
                nxt[key] = nxt.get(key, 0.0) + wgt * w2
        sums = nxt
    svals = np.array(list(sums.keys()))
    sw = np.array(list(sums.values()))
    kern = (1 + levels[:, None] + svals[None, :]) ** (-N * n / 2)
    per_level = kern @ sw
    return per_level[inv].reshape(mags.shape)


def hilbert_sweep(radii: Sequence[int], N: int = 2, n: int = 1, r=None, a_list=None, **kw) -> list:
    """Estimates at increasing radii, each warm-started from the previous optimum."""
    out, warm = [], None
    for R in sorted(radii):
        est = hilbert_type_constant(N, n, r, a_list, R, warm=warm, **kw)
        if out and est.value < out[-1].value:
            est = ConstantEstimate(out[-1].value, est.residual, est.iterations, est.factors)
        warm = est.factors or None
        out.append(est)
    return out


# -- lacunary-phase series ------------------------------------------------------


@dataclass(frozen=True)
class WaingerParams:
    """Parameters of ``sum_{l != 0} |l|^{-b} e^{2 pi i |l|^a} e^{i l.x}`` on the torus."""

    a: float
    p: object
    epsilon: float
    n: int = 1
    radius: int = 64

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ParameterError("a must lie in (0, 1)")
        object.__setattr__(self, "p", as_exponent(self.p))
        if not self.p >= 1:
            raise ParameterError("p must lie in [1, inf]")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    @property
    def b(self) -> float:
        n = self.n
        return n / 2 + (1 - self.a) * (n / 2 - n * float(recip(self.p))) + self.epsilon


def wainger_coefficients(w: WaingerParams, radius: int) -> tuple:
    """Lattice points ``0 < |l|_inf <= radius`` and their coefficients."""
    pts = _lattice(radius, w.n).reshape(-1, w.n)
    pts = pts[np.any(pts != 0, axis=1)]
    mag = np.sqrt(np.sum(pts.astype(float) ** 2, axis=1))
    return pts, mag ** (-w.b) * np.exp(2j * math.pi * mag**w.a)


def wainger_partial_sum(w: WaingerParams, radius: int, points_per_axis: int | None = None) -> LatticeField:
    """Partial sum over ``|l|_inf <= radius`` sampled on a period-``2 pi`` grid."""
    P = points_per_axis or max(8, 1 << int(math.ceil(math.log2(4 * radius + 1))))
    if P <= 2 * radius:
        raise BudgetError(f"{P} points cannot hold frequencies up to {radius}")
    g = GridSpec(w.n, P, 2 * math.pi, memory_budget=max(P**w.n, 2**24))
    pts, c = wainger_coefficients(w, radius)
    spec = np.zeros(g.shape, complex)
    spec[tuple((pts + P // 2).T)] = (2 * math.pi) ** w.n * c
    return from_spectrum(g, spec)


@dataclass
class WaingerResult:
    field: LatticeField
    radius: int
    norms: list  # (radius, L^p norm)
    certified: bool


def wainger_synthesize(w: WaingerParams, grid: GridSpec | None = None, max_radius: int | None = None,
                       rel_tol: float = 0.01) -> WaingerResult:
    """Double the truncation radius until the ``L^p`` norms at ``R`` and ``2R`` differ by < 1%.

    The returned field is the partial sum at the accepted radius, sampled on
    ``grid`` when it is fine enough.
    """
    if grid is not None:
        if abs(grid.period - 2 * math.pi) > 1e-12 or grid.n != w.n:
            raise PreconditionError("the series lives on a period-2 pi grid of matching dimension")
    max_radius = max_radius or (2**15 if w.n == 1 else 2**7)
    R = max(1, w.radius)
    norms = []
    prev = lp_norm(wainger_partial_sum(w, R), w.p)
    norms.append((R, prev))
    while 2 * R <= max_radius:
        cur = lp_norm(wainger_partial_sum(w, 2 * R), w.p)
        norms.append((2 * R, cur))
        if abs(cur - prev) <= rel_tol * abs(cur):
            P = grid.points_per_axis if grid is not None and grid.points_per_axis > 4 * R else None
            return WaingerResult(wainger_partial_sum(w, 2 * R, P), 2 * R, norms, True)
        R, prev = 2 * R, cur
    raise ConvergenceError(
        f"L^{w.p} norms still move by {abs(cur - prev) / abs(cur):.1%} at radius {R}; raise epsilon or a")


# -- random-sign family -----------------------------------------------------------


def default_l_offset(N: int) -> int:
    """Smallest ``L`` with ``(N-1) 2^{-L} <= 1/4``."""
    return 2 if N <= 1 else int(math.ceil(2 + math.log2(N - 1)))


def limit_a(exps: ExponentTuple) -> list:
    """Endpoint values of ``a_j``: 1 where ``p_j >= 2`` and 0 where ``p_j < 2``."""
    return [1.0 if q >= 2 else 0.0 for q in exps.p_list]


def b_exponents(n: int, exps: ExponentTuple, a_list, eps: float) -> list:
    return [n / 2 + (1 - a) * (n / 2 - n * float(recip(q))) + eps for a, q in zip(a_list, exps.p_list)]


def _shell(lo: float, hi: float, n: int) -> np.ndarray:
    R = int(math.floor(hi))
    pts = _lattice(R, n).reshape(-1, n)
    m = np.sqrt(np.sum(pts.astype(float) ** 2, axis=1))
    return pts[(m >= lo) & (m <= hi)]


@dataclass
class CaseOneScale:
    A: int
    ks: np.ndarray
    d: np.ndarray
    direct_total: float
    containment_failures: list


def case1_coefficients(n: int, N: int, m: float, b_list, A: int, L: int,
                       max_terms: int = 2**26) -> CaseOneScale:
    """``d_k = sum_{kvec in D_A, sum k_j = k} (1 + |kvec|)^m prod |k_j|^{-b_j}``.

    ``D_A`` fixes ``2^{A-L-1} <= |k_j| <= 2^{A-L}`` for ``j < N`` and
    ``2^{A-1} <= |k_1 + ... + k_N| <= 2^{A+1}``. Tuples whose last entry
    leaves ``[2^{A-2}, 2^{A+2}]`` are reported; tuples with a zero entry are
    dropped since the summand is undefined there.
    """
    small = _shell(2.0 ** (A - L - 1), 2.0 ** (A - L), n)
    big = _shell(2.0 ** (A - 1), 2.0 ** (A + 1), n)
    count = len(small) ** (N - 1) * len(big)
    if count > max_terms:
        raise BudgetError(f"D_A has {count} tuples; budget {max_terms}")
    # all (k_1..k_{N-1}) combinations
    if N > 1:
        mesh = np.meshgrid(*([np.arange(len(small))] * (N - 1)), indexing="ij")
        heads = np.stack([small[m.reshape(-1)] for m in mesh], axis=1)  # (H, N-1, n)
    else:
        heads = np.zeros((1, 0, n), int)
    head_sum = heads.sum(axis=1)  # (H, n)
    head_w = np.prod(np.sqrt(np.sum(heads.astype(float) ** 2, axis=-1)) ** (-np.asarray(b_list[:-1])), axis=1)
    head_sq = np.sum(heads.astype(float) ** 2, axis=(1, 2))
    d = np.zeros(len(big))
    direct = 0.0
    failures = []
    lo, hi = 2.0 ** (A - 2), 2.0 ** (A + 2)
    for i, k in enumerate(big):
        last = k[None, :] - head_sum  # (H, n)
        lm = np.sqrt(np.sum(last.astype(float) ** 2, axis=1))
        bad = (lm < lo) | (lm > hi)
        if np.any(bad) and len(failures) < 20:
            h = int(np.flatnonzero(bad)[0])
            failures.append([*heads[h].tolist(), last[h].tolist()])
        ok = lm > 0
        tot = np.sqrt(head_sq + lm**2)
        terms = (1 + tot[ok]) ** m * head_w[ok] * lm[ok] ** (-b_list[-1])
        d[i] = terms.sum()
    # second enumeration order: loop over heads, vectorize over k
    for h in range(len(heads)):
        last = big - head_sum[h]
        lm = np.sqrt(np.sum(last.astype(float) ** 2, axis=1))
        ok = lm > 0
        tot = np.sqrt(head_sq[h] + lm[ok] ** 2)
        direct += float(np.sum((1 + tot) ** m * head_w[h] * lm[ok] ** (-b_list[-1])))
    return CaseOneScale(A, big, d, direct, failures)


def rademacher_signs(seed: int, A: int, draws: int, count: int) -> np.ndarray:
    """Signs from a Philox stream keyed by ``(seed, A)``; row ``t`` is draw ``t``."""
    bitgen = np.random.Philox(key=(int(seed) << 32) + int(A))
    return np.where(np.random.Generator(bitgen).integers(0, 2, (draws, count)) == 1, 1.0, -1.0)


def khintchine_ratio(ks: np.ndarray, d: np.ndarray, p, draws: int, seed: int, A: int,
                     chunk: int = 256) -> float:
    """``E || sum_k r_k d_k e^{ik.x} ||_{L^p}^p / (sum d_k^2)^{p/2}`` on the normalized torus."""
    n = ks.shape[1]
    p = float(as_exponent(p, allow_inf=False))
    R = int(np.max(np.abs(ks)))
    P = max(8, 1 << int(math.ceil(math.log2(4 * R + 1))))
    if P**n * chunk > 2**26:
        chunk = max(1, 2**26 // P**n)
    signs = rademacher_signs(seed, A, draws, len(ks))
    idx = tuple(((ks + P) % P).T)
    acc = 0.0
    for s in range(0, draws, chunk):
        sg = signs[s:s + chunk]
        spec = np.zeros((len(sg),) + (P,) * n, complex)
        spec[(slice(None),) + idx] = sg * d
        vals = np.fft.ifftn(spec, axes=tuple(range(1, n + 1))) * P**n
        acc += float(np.sum(np.mean(np.abs(vals.reshape(len(sg), -1)) ** p, axis=1)))
    return acc / draws / float(np.sum(d**2)) ** (p / 2)


def case1_random_sign_experiment(n: int, N: int, exps: ExponentTuple, m: float, A_list: Sequence[int],
                                 L_offset: int | None = None, trials: int = 0, seed: int = 0,
                                 a_list=None, eps: float = 0.0) -> SharpnessReport:
    """Growth of ``(sum_k d_k^2)^{1/2}`` over the scales in ``A_list``.

    ``a_list`` defaults to the endpoint values from :func:`limit_a`. With
    ``trials > 0`` the Rademacher average is estimated by Monte Carlo at each
    scale and the ratios to the square-function value are reported.
    """
    if exps.N != N:
        raise ParameterError("exponent tuple length differs from N")
    if not all(1 < q < math.inf for q in exps.p_list):
        raise ParameterError("random-sign family needs 1 < p_j < inf")
    if not 0 < exps.p <= 2:
        raise ParameterError("random-sign family needs 0 < p <= 2")
    a_list = limit_a(exps) if a_list is None else list(a_list)
    b = b_exponents(n, exps, a_list, eps)
    L = default_l_offset(N) if L_offset is None else int(L_offset)
    pts, fails, unsigned, ratios = [], {}, {}, {}
    for A in A_list:
        sc = case1_coefficients(n, N, float(m), b, int(A), L)
        pts.append((int(A), float(np.sqrt(np.sum(sc.d**2)))))
        unsigned[int(A)] = (float(sc.d.sum()), sc.direct_total)
        if sc.containment_failures:
            fails[int(A)] = sc.containment_failures
        if trials:
            ratios[int(A)] = khintchine_ratio(sc.ks, sc.d, exps.p, trials, seed, int(A))
    slope, _, res = fit_slope([a for a, _ in pts], [v for _, v in pts])
    theory = float(m) - sum(b) + n * (N - 1) + n / 2
    extra = {"b": b, "a": a_list, "L_offset": L, "containment_failures": fails,
             "unsigned_totals": unsigned, "khintchine_ratios": ratios, "seed": seed}
    return SharpnessReport("case1_random_sign", pts, slope, theory, res, extra)


# -- dyadic family ------------------------------------------------------------------


def case3_psi(xi: np.ndarray) -> np.ndarray:
    """Radial bump supported in ``2^{-1/4} <= |xi| <= 2^{1/4}``."""
    r = np.sqrt(np.sum(np.asarray(xi, float) ** 2, axis=-1))
    return annulus_bump(r, 2 ** -0.25, 2 ** 0.25)


def case3_Psi(xis: np.ndarray, N: int) -> np.ndarray:
    """1 on ``2^{-1/4} N <= sum|xi_j| <= 2^{1/4} N``, 0 outside ``[2^{-1/2} N, 2^{1/2} N]``."""
    s = np.sum(np.sqrt(np.sum(np.asarray(xis, float) ** 2, axis=-1)), axis=-1)
    return annulus_plateau(s, 2 ** -0.5 * N, 2 ** -0.25 * N, 2 ** 0.25 * N, 2 ** 0.5 * N)


def case3_symbol(n: int, N: int, m: float, j_max: int) -> SymbolSpec:
    """``sum_{0 <= j <= j_max} 2^{jm} Psi(2^{-j} xi)``."""

    def func(xis):
        out = np.zeros(np.shape(xis)[:-2])
        for j in range(j_max + 1):
            out = out + 2.0 ** (j * m) * case3_Psi(np.asarray(xis) * 2.0 ** (-j), N)
        return out

    return SymbolSpec.multiplier(n, N, func, float(m), name="dyadic")


def case3_grid(N: int, k_max: int, points: int = 2**14, headroom: float = 1.25, n: int = 1) -> GridSpec:
    """Grid whose band reaches ``headroom * N * 2^{k_max + 1/4}``."""
    top = headroom * N * 2 ** (k_max + 0.25)
    period = math.pi * points / top
    return GridSpec(n, points, period, memory_budget=max(points**n, 2**24))


def case3_input(grid: GridSpec, k: int, p_j) -> LatticeField:
    """Field with transform ``2^{kn(1/p_j - 1)} psi(2^{-k} xi)``."""
    n = grid.n
    amp = 2.0 ** (k * n * (float(recip(p_j)) - 1))
    return from_spectrum(grid, amp * case3_psi(grid.freq_coords() * 2.0**-k))


def case3_dyadic_experiment(n: int, N: int, exps: ExponentTuple, m: float, k_list: Sequence[int],
                            grid: GridSpec | None = None) -> SharpnessReport:
    """Growth of ``||T(f_{1,k}, .., f_{N,k})||_{L^p} / prod ||f_{j,k}||_{L^{p_j}}`` in ``k``."""
    if exps.N != N:
        raise ParameterError("exponent tuple length differs from N")
    if not all(1 < q < 2 for q in exps.p_list) or not 2 < exps.p < math.inf:
        raise ParameterError("dyadic family needs 1 < p_j < 2 and 2 < p < inf")
    k_list = [int(k) for k in k_list]
    grid = grid or case3_grid(N, max(k_list), n=n)
    need = N * 2 ** (max(k_list) + 0.25)
    if grid.max_frequency < need:
        raise BudgetError(
            f"grid band {grid.max_frequency:.1f} cannot resolve scale 2^{max(k_list)}: need {need:.1f}")
    sigma = case3_symbol(n, N, float(m), max(k_list) + 1)
    pts, in_norms = [], {}
    for k in k_list:
        fs = [case3_input(grid, k, q) for q in exps.p_list]
        nj = [lp_norm(f, q) for f, q in zip(fs, exps.p_list)]
        in_norms[k] = nj
        # spectra are exactly zero off the annulus up to transform roundoff
        out = apply_multiplier_fft(sigma, fs, support_tol=1e-13).output
        pts.append((k, lp_norm(out, exps.p) / float(np.prod(nj))))
    slope, _, res = fit_slope(k_list, [v for _, v in pts])
    theory = float(m) + sum(n * float(recip(q)) for q in exps.p_list) - n * float(recip(exps.p))
    spread = {j: max(v[j] for v in in_norms.values()) / min(v[j] for v in in_norms.values()) - 1
              for j in range(N)}
    extra = {"input_norms": in_norms, "input_norm_spread": spread,
             "grid": [grid.n, grid.points_per_axis, grid.period]}
    return SharpnessReport("case3_dyadic", pts, slope, theory, res, extra)


# -- scans --------------------------------------------------------------------------

SCAN_COLUMNS = ("p", "p_list", "offset", "m", "family", "fitted_slope", "theory_slope", "residual",
                "pass", "error")


def _fmt(q) -> str:
    return "inf" if q == math.inf else str(q)


def threshold_scan(n: int, N: int, p_grid: Sequence, m_offsets: Sequence[float],
                   budget: dict | None = None, eps: float = 0.0, seed: int = 0) -> list:
    """Run the applicable growth family at ``m = m_cr + offset`` for each tuple.

    ``p_grid`` lists ``(p, (p_1, .., p_N))`` pairs. The dyadic family is used
    when ``1 < p_j < 2`` and ``2 < p < inf``, the random-sign family when
    ``1 < p_j < inf`` and ``p <= 2``. Failures are recorded per cell.
    """
    budget = budget or {}
    A_list = budget.get("A_list", [8, 9, 10, 11, 12])
    k_list = budget.get("k_list", [2, 3, 4, 5])
    points = budget.get("points", 2**12)
    rows = []
    for p, plist in p_grid:
        for off in m_offsets:
            row = {"p": _fmt(p), "p_list": " ".join(_fmt(q) for q in plist), "offset": off,
                   "m": "", "family": "", "fitted_slope": "", "theory_slope": "", "residual": "",
                   "pass": "", "error": ""}
            try:
                exps = ExponentTuple(p, tuple(plist))
                m = float(critical_exponent(n, exps)) + float(off)
                row["m"] = m
                if all(1 < q < 2 for q in exps.p_list) and 2 < exps.p < math.inf:
                    rep = case3_dyadic_experiment(n, N, exps, m, k_list,
                                                  case3_grid(N, max(k_list), points, n=n))
                elif all(1 < q < math.inf for q in exps.p_list) and exps.p <= 2:
                    rep = case1_random_sign_experiment(n, N, exps, m, A_list, eps=eps, seed=seed)
                else:
                    raise ParameterError("no growth family applies to this tuple")
                row.update(family=rep.family, fitted_slope=rep.fitted_slope, theory_slope=rep.theory_slope,
                           residual=rep.residual, **{"pass": rep.deviation < 0.05})
            except Exception as exc:  # recorded per cell, scan continues
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows
