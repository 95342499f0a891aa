"""Evaluation of multilinear pseudo-differential operators on a periodic grid.

Three independent routes are provided:

* :func:`apply_direct` sums the defining frequency integral by the trapezoid
  rule on the dual lattice, using explicit DFT matrices and no FFT;
* :func:`apply_multiplier_fft` handles x-independent symbols with FFTs and a
  pushforward of the N-fold spectrum along ``xi_1 + ... + xi_N``;
* :func:`apply_via_decomposition` sums the unit-cube Fourier expansion
  produced by :func:`s00lab.symbols.decompose`.

The module also exposes the quantities entering the amalgam-space estimate
for the decomposed operator (the families ``h_mu``, the Nikol'skij ratio and
endpoint ratio studies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetError, ParameterError, PreconditionError, StructuralError
from .lattice import GridSpec, LatticeField, forward_transform
from .norms import ExponentTuple, WindowKappa, as_exponent, lp_norm, wiener_amalgam_norm
from .symbols import DecomposedSymbol, PartitionSet, PieceCache, SymbolSpec, _box, _bracket

DIRECT = "direct_quadrature"
MULTIPLIER_FFT = "multiplier_fft"
DECOMPOSITION = "decomposition_sum"

DIRECT_WORK_BUDGET = 2**36
FFT_WORK_BUDGET = 2**26


@dataclass
class OperatorResult:
    output: LatticeField
    method: str
    truncation_report: dict = field(default_factory=dict)


def _common_grid(f_list: Sequence[LatticeField]) -> GridSpec:
    if not f_list:
        raise StructuralError("at least one input field is required")
    g = f_list[0].grid
    for f in f_list:
        if f.grid != g:
            raise StructuralError("all inputs must share one GridSpec")
        if f.domain_tag != "space":
            raise PreconditionError("inputs must be space-domain fields")
    return g


def _dft_matrix(g: GridSpec) -> np.ndarray:
    """``E[x, xi] = e^{i x.xi}`` over flattened grid points."""
    x = g.coords().reshape(-1, g.n)
    xi = g.freq_coords().reshape(-1, g.n)
    return np.exp(1j * (x @ xi.T))


def apply_direct(sigma: SymbolSpec, f_list: Sequence[LatticeField],
                 budget: int = DIRECT_WORK_BUDGET, x_chunk: int | None = None) -> OperatorResult:
    """Trapezoid-rule evaluation of the defining integral.

    ``T(x) = (2 pi)^{-Nn} sum_{xi_1..xi_N} e^{i x.sum xi_j} sigma(x, xi) prod f^_j(xi_j) dxi^{Nn}``
    with ``f^_j`` also computed as explicit sums. The work is
    ``points^{n(N+1)}`` multiply-adds; larger requests raise
    :class:`BudgetError`.
    """
    g = _common_grid(f_list)
    N, n = len(f_list), g.n
    if sigma.N != N or sigma.n != n:
        raise StructuralError(f"symbol is ({sigma.N}, {sigma.n}); inputs are ({N}, {n})")
    work = g.size ** (N + 1)
    if work > budget:
        raise BudgetError(f"direct quadrature needs {work} operations (points^(n(N+1))); budget {budget}")
    E = _dft_matrix(g)  # (X, Xi)
    X = g.size
    hats = [(E.conj().T @ f.flat()) * g.cell_volume for f in f_list]
    xi = g.freq_coords().reshape(-1, n)
    const = (g.dual_cell_volume / (2 * math.pi) ** n) ** N
    # G_j[xi, x] = e^{i x.xi} f^_j(xi)
    G = [E.T * h[:, None] for h in hats]
    out = np.empty(X, complex)
    grids = np.meshgrid(*([np.arange(X)] * N), indexing="ij")
    xi_all = np.stack([xi[gi] for gi in grids], axis=-2)  # (X,)*N + (N, n)
    if sigma.x_independent:
        S = sigma(np.zeros(n), xi_all)
        A = S.reshape(-1, X) @ G[-1]  # (X^{N-1}, x)
        for j in range(N - 2, -1, -1):
            A = np.einsum("akx,kx->ax", A.reshape(X**j, X, X), G[j])
        out = A.reshape(X)
    else:
        xs = g.coords().reshape(-1, n)
        chunk = x_chunk or max(1, 2**22 // X ** N)
        for s in range(0, X, chunk):
            sl = slice(s, min(X, s + chunk))
            for i in range(sl.start, sl.stop):
                S = sigma(xs[i], xi_all).reshape(-1)
                acc = S.reshape((X,) * N)
                for j in range(N - 1, -1, -1):
                    acc = acc @ G[j][:, i]
                out[i] = acc
    return OperatorResult(LatticeField(g, (out * const).reshape(g.shape)), DIRECT,
                          {"work": work})


def _support(h: np.ndarray, tol: float) -> np.ndarray:
    a = np.abs(h)
    m = a.max()
    if m == 0:
        return np.zeros(0, int)
    return np.flatnonzero(a > tol * m)


def apply_multiplier_fft(sigma: SymbolSpec, f_list: Sequence[LatticeField],
                         support_tol: float = 0.0, budget: int = FFT_WORK_BUDGET) -> OperatorResult:
    """FFT evaluation of an x-independent symbol.

    Separable symbols are applied factor by factor followed by a pointwise
    product. Otherwise the symbol is sampled on the product of the input
    spectral supports (entries with ``|f^_j| > support_tol * max|f^_j|``;
    ``support_tol=0`` keeps every nonzero entry, so nothing is approximated)
    and pushed forward to ``sum xi_j`` modulo the grid period. On grid points
    this folding reproduces the trapezoid sum exactly; the fraction of
    product energy that wraps around is reported as ``alias_fraction``.
    """
    if not sigma.x_independent:
        raise PreconditionError("apply_multiplier_fft requires an x-independent symbol")
    g = _common_grid(f_list)
    N, n = len(f_list), g.n
    if sigma.N != N or sigma.n != n:
        raise StructuralError(f"symbol is ({sigma.N}, {sigma.n}); inputs are ({N}, {n})")
    P = g.points_per_axis
    xi = g.freq_coords()
    hats = [forward_transform(f).values for f in f_list]
    if sigma.factors is not None:
        out = np.ones(g.shape, complex)
        for fj, h in zip(sigma.factors, hats):
            spec = h * np.asarray(fj(xi), complex)
            out = out * np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(spec))) * (g.size / g.period**n)
        alias = _alias_fraction(g, hats)
        return OperatorResult(LatticeField(g, out), MULTIPLIER_FFT,
                              {"separable": True, "alias_fraction": alias})
    supports = [_support(h, support_tol) for h in hats]
    if any(len(s) == 0 for s in supports):
        return OperatorResult(LatticeField.zeros(g), MULTIPLIER_FFT, {"separable": False, "alias_fraction": 0.0})
    work = int(np.prod([len(s) for s in supports], dtype=float))
    if work > budget:
        raise BudgetError(f"multiplier product needs {work} spectrum samples; budget {budget}")
    xi_flat = xi.reshape(-1, n)
    idx_flat = np.stack(np.unravel_index(np.arange(g.size), g.shape), -1)  # (X, n)
    mesh = np.meshgrid(*supports, indexing="ij")
    xi_all = np.stack([xi_flat[m] for m in mesh], axis=-2)  # (...,N,n)
    vals = sigma.of_xi(xi_all)
    for j, m in enumerate(mesh):
        vals = vals * hats[j].reshape(-1)[m]
    tgt = -(N - 1) * (P // 2) * np.ones(n, int)
    for m in mesh:
        tgt = tgt + idx_flat[m]
    tgt = np.mod(tgt, P)
    lin = np.ravel_multi_index(tuple(np.moveaxis(tgt, -1, 0)), g.shape).reshape(-1)
    v = vals.reshape(-1)
    acc = (np.bincount(lin, v.real, g.size) + 1j * np.bincount(lin, v.imag, g.size))
    acc *= (g.dual_cell_volume / (2 * math.pi) ** n) ** (N - 1)
    spec = acc.reshape(g.shape)
    out = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(spec))) * (g.size / g.period**n)
    return OperatorResult(LatticeField(g, out), MULTIPLIER_FFT,
                          {"separable": False, "support_sizes": [len(s) for s in supports],
                           "alias_fraction": _alias_fraction(g, hats)})


def _alias_fraction(g: GridSpec, hats) -> float:
    """Share of the (unsymbolled) product spectrum whose ``sum xi_j`` leaves the grid band."""
    xi = g.freq_axis()
    lo, hi = xi[0], xi[-1]
    dens = None
    for h in hats:
        w = np.abs(h) ** 2
        # marginal along each axis: distribution of the frequency coordinate
        margs = []
        for a in range(g.n):
            margs.append(w.sum(axis=tuple(b for b in range(g.n) if b != a)))
        dens = margs if dens is None else [np.convolve(d, m) for d, m in zip(dens, margs)]
    frac = 0.0
    N = len(hats)
    for d in dens:
        tot = d.sum()
        if tot == 0:
            continue
        s = N * lo + np.arange(len(d)) * g.dxi
        frac = max(frac, float(d[(s < lo - 1e-9) | (s > hi + 1e-9)].sum() / tot))
    return frac


# -- decomposition route ------------------------------------------------------------


def bracket_tail_sum(power: float, dim: int, K: int, radius: int | None = None) -> float:
    """``sum_{k in Z^dim, |k|_inf > K} <k>^{-power}``.

    Lattice sum up to ``|k|_inf <= radius`` plus the integral bound for the
    remainder outside the ball of that radius.
    """
    if power <= dim:
        return math.inf
    if radius is None:
        radius = {1: 2**16, 2: 1024, 3: 96}.get(dim, 20)
    radius = max(radius, K + 1)
    ax = np.arange(-radius, radius + 1, dtype=float)
    b1 = 1 + ax**2
    sq = b1
    for _ in range(dim - 1):
        sq = (sq[..., None] + ax**2)
    full = float(np.sum(sq ** (-power / 2)))
    inner = _box(K, dim).astype(float)
    kept = float(np.sum((1 + np.sum(inner**2, axis=1)) ** (-power / 2)))
    sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    rest = sphere * radius ** (dim - power) / (power - dim)
    return full - kept + rest


def _input_coverage(f_list, parts: PartitionSet, nus: np.ndarray) -> float:
    """Largest fraction of an input's spectral energy outside the retained cubes."""
    worst = 0.0
    for j, f in enumerate(f_list):
        g = f.grid
        h = np.abs(forward_transform(f).values) ** 2
        tot = h.sum()
        if tot == 0:
            continue
        xi = g.freq_coords()
        cov = np.zeros(g.shape)
        for nu in {tuple(v) for v in nus[:, j, :].tolist()}:
            cov += parts.phi(xi - np.asarray(nu, float))
        worst = max(worst, float((h * np.clip(1 - cov, 0, None)).sum() / tot))
    return worst


def _contract(coef: np.ndarray, pieces: list, x_dependent: bool) -> np.ndarray:
    """``sum_k coef[k_1..k_N, (x)] prod_j pieces[j][k_j, x]`` with x flattened."""
    A = coef
    N = len(pieces)
    if not x_dependent:
        A = np.tensordot(A, pieces[-1], axes=([N - 1], [0]))
        rest = range(N - 2, -1, -1)
    else:
        rest = range(N - 1, -1, -1)
    for j in rest:
        A = np.einsum("...kx,kx->...x", A, pieces[j])
    return A


def apply_via_decomposition(d: DecomposedSymbol, parts: PartitionSet, f_list: Sequence[LatticeField],
                            allow_uncovered: bool = False, cache_bytes: int = 2**31) -> OperatorResult:
    """Sum ``sum_nu sum_k sum_l <k>^{-2L} <l>^{-2M} Q_{nu,k,l} prod_j F^j_{nu_j,k_j}``.

    The report lists the retained ranges, the measured coefficient tails,
    the lattice tail sums of ``<k>^{-2L}`` and ``<l>^{-2M}`` and the
    resulting sup-norm bound ``C_Q * S_F * (tail_k + tail_l)`` where
    ``C_Q`` bounds ``|Q|`` and ``S_F = sum_nu prod_j ||F^j_{nu_j,0}||_inf``.
    """
    g = _common_grid(f_list)
    N, n = len(f_list), g.n
    if d.N != N or d.n != n:
        raise StructuralError("decomposition does not match the inputs")
    if not d.x_independent and d.grid != g:
        raise StructuralError("x-dependent coefficients were computed on a different grid")
    uncovered = _input_coverage(f_list, parts, d.nus)
    if uncovered > 1e-14 and not allow_uncovered:
        raise StructuralError(
            f"inputs carry {uncovered:.2e} of their spectral energy outside the decomposed cubes")
    cache = PieceCache(f_list, parts, d.K, max_bytes=cache_bytes)
    nk = (2 * d.K + 1) ** n
    out = np.zeros(g.size, complex)
    S_F = 0.0
    zero = nk // 2
    for v, nu in enumerate(d.nus):
        pieces = [cache.get(j, nu[j]).reshape(nk, -1) for j in range(N)]
        S_F += float(np.prod([np.max(np.abs(p[zero])) for p in pieces]))
        coef = d.P[v].reshape((nk,) * N + ((g.size,) if not d.x_independent else ()))
        out += _contract(coef, pieces, not d.x_independent)
    D = N * n
    tail_k = bracket_tail_sum(2 * d.L, D, d.K)
    ell_K = 0 if d.x_independent else int(np.max(np.abs(d.ells)))
    tail_l = 0.0 if d.x_independent else bracket_tail_sum(2 * d.M, n, ell_K)
    report = {
        "K": d.K, "L": d.L, "M": d.M, "ell_range": ell_K, "nu_count": len(d.nus),
        "k_coefficient_tail": float(np.max(d.k_tail)), "ell_energy_tail": d.ell_tail,
        "k_bracket_tail": tail_k, "ell_bracket_tail": tail_l,
        "C_Q": d.C_full, "S_F": S_F, "tail_bound": d.C_full * S_F * (tail_k + tail_l),
        "uncovered_energy": uncovered,
    }
    return OperatorResult(LatticeField(g, out.reshape(g.shape)), DECOMPOSITION, report)


# -- amalgam estimate machinery ---------------------------------------------------


@dataclass
class HmuFamily:
    """``h_mu = sum_{nu_1 + ... + nu_N = mu} Q_{nu,k,l} prod_j F^j_{nu_j,k_j}`` for fixed ``k, l``."""

    k: np.ndarray
    ell: np.ndarray
    mus: np.ndarray
    fields: np.ndarray  # (len(mus),) + grid.shape
    grid: GridSpec

    def support_report(self, radius: float) -> dict:
        """Energy of ``h^_mu`` outside ``mu + l + [-radius, radius]^n`` and the measured extent."""
        g = self.grid
        axes = tuple(range(1, g.n + 1))
        spec = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(self.fields, axes=axes), axes=axes), axes=axes)
        e = np.abs(spec) ** 2
        xi = g.freq_coords()
        worst, extent = 0.0, 0.0
        tot_all = e.sum()
        for i, mu in enumerate(self.mus):
            dist = np.max(np.abs(xi - mu - self.ell), axis=-1)
            tot = e[i].sum()
            if tot == 0:
                continue
            worst = max(worst, float(e[i][dist > radius].sum() / tot_all))
            sig = e[i] > 1e-24 * e[i].max()
            extent = max(extent, float(dist[sig].max()))
        return {"outside_fraction": worst, "measured_extent": extent, "radius": radius}


def _hmu_arrays(d: DecomposedSymbol, parts: PartitionSet, f_list, cache: PieceCache | None = None):
    """All ``h_mu`` for every retained ``(k, l)``.

    Returns ``mus`` (U, n) and ``H`` of shape ``(U, n_l) + (nk,)*N + (X,)``.
    """
    g = _common_grid(f_list)
    N, n = d.N, d.n
    nk = (2 * d.K + 1) ** n
    cache = cache or PieceCache(f_list, parts, d.K)
    musum = d.nus.sum(axis=1)
    mus, inv = np.unique(musum, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    nl = len(d.ells)
    X = g.size
    H = np.zeros((len(mus), nl) + (nk,) * N + (X,), complex)
    for v, nu in enumerate(d.nus):
        pieces = [cache.get(j, nu[j]).reshape(nk, X) for j in range(N)]
        prod = pieces[0]
        for j in range(1, N):
            prod = prod[..., None, :] * pieces[j].reshape((1,) * j + (nk, X))
        Q = d.Q_ell[v].reshape((nl,) + (nk,) * N + ((X,) if not d.x_independent else (1,)))
        H[inv[v]] += Q * prod[None]
    return mus, H


def assemble_hmu(d: DecomposedSymbol, parts: PartitionSet, f_list, k, ell=None) -> HmuFamily:
    """The family ``h_mu`` for one ``k = (k_1..k_N)`` and one ``l``."""
    g = _common_grid(f_list)
    k = np.asarray(k, int).reshape(d.N, d.n)
    ell = np.zeros(d.n, int) if ell is None else np.asarray(ell, int).reshape(d.n)
    if np.any(np.abs(k) > d.K):
        raise StructuralError(f"k = {k.tolist()} outside the decomposed range |k| <= {d.K}")
    li = np.flatnonzero(np.all(d.ells == ell, axis=1))
    if len(li) == 0:
        raise StructuralError(f"l = {ell.tolist()} not retained")
    mus, H = _hmu_arrays(d, parts, f_list)
    kidx = tuple(int(np.ravel_multi_index(tuple(kj + d.K), (2 * d.K + 1,) * d.n)) for kj in k)
    fields = H[(slice(None), li[0]) + kidx].reshape((len(mus),) + g.shape)
    return HmuFamily(k, ell, mus, fields, g)


@dataclass
class ProbeResult:
    left: float
    right: float
    argmax: dict

    @property
    def ratio(self) -> float:
        return self.left / self.right if self.right > 0 else (0.0 if self.left == 0 else math.inf)


def master_estimate_probe(d: DecomposedSymbol, parts: PartitionSet, f_list, s, t,
                          kappa: WindowKappa | None = None) -> ProbeResult:
    """Both sides of the amalgam estimate for the decomposed operator.

    ``left = ||T f||_{W^{s,t}}`` with ``T f`` from :func:`apply_via_decomposition`;
    ``right = sup_{k,l} || || h_mu ||_{l^t_mu} ||_{L^s}``.
    """
    s, t = as_exponent(s, "s"), as_exponent(t, "t")
    g = _common_grid(f_list)
    res = apply_via_decomposition(d, parts, f_list, allow_uncovered=True)
    left = wiener_amalgam_norm(res.output, s, t, kappa=kappa)
    mus, H = _hmu_arrays(d, parts, f_list)
    a = np.abs(H)
    inner = a.max(axis=0) if t == math.inf else np.sum(a ** float(t), axis=0) ** (1 / float(t))
    flat = inner.reshape(-1, g.size)
    from .norms import _lp_of_array
    vals = np.array([_lp_of_array(r, s, g.cell_volume) for r in flat])
    i = int(np.argmax(vals)) if len(vals) else 0
    right = float(vals[i]) if len(vals) else 0.0
    info = {}
    if right > 0:
        idx = np.unravel_index(i, inner.shape[:-1])
        kvec = [np.asarray(np.unravel_index(c, (2 * d.K + 1,) * d.n)) - d.K for c in idx[1:]]
        info = {"ell": d.ells[idx[0]].tolist(), "k": [kv.tolist() for kv in kvec]}
    return ProbeResult(float(left), right, info)


@dataclass
class NikolskijReport:
    max_ratio: float
    ratios: np.ndarray
    r: float


def nikolskij_check(h: LatticeField, kappa: WindowKappa, a, r) -> NikolskijReport:
    """Pointwise ratio ``|kappa(D-a) h(x)| / || (F^{-1} kappa)(y) h(x-y) ||_{L^r_y}``.

    The denominator is the ``r``-th root of the periodic convolution of
    ``|F^{-1} kappa|^r`` with ``|h|^r``. A bounded ``max_ratio``, uniformly in
    ``a``, is the band-limited comparison of ``L^1`` and ``L^r`` norms.
    """
    from .lattice import apply_multiplier, from_spectrum, inverse_transform
    g = h.grid
    r = float(as_exponent(r, "r", allow_inf=False))
    a = np.broadcast_to(np.asarray(a, float), (g.n,))
    xi = g.freq_coords()
    lhs = np.abs(apply_multiplier(h, kappa(xi - a)).values)
    kern = np.abs(inverse_transform(LatticeField(g, kappa(xi), "frequency")).values)
    A = kern ** r
    B = np.abs(h.values) ** r
    # periodic convolution: centred grids, so shift by half a period afterwards
    conv = np.fft.ifftn(np.fft.fftn(np.fft.ifftshift(A)) * np.fft.fftn(B)).real * g.cell_volume
    rhs = np.clip(conv, 0, None) ** (1 / r)
    mask = rhs > 1e-12 * rhs.max()
    ratios = np.where(mask, lhs / np.where(mask, rhs, 1), 0.0)
    return NikolskijReport(float(ratios.max()), ratios, r)


# -- endpoint ratio studies ------------------------------------------------------

def sufficiency_orders(n: int, exps: ExponentTuple) -> tuple:
    """An admissible order vector for the sufficiency statement with finite ``p``.

    Each ``m_j`` lies in ``(-max(n/p_j, n/2), n/2 - max(n/p_j, n/2))`` and the
    sum equals ``min(n/p, n/2) - sum_j max(n/p_j, n/2)``; the sum is split so
    each entry sits at the same relative position in its interval.
    """
    from .norms import recip
    mx = [max(n * float(recip(q)), n / 2) for q in exps.p_list]
    total = min(n * float(recip(exps.p)), n / 2) - sum(mx)
    lo = [-m for m in mx]
    hi = [n / 2 - m for m in mx]
    lam = (total - sum(lo)) / (sum(hi) - sum(lo))
    if not 0 < lam < 1:
        raise ParameterError("no admissible order vector with strict inequalities")
    return tuple(l + lam * (h_ - l) for l, h_ in zip(lo, hi))


def source_norm(f: LatticeField, j: int, exps: ExponentTuple, kappa=None) -> float:
    """Amalgam norm of slot ``j`` (0-based): ``W^{p_j,2}`` or ``W^{p_j,2}_{n(1/2-1/p_j)}``."""
    from .norms import recip
    q = exps.p_list[j]
    n = f.grid.n
    s = 0.0 if (j + 1) in exps.J else n * (0.5 - float(recip(q)))
    return wiener_amalgam_norm(f, q, 2, s=s, kappa=kappa)


def endpoint_target_t(exps: ExponentTuple):
    """Second amalgam index of the target space for the three regimes."""
    from .norms import conjugate
    p = exps.p
    if p == math.inf:
        return 1
    if p <= 2:
        return 2
    return conjugate(p)


@dataclass
class EndpointStats:
    ratios: np.ndarray
    t: object

    @property
    def spread(self) -> float:
        r = self.ratios[self.ratios > 0]
        return float(r.max() / r.min()) if len(r) else math.inf


def endpoint_ratio_study(sigma: SymbolSpec, exps: ExponentTuple, families: Sequence[Sequence[LatticeField]],
                         kappa=None) -> EndpointStats:
    """``||T f||_{W^{p_0,t}} / prod_j ||f_j||_source`` over input families."""
    t = endpoint_target_t(exps)
    p0 = exps.p0
    out = []
    for fam in families:
        Tf = apply_multiplier_fft(sigma, fam).output
        den = float(np.prod([source_norm(f, j, exps, kappa) for j, f in enumerate(fam)]))
        out.append(wiener_amalgam_norm(Tf, p0, t, kappa=kappa) / den if den > 0 else 0.0)
    return EndpointStats(np.asarray(out), t)


def multilinearity_defect(apply, sigma: SymbolSpec, f_list, g_field: LatticeField, slot: int,
                          alpha: complex = 0.7 - 0.3j, beta: complex = -1.1 + 0.4j) -> float:
    """Relative defect of ``T(.., a f + b g, ..) = a T(.., f, ..) + b T(.., g, ..)`` in one slot."""
    mixed = list(f_list)
    mixed[slot] = f_list[slot] * alpha + g_field * beta
    swapped = list(f_list)
    swapped[slot] = g_field
    lhs = apply(sigma, mixed).output
    rhs = apply(sigma, f_list).output * alpha + apply(sigma, swapped).output * beta
    return lhs.l2_distance(rhs)
