"""Symbols of class S^m_{0,0} / S^{m-vec}_{0,0} and their unit-cube decomposition.

A symbol ``sigma(x, xi_1, ..., xi_N)`` is cut by a smooth partition of unity
``phi`` on the cubes of Z^{Nn}; each piece ``sigma_nu`` is periodized in
``xi`` with period ``2*pi`` and expanded in a Fourier series,

    sigma_nu(x, xi) = sum_k P_{nu,k}(x) e^{i xi.k} prod_j phi~(xi_j - nu_j),

with ``P_{nu,k} = <k>^{-2L} Q_{nu,k}``. For x-dependent symbols ``Q_{nu,k}``
is further split in frequency, ``Q_{nu,k} = sum_l <l>^{-2M} Q_{nu,k,l}``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bumps import plateau_1d, unit_partition_1d
from .errors import BudgetError, ParameterError, PreconditionError, ResolutionError, StructuralError
from .lattice import GridSpec, LatticeField, forward_transform

# -- symbols ------------------------------------------------------------------


def _bracket(v, axis=-1):
    return np.sqrt(1.0 + np.sum(np.asarray(v, float) ** 2, axis=axis))


@dataclass
class SymbolSpec:
    """A symbol with its order data.

    ``evaluator(x, xi)`` receives ``x`` of shape ``(..., n)`` and ``xi`` of
    shape ``(..., N, n)`` (broadcastable against each other) and returns an
    array of shape ``(...)``. ``order`` is a scalar ``m`` (class S^m) or a
    length-N tuple (class S^{m-vec}). ``factors`` optionally lists
    ``sigma_j(xi_j)`` for a separable multiplier ``prod_j sigma_j``.
    """

    n: int
    N: int
    order: object
    evaluator: Callable
    x_independent: bool = False
    max_deriv_order: int = 4
    factors: tuple | None = None
    name: str = "sigma"

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ParameterError("n and N must be positive")
        if isinstance(self.order, (list, tuple, np.ndarray)):
            self.order = tuple(float(m) for m in self.order)
            if len(self.order) != self.N:
                raise ParameterError("vector order must have N entries")
        else:
            self.order = float(self.order)
        if self.factors is not None and len(self.factors) != self.N:
            raise ParameterError("separable symbol needs N factors")

    @property
    def vector_order(self) -> bool:
        return isinstance(self.order, tuple)

    def __call__(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-2])
        return np.broadcast_to(np.asarray(self.evaluator(x, xi), complex), shape)

    def of_xi(self, xi):
        """Evaluate an x-independent symbol; ``xi`` has shape ``(..., N, n)``."""
        if not self.x_independent:
            raise PreconditionError("symbol depends on x")
        return self(np.zeros(self.n), xi)

    @classmethod
    def multiplier(cls, n, N, func, order, **kw):
        """Wrap ``func(xi)`` (xi of shape ``(..., N, n)``) as an x-independent symbol."""
        return cls(n, N, order, lambda x, xi: func(xi), x_independent=True, **kw)

    @classmethod
    def separable(cls, n, factors, order, **kw):
        """``prod_j factors[j](xi_j)`` with each factor taking shape ``(..., n)``."""
        factors = tuple(factors)

        def ev(x, xi):
            out = 1.0
            for j, fj in enumerate(factors):
                out = out * fj(xi[..., j, :])
            return out

        return cls(n, len(factors), order, ev, x_independent=True, factors=factors, **kw)

    def validate(self, rng=None, samples: int = 64):
        """Check finiteness on random points and x-independence when claimed."""
        rng = rng or np.random.default_rng(0)
        xi = rng.uniform(-10, 10, (samples, self.N, self.n))
        x0 = rng.uniform(-10, 10, (1, self.n))
        v0 = self(x0, xi)
        if not np.all(np.isfinite(v0)):
            raise PreconditionError(f"{self.name}: evaluator returned non-finite values")
        if self.x_independent:
            x1 = rng.uniform(-10, 10, (1, self.n))
            if not np.allclose(self(x1, xi), v0, rtol=1e-13, atol=1e-13):
                raise PreconditionError(f"{self.name}: flagged x-independent but depends on x")
        return True

    def weight(self, xi):
        """``(1 + sum_j |xi_j|)^m`` or ``prod_j (1 + |xi_j|)^{m_j}``."""
        mags = np.sqrt(np.sum(np.asarray(xi, float) ** 2, axis=-1))
        if self.vector_order:
            return np.prod((1.0 + mags) ** np.asarray(self.order), axis=-1)
        return (1.0 + mags.sum(axis=-1)) ** self.order


def constant_symbol(n: int, N: int, c: complex = 1.0) -> SymbolSpec:
    return SymbolSpec.separable(
        n, [lambda z, c=c: np.full(z.shape[:-1], c, complex)] + [lambda z: np.ones(z.shape[:-1])] * (N - 1),
        0.0, name="constant")


def bracket_symbol(n: int, m_list: Sequence[float]) -> SymbolSpec:
    """``prod_j <xi_j>^{m_j}``, of vector order ``m_list``."""
    fs = [lambda z, m=m: _bracket(z) ** m for m in m_list]
    return SymbolSpec.separable(n, fs, tuple(m_list), name="bracket")


# -- seminorms ----------------------------------------------------------------

def _stencil(r: int, h: float):
    """Offsets and weights of the central difference for the r-th derivative."""
    offs = (np.arange(r + 1) - r / 2.0) * h
    w = np.array([(-1) ** (r - i) * math.comb(r, i) for i in range(r + 1)], float) / h**r
    return offs, w


def _fd_derivative(func, z: np.ndarray, orders: Sequence[int], h: float) -> np.ndarray:
    """Mixed central difference of ``func`` at points ``z`` (shape (S, D))."""
    dims = [d for d, r in enumerate(orders) if r > 0]
    if not dims:
        return func(z)
    stencils = [_stencil(orders[d], h) for d in dims]
    acc = np.zeros(z.shape[0], complex)
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        shift = np.zeros(z.shape[1])
        w = 1.0
        for d, s, c in zip(dims, stencils, combo):
            shift[d] = s[0][c]
            w *= s[1][c]
        acc += w * func(z + shift)
    return acc


def default_xi_samples(N: int, n: int, radius: float = 8.0) -> np.ndarray:
    per = 9 if N * n <= 2 else (5 if N * n <= 4 else 3)
    ax = np.linspace(-radius, radius, per)
    pts = np.stack(np.meshgrid(*([ax] * (N * n)), indexing="ij"), -1).reshape(-1, N, n)
    return pts


def seminorm_estimate(sigma: SymbolSpec, alpha, beta_list, x_samples=None, xi_samples=None,
                      h: float = 1e-3, richardson: bool = True) -> float:
    """``sup |d_x^alpha d_xi^beta sigma| / weight`` over sample points.

    Derivatives are central differences with step ``h``; with ``richardson``
    the estimates at ``h`` and ``h/2`` are combined to cancel the O(h^2) term.
    """
    n, N = sigma.n, sigma.N
    alpha = tuple(int(a) for a in np.broadcast_to(alpha, (n,)))
    betas = [tuple(int(b) for b in np.broadcast_to(bj, (n,))) for bj in beta_list]
    if len(betas) != N:
        raise ParameterError("beta_list must have N multi-indices")
    total = sum(alpha) + sum(map(sum, betas))
    if total > sigma.max_deriv_order:
        raise ParameterError(
            f"derivative order {total} exceeds max_deriv_order {sigma.max_deriv_order}")
    if x_samples is None:
        rng = np.random.default_rng(1)
        x_samples = np.vstack([np.zeros((1, n)), rng.uniform(-4, 4, (2, n))])
        if sigma.x_independent:
            x_samples = x_samples[:1]
    xi = default_xi_samples(N, n) if xi_samples is None else np.asarray(xi_samples, float)
    xs = np.asarray(x_samples, float).reshape(-1, n)
    X = np.repeat(xs, len(xi), axis=0)
    XI = np.tile(xi.reshape(len(xi), N * n), (len(xs), 1))
    z = np.hstack([X, XI])
    orders = list(alpha) + [b for bj in betas for b in bj]

    def func(zz):
        return sigma(zz[:, :n], zz[:, n:].reshape(-1, N, n))

    d = _fd_derivative(func, z, orders, h)
    if richardson and total > 0:
        d2 = _fd_derivative(func, z, orders, h / 2)
        d = (4 * d2 - d) / 3
    wt = sigma.weight(XI.reshape(-1, N, n))
    return float(np.max(np.abs(d) / wt))


# -- partitions -----------------------------------------------------------------

@dataclass(frozen=True)
class PartitionSet:
    """The partition ``phi``, the plateau ``phi~`` and the ``chi_l`` family.

    * ``phi = prod_i u(xi_i)`` with ``u`` a smoothed triangle on ``[-1, 1]``;
      its integer translates sum to 1.
    * ``phi~ = prod_i v(xi_i)`` with ``v = 1`` on ``[-tilde_inner, tilde_inner]``
      and ``v = 0`` outside ``[-tilde_outer, tilde_outer]``.
    * ``chi_l(z) = phi(z - l) <l>^{2M} <z>^{-2M}``, so that
      ``sum_l <l>^{-2M} chi_l(z) <z>^{2M} = 1``.
    """

    n: int = 1
    M: int = 4
    tilde_inner: float = 1.0
    tilde_outer: float = 3.0

    def __post_init__(self):
        if self.M < 1:
            raise ParameterError("M must be >= 1")
        if not (1.0 <= self.tilde_inner < self.tilde_outer <= math.pi):
            raise ParameterError("phi~ plateau must satisfy 1 <= inner < outer <= pi")

    def phi_1d(self, t):
        return unit_partition_1d(t)

    def phi(self, xi):
        return np.prod(unit_partition_1d(xi), axis=-1)

    def phi_tilde_1d(self, t):
        return plateau_1d(t, self.tilde_inner, self.tilde_outer)

    def phi_tilde(self, xi):
        return np.prod(self.phi_tilde_1d(xi), axis=-1)

    def theta(self, z):
        return self.phi(z)

    def chi(self, ell, z):
        ell = np.asarray(ell, float)
        z = np.asarray(z, float)
        return self.theta(z - ell) * _bracket(ell) ** (2 * self.M) * _bracket(z) ** (-2 * self.M)

    def partition_defect(self, samples: np.ndarray) -> float:
        """``max |sum_nu phi(xi - nu) - 1|`` over sample points (shape (S, n))."""
        samples = np.atleast_2d(samples)
        base = np.floor(samples)
        tot = np.zeros(len(samples))
        for off in itertools.product(*([(-1, 0, 1, 2)] * self.n)):
            tot += self.phi(samples - (base + np.asarray(off)))
        return float(np.max(np.abs(tot - 1.0)))

    def chi_identity_defect(self, samples: np.ndarray) -> float:
        """``max |sum_l <l>^{-2M} chi_l(z) <z>^{2M} - 1|`` over samples."""
        samples = np.atleast_2d(samples)
        base = np.floor(samples)
        tot = np.zeros(len(samples))
        zb = _bracket(samples) ** (2 * self.M)
        for off in itertools.product(*([(-1, 0, 1, 2)] * self.n)):
            ell = base + np.asarray(off)
            tot += _bracket(ell) ** (-2 * self.M) * self.chi(ell, samples) * zb
        return float(np.max(np.abs(tot - 1.0)))

    def chi_l1_norm(self, ell, grid: GridSpec | None = None) -> float:
        """``|| F^{-1} chi_l ||_{L^1}``, computed from the recentred window.

        Modulation by ``e^{i l.x}`` does not change the modulus, so the
        transform of ``chi_l(. + l)`` is used; it is supported in ``[-1, 1]^n``.
        """
        if grid is None:
            grid = (GridSpec.with_scale(1, 2048, R=32) if self.n == 1
                    else GridSpec.with_scale(self.n, 128 if self.n == 2 else 32, R=8))
        xi = grid.freq_coords()
        vals = self.chi(ell, xi + np.asarray(ell, float))
        g = LatticeField(grid, vals, "frequency")
        from .lattice import inverse_transform
        from .norms import lp_norm
        return lp_norm(inverse_transform(g), 1)


# -- decomposition --------------------------------------------------------------


def _box(radius: int, dim: int) -> np.ndarray:
    ax = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), -1).reshape(-1, dim)


def nu_box(N: int, n: int, radius) -> np.ndarray:
    """All ``nu in (Z^n)^N`` with ``|nu_j|_inf <= radius``; shape (count, N, n)."""
    return _box(int(radius), N * n).reshape(-1, N, n)


@dataclass
class DecomposedSymbol:
    """Fourier coefficients of the pieces ``sigma_nu``.

    Attributes
    ----------
    nus : ndarray (V, N, n)
        Retained cube indices.
    P : ndarray
        ``P[v, k_1, ..., k_{Nn}]`` for x-independent symbols, with an extra
        trailing ``grid.shape`` block for x-dependent ones; k-axes run over
        ``-K..K``.
    Q_ell : ndarray
        ``Q[v, l, k..., (x...)]`` with ``ells[l]`` the retained ``l``.
    """

    n: int
    N: int
    L: int
    M: int
    K: int
    nus: np.ndarray
    ells: np.ndarray
    P: np.ndarray
    Q_ell: np.ndarray
    quad_points: int
    parseval_defect: float
    k_tail: np.ndarray
    ell_tail: float
    C_full: float
    x_independent: bool
    grid: GridSpec | None = None
    order: object = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def kvals(self) -> np.ndarray:
        """Integer k vectors in storage order, shape ((2K+1)^{Nn}, N, n)."""
        return _box(self.K, self.N * self.n).reshape(-1, self.N, self.n)

    @property
    def k_bracket(self) -> np.ndarray:
        shape = (2 * self.K + 1,) * (self.N * self.n)
        return _bracket(self.kvals.reshape(-1, self.N * self.n)).reshape(shape)

    def Q(self) -> np.ndarray:
        """``Q_{nu,k} = <k>^{2L} P_{nu,k}``."""
        kb = self.k_bracket ** (2 * self.L)
        extra = self.P.ndim - 1 - kb.ndim
        return self.P * kb.reshape((1,) + kb.shape + (1,) * extra)

    def effective_coefficients(self) -> np.ndarray:
        """``sum_l <k>^{-2L} <l>^{-2M} Q_{nu,k,l}``, i.e. P restricted to retained l."""
        lb = _bracket(self.ells) ** (-2 * self.M)
        kb = self.k_bracket ** (-2 * self.L)
        extra = self.Q_ell.ndim - 2 - kb.ndim
        s = np.tensordot(lb, self.Q_ell, axes=([0], [1]))
        return s * kb.reshape((1,) + kb.shape + (1,) * extra)

    def reconstruct(self, v: int, xi: np.ndarray, phi_tilde=None, x_index=None) -> np.ndarray:
        """Evaluate ``sum_k P_{nu,k} e^{i xi.k} prod phi~(xi_j - nu_j)`` at ``xi`` (S, N, n)."""
        xi = np.asarray(xi, float)
        kv = self.kvals.reshape(-1, self.N * self.n)
        coef = self.P[v].reshape(len(kv), -1)
        if not self.x_independent:
            coef = coef[:, x_index] if x_index is not None else coef[:, 0]
        else:
            coef = coef[:, 0]
        phase = np.exp(1j * xi.reshape(-1, self.N * self.n) @ kv.T)
        out = phase @ coef
        if phi_tilde is not None:
            out = out * np.prod([phi_tilde(xi[:, j, :] - self.nus[v, j]) for j in range(self.N)], axis=0)
        return out

    # -- serialization ----------------------------------------------------
    def save(self, directory) -> None:
        """Write CSV shards keyed by (nu, k, l) plus ``manifest.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        kv = self.kvals.reshape(-1, self.N * self.n)
        nk = len(kv)
        manifest = {
            "n": self.n, "N": self.N, "L": self.L, "M": self.M, "K": self.K,
            "x_independent": self.x_independent, "quad_points": self.quad_points,
            "parseval_defect": self.parseval_defect, "ell_tail": self.ell_tail,
            "C_full": self.C_full, "order": self.order,
            "k_tail": [float(t) for t in self.k_tail],
            "ells": self.ells.tolist(), "shards": [],
            "grid": None if self.grid is None else [self.grid.n, self.grid.points_per_axis, self.grid.period],
        }
        for v, nu in enumerate(self.nus):
            tag = "_".join(str(int(c)) for c in nu.reshape(-1))
            name = f"nu_{tag}.csv"
            Qv = self.Q_ell[v].reshape(len(self.ells), nk, -1)
            rows = ["ell,k,x_index,re,im"]
            for li in range(len(self.ells)):
                ltag = " ".join(str(int(c)) for c in self.ells[li])
                for ki in range(nk):
                    ktag = " ".join(str(int(c)) for c in kv[ki])
                    for xi_, z in enumerate(Qv[li, ki].tolist()):
                        rows.append(f"{ltag},{ktag},{xi_},{z.real!r},{z.imag!r}")
            (d / name).write_text("\n".join(rows) + "\n")
            manifest["shards"].append({"nu": nu.tolist(), "file": name})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "DecomposedSymbol":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        n, N, K = man["n"], man["N"], man["K"]
        ells = np.asarray(man["ells"], int).reshape(-1, n)
        grid = None if man["grid"] is None else GridSpec(man["grid"][0], man["grid"][1], man["grid"][2])
        kshape = (2 * K + 1,) * (N * n)
        nk = int(np.prod(kshape))
        xshape = () if man["x_independent"] else grid.shape
        nx = int(np.prod(xshape)) if xshape else 1
        nus, Qs = [], []
        for sh in man["shards"]:
            nus.append(sh["nu"])
            data = np.loadtxt(d / sh["file"], delimiter=",", skiprows=1, usecols=(3, 4), ndmin=2)
            Qs.append((data[:, 0] + 1j * data[:, 1]).reshape((len(ells),) + kshape + xshape))
            if data.shape[0] != len(ells) * nk * nx:
                raise StructuralError(f"shard {sh['file']} has wrong length")
        Q_ell = np.stack(Qs)
        order = man["order"]
        obj = cls(n, N, man["L"], man["M"], K, np.asarray(nus, int).reshape(-1, N, n), ells,
                  np.zeros(1), Q_ell, man["quad_points"], man["parseval_defect"],
                  np.asarray(man["k_tail"]), man["ell_tail"], man["C_full"],
                  man["x_independent"], grid, tuple(order) if isinstance(order, list) else order)
        obj.P = obj.effective_coefficients()
        return obj


def _piece_values(sigma: SymbolSpec, parts: PartitionSet, nu: np.ndarray, Qpts: int,
                  xs: np.ndarray | None) -> np.ndarray:
    """Samples of ``sigma_nu`` on the trapezoid grid of ``nu + [-pi, pi]^{Nn}``.

    Returns shape ``(Qpts,)*(N n)`` or ``(nx,) + (Qpts,)*(N n)``.
    """
    N, n = sigma.N, sigma.n
    theta = -math.pi + 2 * math.pi * np.arange(Qpts) / Qpts
    grids = np.meshgrid(*([theta] * (N * n)), indexing="ij")
    eta = np.stack(grids, -1).reshape((Qpts,) * (N * n) + (N, n)) + nu
    cut = np.ones(eta.shape[:-2])
    for j in range(N):
        cut = cut * parts.phi(eta[..., j, :] - nu[j])
    if xs is None:
        return sigma(np.zeros(n), eta) * cut
    out = np.empty((len(xs),) + cut.shape, complex)
    for i, x in enumerate(xs):
        out[i] = sigma(x, eta) * cut
    return out


def _coefficients(vals: np.ndarray, nu: np.ndarray, D: int) -> np.ndarray:
    """All Fourier coefficients ``P_k``, k-axes in fft order (last D axes of vals)."""
    Qpts = vals.shape[-1]
    axes = tuple(range(vals.ndim - D, vals.ndim))
    c = np.fft.fftn(vals, axes=axes) / Qpts**D
    k1 = np.fft.fftfreq(Qpts, 1.0 / Qpts)
    kk = np.stack(np.meshgrid(*([k1] * D), indexing="ij"), -1)
    nuf = nu.reshape(-1).astype(float)
    # nodes are nu + (-pi + 2 pi q / Q): phase e^{-i k.nu} (-1)^{sum k}
    phase = np.exp(-1j * (kk @ nuf)) * np.where(kk.sum(-1) % 2 == 0, 1.0, -1.0)
    return c * phase


def _parseval_defect(coef: np.ndarray, D: int) -> float:
    Qpts = coef.shape[-1]
    k1 = np.abs(np.fft.fftfreq(Qpts, 1.0 / Qpts))
    outer = np.zeros((Qpts,) * D, bool)
    for a in range(D):
        shape = [1] * D
        shape[a] = Qpts
        outer |= (k1 > Qpts // 4).reshape(shape)
    e = np.abs(coef) ** 2
    tot = e.sum()
    return float(e[..., outer].sum() / tot) if tot > 0 else 0.0


def _select_box(coef: np.ndarray, K: int, D: int) -> np.ndarray:
    Qpts = coef.shape[-1]
    idx = np.arange(-K, K + 1) % Qpts
    out = coef
    for a in range(D):
        out = np.take(out, idx, axis=coef.ndim - D + a)
    return out


def decompose(sigma: SymbolSpec, parts: PartitionSet, nu_box_spec, L: int = 4, M: int | None = None,
              K: int = 8, ell_range: int = 8, grid: GridSpec | None = None,
              quad_points: int | None = None, parseval_target: float = 1e-8,
              resolution_tol: float = 1e-6, max_quad_points: int | None = None,
              budget: int = 2**26) -> DecomposedSymbol:
    """Unit-cube Fourier decomposition of ``sigma``.

    Parameters
    ----------
    nu_box_spec : int or array (V, N, n)
        Either a radius (``|nu_j|_inf <= radius``) or explicit cube indices.
    L, M : int
        Integration-by-parts orders for ``k`` and ``l``; ``M`` defaults to
        ``parts.M``.
    K, ell_range : int
        Retained ``|k_i| <= K`` and ``|l_i| <= ell_range``.
    grid : GridSpec
        Required for x-dependent symbols: ``Q_{nu,k}`` is sampled on it.
    quad_points : int, optional
        Trapezoid points per axis; by default doubled from 64 until the
        share of coefficient energy in the outer half of the computed
        spectrum ("Parseval defect") drops below ``parseval_target``.
    """
    N, n = sigma.N, sigma.n
    if parts.n != n:
        raise ParameterError("partition dimension differs from symbol dimension")
    M = parts.M if M is None else M
    if L < 1 or M < 1:
        raise ParameterError("L and M must be >= 1")
    if not sigma.x_independent and grid is None:
        raise ParameterError("x-dependent symbols need a grid for the coefficients")
    nus = nu_box(N, n, nu_box_spec) if np.isscalar(nu_box_spec) else np.asarray(nu_box_spec, int).reshape(-1, N, n)
    D = N * n
    xs = None if sigma.x_independent else grid.coords().reshape(-1, n)
    nx = 1 if xs is None else len(xs)
    if max_quad_points is None:
        max_quad_points = int(2 ** math.floor(math.log2(max(16, budget // nx) ** (1.0 / D))))
    Qpts = quad_points or min(64, max_quad_points)
    if 2 * K + 1 > Qpts:
        raise ParameterError(f"k-range {K} needs at least {2 * K + 1} quadrature points per axis")

    while True:
        if nx * Qpts**D > budget:
            raise BudgetError(f"decomposition needs {nx * Qpts ** D} samples per cube; budget {budget}")
        coefs, defect = [], 0.0
        for nu in nus:
            c = _coefficients(_piece_values(sigma, parts, nu, Qpts, xs), nu, D)
            defect = max(defect, _parseval_defect(c, D))
            coefs.append(c)
        if quad_points is not None or defect < parseval_target or 2 * Qpts > max_quad_points:
            break
        Qpts *= 2
    if defect > resolution_tol:
        raise ResolutionError(
            f"quadrature with {Qpts} points per axis leaves Parseval defect {defect:.2e} "
            f"> {resolution_tol:g}; increase quad_points or the budget")

    k1 = np.fft.fftfreq(Qpts, 1.0 / Qpts)
    kk_full = np.stack(np.meshgrid(*([k1] * D), indexing="ij"), -1)
    brk_full = _bracket(kk_full) ** (2 * L)
    P_list, k_tail, C_full = [], [], 0.0
    for c in coefs:
        mag = np.abs(c) if xs is None else np.abs(c).max(axis=0)
        C_full = max(C_full, float(np.max(mag * brk_full)))
        box = _select_box(c, K, D)
        kept = np.abs(box) if xs is None else np.abs(box).max(axis=0)
        k_tail.append(float(mag.sum() - kept.sum()))
        P_list.append(box if xs is None else np.moveaxis(box, 0, -1).reshape(box.shape[1:] + grid.shape))
    P = np.stack(P_list)

    kshape = (2 * K + 1,) * D
    kb = _bracket(_box(K, D)).reshape(kshape) ** (2 * L)
    if xs is None:
        Qk = P * kb[None]
        ells = np.zeros((1, n), int)
        Q_ell = Qk[:, None]
        ell_tail = 0.0
    else:
        Qk = P * kb.reshape((1,) + kshape + (1,) * n)
        ells = _box(ell_range, n)
        zeta = grid.freq_coords()
        axes = tuple(range(Qk.ndim - n, Qk.ndim))
        spec = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(Qk, axes), axes=axes), axes)
        Q_ell = np.empty((len(nus), len(ells)) + kshape + grid.shape, complex)
        covered = np.zeros(grid.shape)
        for li, ell in enumerate(ells):
            w = parts.theta(zeta - ell) * _bracket(ell) ** (2 * M)
            covered += parts.theta(zeta - ell)
            s = np.fft.ifftshift(spec * w, axes)
            Q_ell[:, li] = np.fft.fftshift(np.fft.ifftn(s, axes=axes), axes)
        e = np.abs(spec) ** 2
        tot = e.sum()
        ell_tail = float((e * (1 - covered)).sum() / tot) if tot > 0 else 0.0
    d = DecomposedSymbol(n, N, L, M, K, nus, ells, P, Q_ell, Qpts, defect, np.asarray(k_tail),
                         ell_tail, C_full, sigma.x_independent, grid, sigma.order,
                         {"symbol": sigma.name})
    if xs is not None:
        d.P = d.effective_coefficients()
    return d


def ibp_crosscheck(sigma: SymbolSpec, parts: PartitionSet, nu, L: int = 1, Qpts: int = 256,
                   K_check: int = 6) -> float:
    """Compare ``<k>^{2L} P_{nu,k}`` with coefficients of ``(I - Lap)^L sigma_nu``.

    The Laplacian is a fourth-order periodic finite difference on the
    trapezoid grid, so this is independent of the spectral multiplication.
    Returns ``max |Q_fd - Q_spec| / max |Q_spec|`` over ``|k_i| <= K_check``.
    Only x-independent symbols are supported.
    """
    if not sigma.x_independent:
        raise PreconditionError("crosscheck implemented for x-independent symbols")
    nu = np.asarray(nu, int).reshape(sigma.N, sigma.n)
    D = sigma.N * sigma.n
    vals = _piece_values(sigma, parts, nu, Qpts, None)
    h = 2 * math.pi / Qpts
    u = vals
    for _ in range(L):
        lap = np.zeros_like(u)
        for a in range(D):
            lap += (-np.roll(u, 2, a) + 16 * np.roll(u, 1, a) - 30 * u
                    + 16 * np.roll(u, -1, a) - np.roll(u, -2, a)) / (12 * h * h)
        u = u - lap
    q_fd = _select_box(_coefficients(u, nu, D), K_check, D)
    p = _select_box(_coefficients(vals, nu, D), K_check, D)
    q_sp = p * _bracket(_box(K_check, D)).reshape(q_fd.shape) ** (2 * L)
    return float(np.max(np.abs(q_fd - q_sp)) / np.max(np.abs(q_sp)))


@dataclass
class BoundReport:
    C: float
    argmax: dict
    per_nu: np.ndarray


def coefficient_bound_check(d: DecomposedSymbol, order=None) -> BoundReport:
    """Smallest ``C`` with ``|Q_{nu,k,l}(x)| <= C * weight(nu)`` on the retained indices.

    ``weight`` is ``prod_j <nu_j>^{m_j}`` for a vector order and
    ``(1 + sum_j |nu_j|)^m`` for a scalar order.
    """
    order = d.order if order is None else order
    mags = np.sqrt(np.sum(d.nus.astype(float) ** 2, axis=-1))  # (V, N)
    if isinstance(order, (tuple, list, np.ndarray)):
        w = np.prod(np.sqrt(1 + mags**2) ** np.asarray(order, float), axis=-1)
    else:
        w = (1 + mags.sum(axis=-1)) ** float(order)
    A = np.abs(d.Q_ell).reshape(len(d.nus), -1)
    per = A.max(axis=1) / w
    v = int(np.argmax(per))
    if per[v] == 0:
        return BoundReport(0.0, {}, per)
    flat = int(np.argmax(A[v]))
    idx = np.unravel_index(flat, d.Q_ell.shape[1:])
    li = idx[0]
    kshape = (2 * d.K + 1,) * (d.N * d.n)
    kidx = idx[1:1 + len(kshape)]
    k = (np.asarray(kidx) - d.K).reshape(d.N, d.n)
    arg = {"nu": d.nus[v].tolist(), "k": k.tolist(), "ell": d.ells[li].tolist(),
           "x_index": [int(i) for i in idx[1 + len(kshape):]]}
    return BoundReport(float(per[v]), arg, per)


# -- frequency pieces ---------------------------------------------------------------

def _int_vector(v, n: int, what: str) -> np.ndarray:
    a = np.broadcast_to(np.asarray(v, float), (n,))
    r = np.rint(a)
    if np.any(np.abs(a - r) > 1e-12):
        raise PreconditionError(f"{what} {tuple(a)} is not an integer vector")
    return r


def build_frequency_piece(f: LatticeField, parts: PartitionSet, nu, k) -> LatticeField:
    """``phi~(D - nu) f(. + k)`` for integer vectors ``nu`` and ``k``.

    The translate is applied as the multiplier ``e^{i xi.k}``, which is exact
    for the periodic field and needs no grid alignment.
    """
    g = f.grid
    nu = _int_vector(nu, g.n, "nu")
    k = _int_vector(k, g.n, "k")
    fh = forward_transform(f).values
    xi = g.freq_coords()
    spec = fh * parts.phi_tilde(xi - nu) * np.exp(1j * (xi @ k))
    outside = np.any(np.abs(xi - nu) > math.pi + 1, axis=-1)
    tot = np.sum(np.abs(fh) ** 2)
    if tot > 0 and np.sum(np.abs(spec[outside]) ** 2) > 1e-12 * tot:
        raise StructuralError("frequency piece leaks outside nu + [-pi-1, pi+1]^n")
    from .lattice import from_spectrum
    return from_spectrum(g, spec)


def build_frequency_pieces(f_list: Sequence[LatticeField], parts: PartitionSet, nu_list, k_list):
    """Pieces ``F^j_{nu_j,k_j}`` for every slot ``j``."""
    if not (len(f_list) == len(nu_list) == len(k_list)):
        raise StructuralError("f_list, nu_list and k_list must have equal length")
    return [build_frequency_piece(f, parts, nu, k) for f, nu, k in zip(f_list, nu_list, k_list)]


class PieceCache:
    """All translates ``F^j_{nu_j, k_j}`` for fixed ``j, nu_j`` and ``|k_j|_inf <= K``.

    Pieces are computed lazily with one batched inverse FFT per ``(j, nu_j)``
    and kept in memory; ``max_bytes`` guards the total.
    """

    def __init__(self, f_list, parts: PartitionSet, K: int, max_bytes: int = 2**31):
        self.f_list = list(f_list)
        self.parts = parts
        self.K = K
        self.grid = self.f_list[0].grid
        for f in self.f_list:
            if f.grid != self.grid:
                raise StructuralError("all inputs must share one grid")
        self._spec = {}
        self._cache = {}
        self.max_bytes = max_bytes
        self._bytes = 0
        g = self.grid
        self._xi = g.freq_coords()
        ks = _box(K, g.n)
        self.kvecs = ks
        self._phase = np.exp(1j * np.tensordot(ks.astype(float), self._xi, axes=([1], [-1])))

    def spectrum(self, j):
        if j not in self._spec:
            self._spec[j] = forward_transform(self.f_list[j]).values
        return self._spec[j]

    def get(self, j: int, nu) -> np.ndarray:
        """Array of shape ``((2K+1)^n,) + grid.shape``."""
        key = (j, tuple(int(c) for c in np.asarray(nu).reshape(-1)))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        g = self.grid
        base = self.spectrum(j) * self.parts.phi_tilde(self._xi - np.asarray(key[1], float))
        spec = self._phase * base[None]
        axes = tuple(range(1, g.n + 1))
        vals = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(spec, axes), axes=axes), axes)
        vals *= g.size / g.period**g.n
        self._bytes += vals.nbytes
        if self._bytes > self.max_bytes:
            raise BudgetError(f"frequency-piece cache exceeds {self.max_bytes} bytes")
        self._cache[key] = vals
        return vals
