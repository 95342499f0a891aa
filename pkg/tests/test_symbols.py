import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s00lab.errors import ParameterError, PreconditionError
from s00lab.lattice import GridSpec, from_spectrum, random_band_limited
from s00lab.symbols import (DecomposedSymbol, PartitionSet, SymbolSpec, bracket_symbol, build_frequency_piece,
                            coefficient_bound_check, constant_symbol, decompose, ibp_crosscheck, nu_box,
                            seminorm_estimate)


def test_symbol_shapes_and_validation():
    s = bracket_symbol(1, [-0.5, -0.5])
    xi = np.zeros((7, 2, 1))
    assert s(np.zeros(1), xi).shape == (7,)
    assert np.allclose(s.of_xi(xi), 1.0)
    assert s.validate()
    with pytest.raises(ParameterError):
        SymbolSpec(1, 2, (1.0,), lambda x, xi: 1.0)
    lying = SymbolSpec(1, 1, 0.0, lambda x, xi: np.cos(x[..., 0]) + 0 * xi[..., 0, 0], x_independent=True)
    with pytest.raises(PreconditionError):
        lying.validate()
    dep = SymbolSpec(1, 1, 0.0, lambda x, xi: np.cos(x[..., 0]) + 0 * xi[..., 0, 0])
    with pytest.raises(PreconditionError):
        dep.of_xi(xi[:, :1])


def test_seminorms():
    c = constant_symbol(1, 2, 2.0)
    assert seminorm_estimate(c, [0], [[0], [0]]) == pytest.approx(2.0)
    assert seminorm_estimate(c, [0], [[1], [0]]) < 1e-6
    b = bracket_symbol(1, [-1.0, 0.0])
    # |d/dxi <xi>^{-1}| = |xi| <xi>^{-3} <= <xi>^{-1}
    assert seminorm_estimate(b, [0], [[1], [0]]) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
def test_partition_of_unity(xs):
    parts = PartitionSet(1)
    s = np.asarray(xs)[:, None]
    assert parts.partition_defect(s) < 1e-12
    assert parts.chi_identity_defect(s) < 1e-8


def test_partition_2d_and_supports():
    parts = PartitionSet(2)
    s = np.random.default_rng(0).uniform(-20, 20, (500, 2))
    assert parts.partition_defect(s) < 1e-12
    assert parts.chi_identity_defect(s) < 1e-8
    t = np.linspace(-4, 4, 801)
    assert np.all(parts.phi_1d(t)[np.abs(t) >= 1] == 0)
    assert np.all(parts.phi_tilde_1d(t)[np.abs(t) <= 1] == 1)
    assert np.all(parts.phi_tilde_1d(t)[np.abs(t) >= 3] == 0)
    with pytest.raises(ParameterError):
        PartitionSet(1, tilde_outer=4.0)


def test_chi_l1_bounded():
    parts = PartitionSet(1)
    vals = [parts.chi_l1_norm([l]) for l in range(0, 33, 4)]
    assert max(vals) < 10
    # large |l| approach the L^1 norm of the transform of theta itself
    assert abs(vals[-1] - vals[-2]) < 0.02 * vals[-1]


def test_nu_box_shape():
    assert nu_box(2, 1, 2).shape == (25, 2, 1)


def test_decompose_reconstruct_bracket():
    sigma = bracket_symbol(1, [-0.5, -0.5])
    parts = PartitionSet(1)
    d = decompose(sigma, parts, 2, L=4, K=8)
    assert d.parseval_defect < 1e-8
    rng = np.random.default_rng(1)
    for v in (0, len(d.nus) // 2, len(d.nus) - 1):
        xi = d.nus[v] + rng.uniform(-1, 1, (50, 2, 1))
        want = sigma.of_xi(xi) * parts.phi(xi - d.nus[v]).prod(-1)
        # dropped coefficients bound the sup error
        assert np.max(np.abs(d.reconstruct(v, xi) - want)) <= d.k_tail[v] + 1e-12


def test_coefficients_decay_like_bracket_power():
    sigma = bracket_symbol(1, [-0.5, -0.5])
    parts = PartitionSet(1)
    d = decompose(sigma, parts, 1, L=2, K=32, quad_points=128)
    a = np.abs(d.P).max(axis=0)
    ks = np.abs(d.kvals.reshape(-1, 2)).max(axis=1).reshape(a.shape)
    shell = [a[ks == r].max() for r in (4, 8, 16, 32)]
    assert all(x > y for x, y in zip(shell, shell[1:]))
    assert np.all(np.abs(d.Q()) <= d.C_full * (1 + 1e-12))
    rep = coefficient_bound_check(decompose(sigma, parts, 3, L=2, K=4))
    assert rep.C > 0 and set(rep.argmax) == {"nu", "k", "ell", "x_index"}


def test_ibp_crosscheck():
    sigma = bracket_symbol(1, [-0.5, -0.5])
    assert ibp_crosscheck(sigma, PartitionSet(1), [[1], [-2]], L=1) < 1e-4


def test_x_dependent_decomposition_reconstructs():
    g = GridSpec.with_scale(1, 32, R=4)
    sigma = SymbolSpec(1, 1, 0.0, lambda x, xi: (2 + np.cos(x[..., 0])) / (3 + np.sin(xi[..., 0, 0])))
    with pytest.raises(ParameterError):
        decompose(sigma, PartitionSet(1), 1)
    parts = PartitionSet(1)
    d = decompose(sigma, parts, 1, K=8, ell_range=8, grid=g)
    xs = g.coords()[:, 0]
    for xi_ in (0.3, -0.6):
        xi = np.array([[[xi_]]])
        v = int(np.flatnonzero(d.nus[:, 0, 0] == 0)[0])
        got = np.array([d.reconstruct(v, xi, x_index=i)[0] for i in range(0, 32, 7)])
        want = sigma(xs[::7, None], xi) * parts.phi(xi).prod(-1)
        assert np.max(np.abs(got - want.ravel())) <= np.max(d.k_tail) + 1e-3


def test_save_load_roundtrip(tmp_path):
    d = decompose(bracket_symbol(1, [-0.5, -0.5]), PartitionSet(1), 1, L=2, K=3)
    d.save(tmp_path / "dec")
    e = DecomposedSymbol.load(tmp_path / "dec")
    assert np.array_equal(e.nus, d.nus)
    assert np.allclose(e.P, d.P, rtol=1e-15, atol=0)
    assert (tmp_path / "dec" / "manifest.json").exists()


def test_frequency_piece_translation_and_leak():
    g = GridSpec(1, 128, 32.0)
    parts = PartitionSet(1)
    f = random_band_limited(g, np.random.default_rng(2), 1.5)
    p0 = build_frequency_piece(f, parts, 0, 0)
    p1 = build_frequency_piece(f, parts, 0, 1)
    # k = 1 is a translate by one unit, i.e. 4 grid cells at this scale
    assert np.allclose(p1.values, np.roll(p0.values, -4), atol=1e-12)
    assert np.max(np.abs(build_frequency_piece(f, parts, 10, 0).values)) < 1e-12
    with pytest.raises(PreconditionError):
        build_frequency_piece(f, parts, 0.5, 0)
