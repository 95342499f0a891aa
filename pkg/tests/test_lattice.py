import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s00lab.bumps import plateau_1d, smooth_step, unit_partition_1d
from s00lab.errors import ParameterError, PreconditionError, StructuralError
from s00lab.lattice import (GridSpec, LatticeField, forward_transform, from_spectrum, inverse_transform,
                            load_field, modulate_translate, random_band_limited, save_field)


def test_grid_validation():
    with pytest.raises(ParameterError):
        GridSpec(4, 8, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(1, 12, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(1, 8, -1.0)
    with pytest.raises(ParameterError):
        GridSpec(3, 512, 1.0)


def test_constant_spectrum_is_period_at_origin():
    g = GridSpec(1, 64, 10.0)
    h = forward_transform(LatticeField(g, np.ones(64))).values
    assert h[32] == pytest.approx(10.0)
    assert np.max(np.abs(np.delete(h, 32))) < 1e-12


def test_exponential_spectrum():
    g = GridSpec.with_scale(1, 64, R=2)
    k = 3 * g.dxi
    f = LatticeField.from_function(g, lambda x: np.exp(1j * k * x[..., 0]))
    h = forward_transform(f).values
    assert h[32 + 3] == pytest.approx(g.period)
    assert np.sum(np.abs(h) > 1e-9) == 1


def test_gaussian_transform_closed_form():
    g = GridSpec(1, 4096, 40 * math.pi)
    f = LatticeField.from_function(g, lambda x: np.exp(-x[..., 0] ** 2 / 2))
    xi = g.freq_axis()
    err = np.max(np.abs(forward_transform(f).values - np.sqrt(2 * np.pi) * np.exp(-xi**2 / 2)))
    assert err < 1e-8


def test_delta_spectrum_inverse():
    g = GridSpec.with_scale(1, 32, R=3)
    spec = np.zeros(32)
    spec[16 + 5] = 1.0
    f = from_spectrum(g, spec)
    x = g.axis()
    assert np.allclose(f.values, np.exp(1j * 5 * g.dxi * x) / g.period, atol=1e-15)


def test_roundtrip_and_plancherel(rng):
    for n, P in ((1, 64), (2, 16), (3, 8)):
        g = GridSpec.with_scale(n, P, R=1.5)
        for _ in range(100 if n == 1 else 10):
            v = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
            f = LatticeField(g, v)
            back = inverse_transform(forward_transform(f))
            assert back.l2_distance(f) < 1e-12
            lhs = np.sqrt(np.sum(np.abs(v) ** 2) * g.cell_volume)
            h = forward_transform(f).values
            rhs = (2 * np.pi) ** (-n / 2) * np.sqrt(np.sum(np.abs(h) ** 2) * g.dual_cell_volume)
            assert abs(lhs - rhs) < 1e-10 * lhs


def test_domain_tags_enforced(grid1):
    f = LatticeField.zeros(grid1)
    with pytest.raises(PreconditionError):
        inverse_transform(f)
    with pytest.raises(PreconditionError):
        forward_transform(forward_transform(f))
    with pytest.raises(ParameterError):
        LatticeField(grid1, np.zeros(128), "time")


def test_size_mismatch(grid1):
    with pytest.raises(StructuralError):
        LatticeField(grid1, np.zeros(100))


def test_values_are_frozen(grid1):
    f = LatticeField.zeros(grid1)
    with pytest.raises(ValueError):
        f.values[0] = 1


def test_modulate_translate_identity_and_roll(grid1, rng):
    f = random_band_limited(grid1, rng, 4.0)
    assert modulate_translate(f).l2_distance(f) == 0
    g = modulate_translate(f, shift=grid1.dx)
    assert np.array_equal(g.values, np.roll(f.values, -1))


def test_modulate_translate_matches_spectral_path(rng):
    g = GridSpec.with_scale(2, 32, R=2)
    f = random_band_limited(g, rng, 3.0)
    shift = np.array([3 * g.dx, -2 * g.dx])
    w = np.array([2 * g.dxi, g.dxi])
    direct = modulate_translate(f, shift, w)
    # forward -> phase -> inverse, then modulate in space
    h = forward_transform(f).values * np.exp(1j * (g.freq_coords() @ shift))
    other = from_spectrum(g, h).values * np.exp(1j * (g.coords() @ w))
    assert np.max(np.abs(direct.values - other)) < 1e-12 * np.max(np.abs(other))


def test_modulate_translate_rejects_off_grid(grid1):
    with pytest.raises(PreconditionError):
        modulate_translate(LatticeField.zeros(grid1), shift=0.3 * grid1.dx)


def test_save_load_roundtrip(tmp_path, rng):
    g = GridSpec.with_scale(2, 8, R=1.3)
    f = LatticeField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    save_field(f, tmp_path / "f.csv")
    h = load_field(tmp_path / "f.csv")
    assert h.grid == g and np.array_equal(h.values, f.values)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5))
def test_partition_of_unity_telescopes(t):
    s = sum(unit_partition_1d(t - k) for k in range(-8, 9))
    assert abs(s - 1.0) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1))
def test_smooth_step_symmetry(u):
    assert abs(smooth_step(u, 0, 1) + smooth_step(1 - u, 0, 1) - 1) < 1e-14


def test_plateau_support():
    t = np.linspace(-4, 4, 801)
    v = plateau_1d(t, 1.0, 3.0)
    assert np.all(v[np.abs(t) <= 1] == 1) and np.all(v[np.abs(t) >= 3] == 0)
