import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s00lab.errors import ConvergenceError, ParameterError
from s00lab.lattice import GridSpec
from s00lab.norms import ExponentTuple, lp_norm
from s00lab.sharpness import (SCAN_COLUMNS, WaingerParams, case1_coefficients, case1_random_sign_experiment,
                              case3_dyadic_experiment, case3_grid, critical_exponent, fit_slope,
                              hilbert_sweep, hilbert_type_constant, khintchine_ratio, rademacher_signs,
                              bilinear_closed_form, threshold_scan, wainger_partial_sum, wainger_synthesize)

recips = st.fractions(min_value=F(1, 20), max_value=F(3, 2), max_denominator=30)


def test_critical_exponent_examples():
    assert critical_exponent(1, ExponentTuple(4, (F(3, 2), F(3, 2)))) == F(-13, 12)
    assert critical_exponent(1, ExponentTuple(1, (2, 2))) == F(-1, 2)
    assert critical_exponent(2, ExponentTuple(F(2, 3), (F(4, 3), F(4, 3)))) == -2
    e = ExponentTuple(math.inf, (math.inf, math.inf))
    assert critical_exponent(1, e) == -1


@settings(max_examples=100, deadline=None)
@given(recips, recips, st.integers(1, 3))
def test_bilinear_formula_agrees(a, b, n):
    e = ExponentTuple(1 / (a + b), (1 / a, 1 / b))
    assert critical_exponent(n, e) == bilinear_closed_form(n, e)


def test_fit_slope():
    s, _, r = fit_slope([1, 2, 3, 4], [2, 4, 8, 16])
    assert s == pytest.approx(1) and r < 1e-12
    with pytest.raises(ParameterError):
        fit_slope([1, 2, 3], [1, 2, 3])


def test_hilbert_n2_matches_direct_svd():
    R = 8
    nu = np.arange(-R, R + 1)
    K = (1 + np.abs(nu)[:, None] + np.abs(nu)[None, :]) ** -1.0
    want = np.linalg.svd(K, compute_uv=False)[0]
    assert hilbert_type_constant(2, 1, lattice_radius=R).value == pytest.approx(want, rel=1e-9)


def test_hilbert_sweep_monotone():
    ests = hilbert_sweep([4, 8, 16], 2, 1, r=2, a_list=[-0.25, -0.25])
    vals = [e.value for e in ests]
    assert vals == sorted(vals) and vals[0] > 0


def test_hilbert_trilinear_runs():
    est = hilbert_type_constant(3, 1, lattice_radius=4, max_iter=500)
    assert est.value > 0 and math.isfinite(est.value)


def test_wainger_partial_sum_and_convergence():
    w = WaingerParams(0.5, 2, 0.1, radius=16)
    f = wainger_partial_sum(w, 16)
    # Parseval on the 2 pi torus
    want = math.sqrt(2 * math.pi * 2 * sum(k ** (-2 * w.b) for k in range(1, 17)))
    assert lp_norm(f, 2) == pytest.approx(want, rel=1e-10)
    res = wainger_synthesize(w)
    assert res.certified and res.norms[-1][0] == res.radius
    with pytest.raises(ConvergenceError):
        wainger_synthesize(WaingerParams(0.5, 2, 0.01, radius=16), max_radius=64)
    with pytest.raises(ParameterError):
        WaingerParams(1.5, 2, 0.1)


def test_case1_enumeration_orders_agree():
    sc = case1_coefficients(1, 2, -0.5, [0.5, 0.6], 7, 2)
    assert sc.d.sum() == pytest.approx(sc.direct_total, rel=1e-12)
    assert not sc.containment_failures


def test_case1_slope_and_khintchine():
    e = ExponentTuple(F(3, 2), (3, 3))
    rep = case1_random_sign_experiment(1, 2, e, float(critical_exponent(1, e)), [6, 7, 8, 9, 10],
                                       trials=64, seed=3)
    assert rep.deviation < 0.1
    assert all(0.2 < r < 5 for r in rep.extra["khintchine_ratios"].values())


def test_rademacher_reproducible():
    a = rademacher_signs(5, 7, 4, 10)
    assert np.array_equal(a, rademacher_signs(5, 7, 4, 10))
    assert not np.array_equal(a, rademacher_signs(5, 8, 4, 10))
    assert set(np.unique(a)) <= {-1.0, 1.0}


def test_khintchine_p2_is_one():
    ks = np.arange(1, 9)[:, None]
    d = np.linspace(1, 2, 8)
    assert khintchine_ratio(ks, d, 2, 16, 0, 1) == pytest.approx(1.0, rel=1e-12)


def test_case3_small_grid():
    e = ExponentTuple(4, (F(3, 2), F(3, 2)))
    ks = [2, 3, 4, 5]
    g = case3_grid(2, max(ks), 2**12)
    m = float(critical_exponent(1, e))
    rep = case3_dyadic_experiment(1, 2, e, m, ks, g)
    assert abs(rep.fitted_slope) < 0.05
    assert max(rep.extra["input_norm_spread"].values()) < 0.02


def test_threshold_scan_rows():
    rows = threshold_scan(1, 2, [(4, (F(3, 2), F(3, 2))), (1, (3, F(3, 2))), (1, (1, 1))], [0.0],
                          budget={"A_list": [6, 7, 8, 9], "k_list": [2, 3, 4, 5], "points": 2**12})
    assert all(set(SCAN_COLUMNS) <= set(r) for r in rows)
    assert rows[0]["family"] == "case3_dyadic" and rows[1]["family"] == "case1_random_sign"
    assert rows[2]["error"].startswith("ParameterError")
