"""Acceptance criteria, one test each, at the stated tolerances and time limits."""
import math
import time
from fractions import Fraction as F

import numpy as np

from s00lab.lattice import GridSpec, random_band_limited
from s00lab.norms import EMBEDDINGS, ExponentTuple, check_embedding
from s00lab.operators import apply_direct, apply_multiplier_fft, apply_via_decomposition, master_estimate_probe
from s00lab.sharpness import (case1_random_sign_experiment, case3_dyadic_experiment, case3_grid,
                              critical_exponent, hilbert_sweep, bilinear_closed_form)
from s00lab.symbols import PartitionSet, SymbolSpec, bracket_symbol, decompose

from conftest import ACCEPTANCE_LINES


def report(num: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_critical_exponent_agreement():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        a = F(int(rng.integers(1, 60)), int(rng.integers(1, 40)))
        b = F(int(rng.integers(1, 60)), int(rng.integers(1, 40)))
        n = int(rng.integers(1, 4))
        e = ExponentTuple(1 / (a + b), (1 / a, 1 / b))
        bad += critical_exponent(n, e) != bilinear_closed_form(n, e)
    dt = time.perf_counter() - t0
    report(1, bad == 0 and dt < 1, f"{bad} mismatches in 200 tuples, {dt:.3f} s")


def _random_factor(rng):
    m, a, b, c = rng.uniform(-1, 1), rng.uniform(0, 0.9), rng.uniform(0.1, 2), rng.uniform(-2, 2)
    return lambda z: (1 + z[..., 0] ** 2) ** (m / 2) * (1 + a * np.sin(b * z[..., 0])) * np.exp(1j * c * z[..., 0])


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2)
    g = GridSpec.with_scale(1, 128, R=4)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        sigma = SymbolSpec.separable(1, [_random_factor(rng), _random_factor(rng)], 1.0)
        fs = [random_band_limited(g, rng, 10.0) for _ in range(2)]
        a = apply_direct(sigma, fs).output
        b = apply_multiplier_fft(sigma, fs).output
        worst = max(worst, b.l2_distance(a))
    dt = time.perf_counter() - t0
    report(2, worst < 1e-10 and dt < 30, f"max relative l2 error {worst:.2e}, {dt:.1f} s")


def test_criterion_3_decomposition_convergence():
    t0 = time.perf_counter()
    g = GridSpec.with_scale(1, 128, R=4)
    rng = np.random.default_rng(3)
    fs = [random_band_limited(g, rng, 2.0) for _ in range(2)]
    sigma = bracket_symbol(1, [-0.5, -0.5])
    parts = PartitionSet(1, M=4)
    ref = apply_direct(sigma, fs).output
    errs, ok = [], True
    for K in (4, 8):
        d = decompose(sigma, parts, 3, L=4, M=4, K=K)
        r = apply_via_decomposition(d, parts, fs)
        err = float(np.max(np.abs(r.output.values - ref.values)))
        bound = r.truncation_report["tail_bound"]
        ok &= err < 10 * bound
        errs.append(err)
    reduction = errs[0] / errs[1]
    dt = time.perf_counter() - t0
    report(3, ok and reduction >= 2 and dt < 300,
           f"sup errors {errs[0]:.2e} -> {errs[1]:.2e} (x{reduction:.1f}), below 10x tail bound: {ok}, {dt:.1f} s")


def test_criterion_4_case3_slopes():
    t0 = time.perf_counter()
    e = ExponentTuple(4, (F(3, 2), F(3, 2)))
    m_cr = float(critical_exponent(1, e))
    assert m_cr == -13 / 12
    ks = list(range(2, 9))
    g = case3_grid(2, max(ks), 2**14)
    s0 = case3_dyadic_experiment(1, 2, e, m_cr, ks, g).fitted_slope
    s1 = case3_dyadic_experiment(1, 2, e, m_cr + 0.25, ks, g).fitted_slope
    dt = time.perf_counter() - t0
    report(4, abs(s0) < 0.05 and abs(s1 - 0.25) < 0.05 and dt < 120,
           f"slope {s0:+.4f} at m_cr, {s1:.4f} at m_cr + 1/4, {dt:.1f} s")


def test_criterion_5_case1_growth():
    t0 = time.perf_counter()
    e = ExponentTuple(F(3, 2), (3, 3))
    rep = case1_random_sign_experiment(1, 2, e, float(critical_exponent(1, e)), [6, 7, 8, 9, 10])
    dt = time.perf_counter() - t0
    report(5, rep.deviation < 0.1 and dt < 60,
           f"slope {rep.fitted_slope:+.4f} vs theory {rep.theory_slope:+.4f}, {dt:.1f} s")


def test_criterion_6_hilbert_constants():
    t0 = time.perf_counter()
    radii = [64, 128, 256]
    plain = [c.value for c in hilbert_sweep(radii, 2, 1)]
    weighted = [c.value for c in hilbert_sweep(radii, 2, 1, r=2, a_list=[-0.25, -0.25])]
    growth = [b / a - 1 for v in (plain, weighted) for a, b in zip(v, v[1:])]
    mono = all(b >= a for v in (plain, weighted) for a, b in zip(v, v[1:]))
    dt = time.perf_counter() - t0
    report(6, mono and max(growth) < 0.05 and dt < 60,
           f"plain {', '.join(f'{v:.4f}' for v in plain)}; weighted {', '.join(f'{v:.4f}' for v in weighted)}; "
           f"max growth per doubling {max(growth):.1%}, {dt:.1f} s")


def test_criterion_7_embeddings():
    t0 = time.perf_counter()
    stats = {eid: check_embedding(eid, trials=100, seed=7) for eid in sorted(EMBEDDINGS)}
    ok = all(s.finite and s.stable for s in stats.values())
    dt = time.perf_counter() - t0
    worst = max(s.max_ratio for s in stats.values())
    report(7, ok and len(stats) == 7 and dt < 300,
           f"{sum(s.finite and s.stable for s in stats.values())}/7 stable, largest ratio {worst:.3g}, {dt:.1f} s")


def test_criterion_8_partition_identities():
    t0 = time.perf_counter()
    parts = PartitionSet(1, M=4)
    s = np.linspace(-40, 40, 200001)[:, None]
    d1, d2 = parts.partition_defect(s), parts.chi_identity_defect(s)
    p2 = PartitionSet(2, M=4)
    s2 = np.random.default_rng(8).uniform(-40, 40, (20000, 2))
    d1, d2 = max(d1, p2.partition_defect(s2)), max(d2, p2.chi_identity_defect(s2))
    l1 = [parts.chi_l1_norm([l]) for l in range(-32, 33)]
    inner = max(l1[16:49])  # |l| <= 16
    bounded = all(math.isfinite(v) for v in l1) and max(l1) <= 1.05 * inner
    dt = time.perf_counter() - t0
    report(8, d1 < 1e-8 and d2 < 1e-8 and bounded and dt < 60,
           f"partition defect {d1:.1e}, chi defect {d2:.1e}, sup L1 {max(l1):.3f} "
           f"(|l|<=16: {inner:.3f}), {dt:.1f} s")


def test_criterion_9_master_estimate_probe():
    t0 = time.perf_counter()
    g = GridSpec.with_scale(1, 128, R=4)
    sigma = bracket_symbol(1, [-0.5, -0.5])
    parts = PartitionSet(1, M=4)
    d = decompose(sigma, parts, 5, L=4, M=4, K=2)
    rng = np.random.default_rng(9)
    ratios = [master_estimate_probe(d, parts, [random_band_limited(g, rng, 4.0) for _ in range(2)], 2, 2).ratio
              for _ in range(50)]
    spread = max(ratios) / min(ratios)
    dt = time.perf_counter() - t0
    report(9, spread < 50 and dt < 300,
           f"ratios in [{min(ratios):.3g}, {max(ratios):.3g}], max/min {spread:.2f}, {dt:.1f} s")
