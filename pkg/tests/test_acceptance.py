"""Acceptance criteria AC1 to AC12.

Each test prints one ``ACn PASS|FAIL`` line with the measured quantity and
its wall time; the lines are repeated in the pytest terminal summary.
Timings exclude the one-off JIT compilation done by the ``warm`` fixture.
"""

import math
import time

import numpy as np
import pytest

from zonewave.coeffs import lambda_shape, make_example, mu_integral, sigma_integral
from zonewave.diag import diagonalize, intermediate_factorization, reconstruct_hyp
from zonewave.mat2 import norm
from zonewave.propagator import SolveConfig, evolve, picard_dissipative, solve_E, solve_E_free
from zonewave.stabilize import calculus_properties, check_zero_mean, estimate_omega_inf, stabilization_functional
from zonewave.verify import default_xi_grid, mode_limit, theorem1_decay, theorem2_sharpness, two_sided_band
from zonewave.zones import boundaries


@pytest.fixture(scope="module")
def warm(ex31, ex35):
    for m in (ex31, ex35, ex31.without_sigma()):
        solve_E(m, 1.0, 0.0, 1.0)
    solve_E_free(None, 1.0, 0.0, 1.0)


def _weight(xi):
    return np.diag([xi / math.sqrt(1.0 + xi * xi), 1.0])


def test_ac1_free_unitarity(warm, acceptance):
    t0 = time.perf_counter()
    cfg = SolveConfig(rtol=1e-12, atol=1e-14)
    dev = max(
        abs(norm(solve_E_free(None, xi, 0.0, t, cfg)) - 1.0) for xi in (0.1, 1.0, 10.0) for t in (1.0, 10.0, 1e2, 1e3)
    )
    el = time.perf_counter() - t0
    acceptance("AC1", dev <= 1e-9, f"max | ||E_0|| - 1 | = {dev:.2e} (tol 1e-9)", el, 1)
    assert dev <= 1e-9 and el < 1


def test_ac2_liouville(ex31, warm, acceptance):
    t0 = time.perf_counter()
    t = np.logspace(-1, 3, 10)
    two_int_b = mu_integral(ex31, t) + sigma_integral(ex31, t)
    worst = 0.0
    for xi in np.logspace(-2, 1, 10):
        E = evolve(ex31, xi, t)
        det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        worst = max(worst, float(np.max(np.abs(det * np.exp(two_int_b) - 1.0))))
    el = time.perf_counter() - t0
    acceptance("AC2", worst <= 1e-6, f"max |det E exp(2 int b) - 1| = {worst:.2e} (tol 1e-6)", el, 30)
    assert worst <= 1e-6 and el < 30


def _dissipative_constant(model, n_xi, n_t):
    vals = []
    for xi in np.logspace(-4, math.log10(0.5), n_xi):
        t1 = boundaries(model, xi).t1
        t = t1 * np.linspace(0.0, 1.0, n_t + 1)[1:]
        E = evolve(model, xi, t)
        vals.append(lambda_shape(model, t) ** 2 * norm(E @ _weight(xi)))
    v = np.concatenate(vals)
    return v.size, float(v.max())


def test_ac3_dissipative_bound(ex31, warm, acceptance):
    assert ex31.zone_constant == 2.0 and ex31.params["mu"] == 0.4 and ex31.params["alpha"] == 0.5
    t0 = time.perf_counter()
    n1, c1 = _dissipative_constant(ex31, 20, 10)
    n2, c2 = _dissipative_constant(ex31, 40, 20)
    el = time.perf_counter() - t0
    ratio = max(c1, c2) / min(c1, c2)
    ok = n1 == 200 and ratio <= 2.0
    acceptance("AC3", ok, f"C = {c1:.4f} ({n1} pts), {c2:.4f} ({n2} pts), ratio {ratio:.3f} (tol 2)", el, 60)
    assert ok and el < 60


def test_ac4_picard(ex31, warm, acceptance):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    xis = 10.0 ** rng.uniform(-4, math.log10(0.3), 50)
    for xi in xis:
        t = float(rng.uniform(0.05, 1.0) * boundaries(ex31, xi).t1)
        E = picard_dissipative(ex31, xi, t, iterations=12).E
        ref = solve_E(ex31, xi, 0.0, t)
        worst = max(worst, norm(E - ref) / norm(ref))
    el = time.perf_counter() - t0
    acceptance("AC4", worst <= 1e-6, f"max rel. diff Picard vs integrator = {worst:.2e} over 50 pts (tol 1e-6)", el, 60)
    assert worst <= 1e-6 and el < 60


def test_ac5_hyperbolic_representation(ex31, warm, acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for xi in (0.5, 1.0, 5.0):
        s = max(boundaries(ex31, xi).t2, 1.0)
        t = np.array([10 * s, 100 * s])
        E_rec = reconstruct_hyp(ex31, xi, s, t)
        ref = evolve(ex31, xi, t, s)
        worst = max(worst, max(norm(a - b) / norm(b) for a, b in zip(E_rec, ref)))
    el = time.perf_counter() - t0
    acceptance("AC5", worst <= 1e-6, f"max rel. diff reconstruction vs integrator = {worst:.2e} (tol 1e-6)", el, 120)
    assert worst <= 1e-6 and el < 120


def test_ac6_intermediate_factorization(ex31, warm, acceptance):
    model = ex31.with_zone_constant(1.0)
    xi = 0.004
    zb = boundaries(model, xi)
    t0 = time.perf_counter()
    worst = 0.0
    for t in np.geomspace(zb.t1, zb.t2, 21)[1:]:
        f = intermediate_factorization(model, xi, zb.t1, float(t))
        ref = solve_E(model, xi, zb.t1, float(t))
        worst = max(worst, norm(f.product - ref) / norm(ref))
    el = time.perf_counter() - t0
    detail = f"max rel. diff on 20 pts of [{zb.t1:.0f}, {zb.t2:.0f}] = {worst:.2e} (tol 1e-5)"
    acceptance("AC6", worst <= 1e-5, detail, el, 120)
    assert worst <= 1e-5 and el < 120


def test_ac7_two_sided_bands(ex31, ex35, warm, acceptance):
    t0 = time.perf_counter()
    ratios = {}
    for name, model in (("ex31", ex31), ("ex35", ex35)):
        xi = 0.004
        t1 = boundaries(model, xi).t1
        ratios[f"{name}/int"] = two_sided_band(model, xi, np.geomspace(t1, 100 * t1, 41), "intermediate")
        t2 = boundaries(model, 1.0).t2
        ratios[f"{name}/hyp"] = two_sided_band(model, 1.0, np.geomspace(t2, 100 * t2, 41), "hyperbolic")
    el = time.perf_counter() - t0
    ok = all(r.passed for r in ratios.values())
    detail = ", ".join(f"{k} {r.band_ratios['E']['ratio']:.2f}" for k, r in ratios.items())
    acceptance("AC7", ok, f"band ratios {detail} (tol 10)", el, 180)
    assert ok and el < 180


def test_ac8_decay_rate(ex31, warm, acceptance):
    t0 = time.perf_counter()
    t = np.logspace(2, 4, 41)
    xi = default_xi_grid(ex31, 1e4, 60)
    rep = theorem1_decay(ex31, xi, t)
    rep_off = theorem1_decay(ex31.without_sigma(), xi, t)
    el = time.perf_counter() - t0
    k = rep.fitted_slopes["log_G_vs_log_t"]["slope"]
    k_off = rep_off.fitted_slopes["log_G_vs_log_t"]["slope"]
    ok = abs(k + 0.2) <= 0.02 and abs(k - k_off) <= 0.02
    detail = f"slope {k:.4f}, sigma off {k_off:.4f} (target -0.2 +- 0.02, agreement 0.02)"
    acceptance("AC8", ok, detail, el, 600)
    assert ok and el < 600


def test_ac9_sharpness(ex31, warm, acceptance):
    t0 = time.perf_counter()
    rep = theorem2_sharpness(ex31, 1.0, [1.0, 0.0], np.logspace(1, 4, 61))
    el = time.perf_counter() - t0
    band = rep.band_ratios["lambda_times_norm"]
    ok = band["ratio"] <= 10 and band["min"] > 0 and rep.passed
    acceptance("AC9", ok, f"band ratio {band['ratio']:.3f} (tol 10), lower bound {band['min']:.3f}", el, 60)
    assert ok and el < 60


def test_ac10_stabilisation_suite(ex31, ex35, warm, acceptance):
    t0 = time.perf_counter()
    omega = estimate_omega_inf(ex31, 1e6)
    st = stabilization_functional(ex31, omega, np.logspace(0, 6, 121), scale=lambda x: x ** (1 - 0.5))
    zm = check_zero_mean(ex35)
    props = calculus_properties()
    wanted = ("uniqueness", "linearity", "composition", "lipschitz")
    el = time.perf_counter() - t0
    flags = {p: props[p]["passed"] for p in wanted}
    drift = st.band["ratio_top_max"] / st.band["ratio_top_min"]
    ok = st.passed and zm.passed and zm.constant <= 2.0 and all(flags.values())
    detail = (
        f"ex31 S/t^(1-alpha) drift {drift:.3f} (tol 2), ex35 sup |int sigma| {zm.constant:.4f} (tol 2), "
        f"calculus properties {flags}"
    )
    acceptance("AC10", ok, detail, el, 120)
    assert ok and el < 120


def test_ac11_reality_of_delta(ex31, ex35, warm, acceptance):
    t0 = time.perf_counter()
    worst = {}
    for name, model, m in (("ex31", ex31, 1), ("ex35", ex35, 2)):
        assert model.m == m
        w = 0.0
        for xi in np.logspace(-1, 1, 10):
            t = max(boundaries(model, xi).t2, 1.0) * np.logspace(0, 3, 10)
            stages, _ = diagonalize(model, xi, t)
            for st_ in stages:
                d = st_.delta.value
                w = max(w, float(np.max(np.abs(d.imag) / np.abs(d))))
        worst[name] = w
    el = time.perf_counter() - t0
    ok = all(v <= 1e-10 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    acceptance("AC11", ok, f"max |Im delta|/|delta| over 100 pts: {detail} (tol 1e-10)", el, 60)
    assert ok and el < 60


def test_ac12_mode_limit(ex31, warm, acceptance):
    t0 = time.perf_counter()
    res = mode_limit(ex31, 1.0)
    el = time.perf_counter() - t0
    r = res.cauchy_residuals
    fac = res.decay_factors
    decreasing = bool(np.all(np.diff(r) < 0))
    in_range = bool(np.all((fac >= 1.0) & (fac <= 4.0)))
    det_ok = res.det_band["ratio"] <= 2.0
    detail = (
        f"residuals {r[0]:.1e} -> {r[-1]:.1e} decreasing {decreasing}, "
        f"doubling factors {np.round(fac, 2).tolist()} in [1, 4] {in_range}, det band {res.det_band['ratio']:.6f} (tol 2)"
    )
    ok = decreasing and in_range and det_ok
    acceptance("AC12", ok, detail, el, 120)
    assert decreasing and det_ok and el < 120
    assert in_range, "per-doubling decay factors leave [1, 4]"
