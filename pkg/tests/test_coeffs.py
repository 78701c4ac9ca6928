import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from zonewave.coeffs import (
    FAMILIES,
    ModelError,
    b_jet,
    check_compatibility,
    check_shape,
    check_symbol_bounds,
    lambda_shape,
    load_model,
    make_custom,
    make_example,
    model_from_config,
    mu_integral,
    sigma_integral,
)


def _quad(f, a, b, points=None):
    val, _ = quad(f, a, b, limit=5000, epsabs=1e-13, epsrel=1e-12, points=points)
    return val


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "family,params,needle",
    [
        ("ex31", {"mu": 0.6}, "mu in (0, 1/2)"),
        ("ex31", {"alpha": 1.5}, "alpha in (0, 1)"),
        ("ex33", {"alpha": 0.9, "beta": 1.2}, "1 < alpha + beta < 2"),
        ("ex33", {"alpha": 0.6, "beta": 0.8}, "beta >= 1"),
        ("ex35", {"alpha": 0.5}, "alpha > 1"),
        ("ex35", {"m": 0}, "integer m >= 1"),
        ("ex35", {"shape": "ex32"}, "shape"),
    ],
)
def test_parameter_conditions_are_named(family, params, needle):
    with pytest.raises(ModelError, match=None) as exc:
        make_example(family, params)
    assert needle in str(exc.value)


def test_unknown_family_and_parameter():
    with pytest.raises(ModelError, match="unknown family"):
        make_example("ex99")
    with pytest.raises(ModelError, match="no parameter 'gamma'"):
        make_example("ex31", {"gamma": 1.0})


def test_registry_lists_all_families():
    assert list(FAMILIES) == ["ex31", "ex32", "ex33", "ex34", "ex35"]


def test_ex35_slow_alpha_is_tagged():
    model = make_example("ex35", {"alpha": 2.2, "m": 2, "horizon": 1e4})
    assert any("2 + 1/m" in tag for tag in model.tags)
    assert not make_example("ex35", {"horizon": 1e4}).tags


@given(st.floats(0.05, 0.45), st.floats(0.1, 0.9))
def test_ex31_shape_invariants(mu0, alpha):
    model = make_example("ex31", {"mu": mu0, "alpha": alpha})
    t = np.logspace(-2, 6, 200)
    mu = model.mu(t)
    assert np.all(mu > 0) and np.all(np.diff(mu) < 0)
    assert np.all(np.abs(model.sigma(t)) <= mu + 1e-300)
    assert math.isclose(float(model.theta(0.0)), mu0)
    assert np.all(np.diff(model.theta(t)) >= 0)


# ---------------------------------------------------------------------------
# integrals against independent quadrature
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("family", ["ex31", "ex33", "ex34"])
def test_mu_integral_against_quad(family):
    model = make_example(family)
    for t in (0.5, 7.0, 300.0):
        ref = _quad(lambda x: float(model.mu(x)), 0.0, t)
        assert math.isclose(float(mu_integral(model, t)), ref, rel_tol=1e-10)


@pytest.mark.parametrize("family,t", [("ex31", 40.0), ("ex31", 900.0), ("ex32", 60.0), ("ex33", 500.0), ("ex34", 80.0)])
def test_sigma_integral_against_quad(family, t):
    model = make_example(family)
    br = model.phase_breaks_fn(t)
    ref = _quad(lambda x: float(model.sigma(x)), 0.0, t, points=br[(br > 0) & (br < t)][:4000])
    assert math.isclose(float(sigma_integral(model, t)), ref, rel_tol=1e-8, abs_tol=1e-11)


def test_ex31_omega_closed_form():
    # int_0^inf sin(sqrt t)/(1+t) dt = pi/e
    model = make_example("ex31")
    tail = float(sigma_integral(model, 4e6))
    assert abs(tail - 0.4 * math.pi / math.e) < 2e-3


def test_ex35_bumps_have_zero_mean():
    model = make_example("ex35", {"horizon": 1e5})
    bumps = model._cache["bumps"]
    for c, h in list(zip(bumps.centers, bumps.halfw))[:6]:
        left, right = c - h, c + h
        assert abs(float(sigma_integral(model, right)) - float(sigma_integral(model, left))) < 1e-12
        ref = _quad(lambda x: float(model.sigma(x)), left, c)
        assert math.isclose(float(sigma_integral(model, c)) - float(sigma_integral(model, left)), ref, rel_tol=1e-9)


def test_ex35_bumps_do_not_overlap():
    bumps = make_example("ex35", {"horizon": 1e6})._cache["bumps"]
    assert np.all(bumps.centers[1:] - bumps.halfw[1:] >= bumps.centers[:-1] + bumps.halfw[:-1])


def test_lambda_shape_closed_form(ex31):
    t = np.array([0.0, 1.0, 1e3])
    assert np.allclose(lambda_shape(ex31, t), (1 + t) ** 0.2)


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("family", ["ex31", "ex33", "ex34", "ex35"])
def test_b_jet_against_finite_differences(family):
    model = make_example(family, {"horizon": 1e4} if family == "ex35" else None)
    t = np.array([3.0, 17.0, 250.0])
    j = b_jet(model, t, 2)
    h = 1e-5 * t
    assert np.allclose(j.d1, (model.b(t + h) - model.b(t - h)) / (2 * h), rtol=1e-6, atol=1e-12)
    h = 1e-3 * t
    bp, bm, b0 = model.b(t + h), model.b(t - h), model.b(t)
    assert np.allclose(j.d(2), (bp - 2 * b0 + bm) / h**2, rtol=1e-3, atol=1e-9)


def test_custom_expression_gives_exact_jets():
    model = make_custom("0.4/(1+t)", "0.4/(1+t)*sin(sqrt(t))", "0.4 + sqrt(t)", "(1+t)**0.75")
    t = np.array([2.0, 9.0])
    mu = model.mu(t, 2)
    assert np.allclose(mu.d1, -0.4 / (1 + t) ** 2)
    assert np.allclose(mu.d(2), 0.8 / (1 + t) ** 3)
    assert not model.fd_jets


def test_callable_model_uses_finite_difference_jets():
    model = make_custom(lambda t: 0.4 / (1 + t), lambda t: 0 * t, "0.4 + t", "1 + t")
    assert "fd-jets" in model.tags
    assert np.allclose(model.mu(np.array([1.0]), 1).d1, -0.1, rtol=1e-6)


@pytest.mark.parametrize(
    "expr",
    ["__import__('os')", "t.real", "foo(t)", "exp(t, 2)", "'a'", "[t]", "lambda: 1"],
)
def test_custom_expression_whitelist(expr):
    with pytest.raises(ModelError):
        make_custom(expr, "0*t", "1 + t", "1 + t")


def test_piecewise_custom_model():
    spec = [{"until": 10.0, "expr": "0.4/(1+t)"}, {"expr": "4.4/(1+t)**2"}]
    model = make_custom(spec, "0*t", "0.4 + t", "1 + t")
    assert np.allclose(model.mu(np.array([5.0, 20.0])), [0.4 / 6, 4.4 / 21**2])
    with pytest.raises(ModelError):
        make_custom([{"until": 5.0, "expr": "t"}], "0*t", "1+t", "1+t")


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = {"family": "ex31", "params": {"mu": 0.3, "alpha": 0.4}, "m": 1, "zone_constant": 3.0}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    model = load_model(path)
    assert model.to_config() == cfg
    off = model_from_config(dict(cfg, sigma_off=True))
    assert off.sigma_off and np.all(off.sigma(np.array([1.0, 2.0])) == 0)


def test_config_errors(tmp_path):
    with pytest.raises(ModelError, match="'family'"):
        model_from_config({"params": {}})
    with pytest.raises(ModelError, match="unknown model config keys"):
        model_from_config({"family": "ex31", "colour": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    with pytest.raises(ModelError, match="malformed JSON"):
        load_model(bad)
    with pytest.raises(ModelError, match="not found"):
        load_model(tmp_path / "missing.json")
    with pytest.raises(ModelError, match="custom model needs"):
        model_from_config({"family": "custom", "mu": "1/(1+t)"})


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("family", ["ex31", "ex33", "ex34"])
def test_admissible_families_pass(family):
    model = make_example(family)
    for check in (check_shape, check_symbol_bounds, check_compatibility):
        res = check(model)
        assert res.passed, (family, res)


def test_ex32_fails_compatibility_only():
    model = make_example("ex32")
    assert check_shape(model).passed
    assert check_symbol_bounds(model).passed
    res = check_compatibility(model)
    assert not res.passed and res.constant > 1e3


def test_shape_check_detects_fast_decay():
    model = make_custom("0.4/(1+t)**0.5", "0*t", "0.4 + t", "1 + t")
    res = check_shape(model)
    assert not res.passed and not res.detail["parts"]["limsup_t_mu_below_1"]
