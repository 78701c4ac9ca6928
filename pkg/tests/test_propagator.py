import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from zonewave.coeffs import make_example, mu_integral, sigma_integral
from zonewave.mat2 import norm
from zonewave.propagator import (
    IntegrationError,
    NonContractionError,
    SolveConfig,
    evolve,
    free_solution,
    lambda_tilde,
    picard_dissipative,
    solve_E,
    solve_E_free,
    solve_E_hat_mu,
    solve_E_mu,
)


def _scipy_reference(model, xi, s, t):
    """Independent integration of the real 8-dimensional system."""

    def rhs(x, y):
        E = (y[:4] + 1j * y[4:]).reshape(2, 2)
        bb = float(model.mu(x)) + float(model.sigma(x))
        A = np.array([[0, xi], [xi, 1j * bb]])
        d = (1j * A @ E).ravel()
        return np.concatenate([d.real, d.imag])

    y0 = np.concatenate([np.eye(2).ravel(), np.zeros(4)])
    sol = solve_ivp(rhs, (s, t), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    y = sol.y[:, -1]
    return (y[:4] + 1j * y[4:]).reshape(2, 2)


@given(st.floats(0.01, 20.0), st.floats(0.0, 50.0))
def test_free_solution_is_unitary_and_matches_expm(xi, t):
    E = free_solution(xi, 0.0, t)
    assert np.allclose(E.conj().T @ E, np.eye(2), atol=1e-12)
    assert np.allclose(E, expm(1j * t * np.array([[0, xi], [xi, 0]])), atol=1e-10)


def test_constant_damping_against_expm(constant_model):
    for xi, s, t in ((0.1, 0.0, 30.0), (1.0, 2.0, 7.5), (5.0, 0.5, 12.0)):
        A = np.array([[0, xi], [xi, 0.3j]])
        ref = expm(1j * A * (t - s))
        assert np.allclose(solve_E(constant_model, xi, s, t), ref, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("family,xi,t", [("ex31", 0.7, 30.0), ("ex33", 2.0, 20.0), ("ex34", 0.05, 60.0)])
def test_against_scipy_solve_ivp(family, xi, t):
    model = make_example(family)
    ref = _scipy_reference(model, xi, 0.0, t)
    got = solve_E(model, xi, 0.0, t)
    assert norm(got - ref) / norm(ref) < 1e-8


@given(st.floats(1e-3, 30.0), st.floats(0.1, 2000.0))
def test_liouville_identity(xi, t):
    model = make_example("ex31")
    E = solve_E(model, xi, 0.0, t)
    int2b = mu_integral(model, t) + sigma_integral(model, t)
    assert abs(np.linalg.det(E) * math.exp(int2b) - 1.0) < 1e-7


def test_group_property_and_inverse(ex31):
    xi = 0.8
    E_ts = solve_E(ex31, xi, 3.0, 40.0)
    E_tr = solve_E(ex31, xi, 12.0, 40.0)
    E_rs = solve_E(ex31, xi, 3.0, 12.0)
    assert np.allclose(E_tr @ E_rs, E_ts, rtol=1e-8, atol=1e-10)
    back = solve_E(ex31, xi, 40.0, 3.0)
    assert np.allclose(back @ E_ts, np.eye(2), atol=1e-8)


def test_evolve_on_both_sides_of_s(ex31):
    grid = np.array([1.0, 4.0, 9.0, 20.0])
    E = evolve(ex31, 1.5, grid, 5.0)
    for t, Et in zip(grid, E):
        assert np.allclose(Et, solve_E(ex31, 1.5, 5.0, t), rtol=1e-8, atol=1e-10)


def test_checkpoints_agree_with_direct_solve(ex31):
    cfg = SolveConfig(checkpoints=False)
    for t in (3.0, 100.0, 1000.0):
        assert np.allclose(solve_E(ex31, 0.3, 0.0, t), solve_E(ex31, 0.3, 0.0, t, cfg), rtol=1e-9, atol=1e-11)


def test_variants(ex31):
    assert np.allclose(solve_E_free(ex31, 2.0, 1.0, 9.0), free_solution(2.0, 1.0, 9.0), atol=1e-9)
    assert np.allclose(solve_E_free(None, 2.0, 1.0, 9.0), free_solution(2.0, 1.0, 9.0), atol=1e-9)
    Emu = solve_E_mu(ex31, 0.5, 0.0, 50.0)
    assert np.allclose(Emu, solve_E(ex31.without_sigma(), 0.5, 0.0, 50.0), rtol=1e-10)
    assert abs(np.linalg.det(Emu) * 51**0.4 - 1) < 1e-8


def test_hat_mu_conjugation(ex31):
    E, disc = solve_E_hat_mu(ex31, 0.01, 100.0, 5000.0, 1.3, return_discrepancy=True)
    assert disc < 1e-9
    with pytest.raises(ValueError):
        solve_E_hat_mu(ex31, 0.01, 1.0, 2.0, -1.0)


def test_lambda_tilde(ex31):
    t = np.array([10.0, 1000.0])
    ref = np.exp(0.5 * (mu_integral(ex31, t) + sigma_integral(ex31, t)))
    assert np.allclose(lambda_tilde(ex31, t), ref)


def test_integration_error_reports_time(ex31):
    with pytest.raises(IntegrationError) as exc:
        solve_E(ex31, 50.0, 0.0, 1e4, SolveConfig(max_steps=20, checkpoints=False))
    assert exc.value.t_fail > 0 and "maximum number of steps" in str(exc.value)
    with pytest.raises(ValueError):
        solve_E(ex31, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("xi,t", [(0.004, 50.0), (0.02, 10.0), (1e-4, 3000.0)])
def test_picard_matches_integrator_in_dissipative_zone(ex31, xi, t):
    res = picard_dissipative(ex31, xi, t, iterations=12)
    ref = solve_E(ex31, xi, 0.0, t)
    assert norm(res.E - ref) / norm(ref) < 1e-6
    assert res.contracting


def test_picard_rejects_points_far_outside_zone(ex31):
    with pytest.raises(NonContractionError):
        picard_dissipative(ex31, 5.0, 200.0, iterations=10)
