import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from zonewave.coeffs import make_example
from zonewave.diag import (
    PeanoBakerError,
    ZoneConstantError,
    diag_step,
    diagonalize,
    im_tau_m,
    intermediate_factorization,
    min_zone_constant,
    peano_baker,
    reconstruct_hyp,
    stage0,
)
from zonewave.mat2 import norm, singular_values
from zonewave.propagator import picard_dissipative, solve_E
from zonewave.zones import boundaries


def _hyp_times(model, xi, n=100, decades=3.0):
    t2 = max(boundaries(model, xi).t2, 1.0)
    return t2 * np.logspace(0.0, decades, n)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def test_stage0_structure(ex31):
    t = np.array([5.0, 50.0])
    st0 = stage0(ex31, 1.3, t, order=1)
    b = ex31.b(t)
    assert np.allclose(st0.tau_plus.value, 1.3 + 1j * b)
    assert np.allclose(st0.tau_minus.value, -1.3 + 1j * b)
    assert np.allclose(st0.r12.value, 1j * b) and np.allclose(st0.r21.value, 1j * b)
    assert st0.h_residual < 1e-15


@pytest.mark.parametrize("family,xi", [("ex31", 0.5), ("ex31", 5.0), ("ex35", 1.0), ("ex34", 0.3)])
def test_delta_is_real_and_identities_hold(family, xi):
    model = make_example(family)
    stages, factors = diagonalize(model, xi, _hyp_times(model, xi))
    for st_ in stages:
        dl = st_.delta.value
        assert np.max(np.abs(dl.imag) / np.abs(dl)) <= 1e-10
        assert st_.h_residual < 1e-10
    for st_ in stages[1:]:
        assert st_.diagnostics["identity_residual"] < 1e-10
        assert st_.diagnostics["formula_residual"] < 1e-10
        assert st_.diagnostics["d_prev_max"] < 0.5
    for Nk, st_ in zip(factors, stages):
        assert np.allclose(Nk.det.value, 1.0 - st_.d.value, atol=1e-14)


def test_symbol_order_budget(ex31):
    st0 = stage0(ex31, 1.0, np.array([10.0]), order=1)
    _, st1 = diag_step(st0)
    with pytest.raises(ValueError, match="order 0"):
        diag_step(st1)


def test_symbol_decay_chain(ex35):
    # |beta_{k+1}| |xi|^{k+1} Xi^{k+2} stays bounded in the hyperbolic zone
    xi = 1.0
    t = _hyp_times(ex35, xi, 200, 4.0)
    stages, _ = diagonalize(ex35, xi, t)
    for k, st_ in enumerate(stages[1:]):
        q = np.abs(st_.beta.value) * xi ** (k + 1) * ex35.xi_scale(t) ** (k + 2)
        assert np.max(q[t > t[-1] / 100]) <= 2.0 * np.max(q[t <= t[-1] / 100]) + 1e-300


def test_zone_constant_too_small_is_reported():
    model = make_example("ex31", zone_constant=0.05)
    with pytest.raises(ZoneConstantError) as exc:
        reconstruct_hyp(model, 0.05, max(boundaries(model, 0.05).t2, 1.0), 50.0)
    assert exc.value.d_max >= 0.5
    N = min_zone_constant(model, [0.05, 0.5])
    assert N > 0.05
    stages, _ = diagonalize(model.with_zone_constant(N), 0.5, _hyp_times(model.with_zone_constant(N), 0.5, 5))
    assert max(float(np.max(s.d.value)) for s in stages[:-1]) < 0.5


# ---------------------------------------------------------------------------
# Peano-Baker series
# ---------------------------------------------------------------------------


@given(st.floats(0.1, 2.0), st.floats(0.5, 5.0))
def test_peano_baker_commuting_generator(a, T):
    K = np.array([[0.2, 1.0], [-0.5, 0.1j]])

    def R(x):
        return (a * np.cos(x))[..., None, None] * K

    Q = peano_baker(R, 0.0, T)
    assert np.allclose(Q, expm(a * math.sin(T) * K), atol=1e-11)


def test_peano_baker_time_ordering_against_ode():
    def R(x):
        x = np.asarray(x)
        out = np.zeros(x.shape + (2, 2), dtype=complex)
        out[..., 0, 1] = np.exp(1j * x)
        out[..., 1, 0] = 0.3 * x
        return out

    Q = peano_baker(R, 1.0, 4.0, tol=1e-13)

    def rhs(x, y):
        Y = (y[:4] + 1j * y[4:]).reshape(2, 2)
        d = (R(np.array(x)) @ Y).ravel()
        return np.concatenate([d.real, d.imag])

    sol = solve_ivp(rhs, (1.0, 4.0), np.concatenate([np.eye(2).ravel(), np.zeros(4)]), rtol=1e-12, atol=1e-14)
    ref = (sol.y[:4, -1] + 1j * sol.y[4:, -1]).reshape(2, 2)
    assert np.allclose(Q, ref, atol=1e-9)


def test_peano_baker_refuses_divergent_bound():
    with pytest.raises(PeanoBakerError):
        peano_baker(lambda x: np.broadcast_to(5.0 * np.eye(2), np.shape(x) + (2, 2)), 0.0, 10.0)


# ---------------------------------------------------------------------------
# hyperbolic zone
# ---------------------------------------------------------------------------


def test_reconstruction_matches_integrator(ex31):
    xi = 1.0
    s = max(boundaries(ex31, xi).t2, 1.0)
    t = np.array([2 * s, 10 * s, 40 * s])
    E_rec = reconstruct_hyp(ex31, xi, s, t)
    for ti, Er in zip(t, E_rec):
        ref = solve_E(ex31, xi, s, ti)
        assert norm(Er - ref) / norm(ref) < 1e-7


def test_unitary_factor_and_integrability(ex31):
    xi = 2.0
    s = max(boundaries(ex31, xi).t2, 1.0)
    rep = reconstruct_hyp(ex31, xi, s, np.array([5 * s, 50 * s, 500 * s]), return_parts=True)
    sv = singular_values(rep.unitary_factor())
    assert np.allclose(sv, 1.0, atol=1e-9)
    assert rep.info["norm_integral"] <= ex31.zone_constant
    # Cauchy bound for the tail factor
    L = rep.info["norm_integral"]
    assert norm(rep.Q[2] - rep.Q[1]) <= L * math.exp(L)


def test_im_tau_identities(ex35):
    xi = 1.5
    t = _hyp_times(ex35, xi, 20, 2.0)
    _, check = im_tau_m(ex35, xi, t, s=t[0], return_check=True)
    assert check["formula_residual"] < 1e-10
    assert check["identity_residual"] < 1e-8


# ---------------------------------------------------------------------------
# intermediate zone and the chain across zones
# ---------------------------------------------------------------------------


def test_intermediate_factorization(ex31):
    xi = 0.02
    zb = boundaries(ex31, xi)
    s, t = zb.t1, min(zb.t2, 20 * zb.t1)
    f = intermediate_factorization(ex31, xi, s, t)
    ref = solve_E(ex31, xi, s, t)
    assert norm(f.product - ref) / norm(ref) < 1e-7
    with pytest.raises(ValueError, match="outside the intermediate zone"):
        intermediate_factorization(ex31, xi, s, 10 * zb.t2)


def test_chain_across_all_zones(ex31):
    xi = 0.05
    zb = boundaries(ex31, xi)
    T = 2.0 * zb.t2
    E_diss = picard_dissipative(ex31, xi, zb.t1, iterations=12).E
    E_int = intermediate_factorization(ex31, xi, zb.t1, zb.t2).product
    E_hyp = reconstruct_hyp(ex31, xi, zb.t2, T)
    ref = solve_E(ex31, xi, 0.0, T)
    assert norm(E_hyp @ E_int @ E_diss - ref) / norm(ref) < 1e-5
