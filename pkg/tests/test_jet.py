import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonewave import jet as J
from zonewave.jet import Jet

finite = st.floats(min_value=0.1, max_value=5.0)


def test_variable_has_unit_derivative():
    x = Jet.variable(np.array([0.5, 2.0]), 3)
    assert np.allclose(x.value, [0.5, 2.0])
    assert np.allclose(x.d1, 1.0)
    assert np.allclose(x.d(2), 0.0)


def test_exp_sin_against_closed_form():
    t = np.array([0.3, 1.7])
    f = J.exp(J.sin(Jet.variable(t, 3)))
    s, c = np.sin(t), np.cos(t)
    e = np.exp(s)
    assert np.allclose(f.d(1), c * e)
    assert np.allclose(f.d(2), (c * c - s) * e)
    assert np.allclose(f.d(3), (c**3 - 3 * s * c - c) * e)


def test_power_and_division_against_closed_form():
    t = np.array([0.5, 3.0])
    x = Jet.variable(t, 4)
    f = 1.0 / (1.0 + x) ** 0.5
    for k in range(5):
        coef = np.prod([-0.5 - j for j in range(k)]) if k else 1.0
        assert np.allclose(f.d(k), coef * (1 + t) ** (-0.5 - k))


def test_scalar_broadcast_against_point_array():
    x = Jet.variable(np.linspace(1, 2, 5), 2)
    y = 2.0 * x + 1.0
    assert y.shape == (5,)
    assert np.allclose(y.d1, 2.0)
    z = x / 4.0
    assert np.allclose(z.d1, 0.25)


def test_diff_and_truncate_reduce_order():
    x = Jet.variable(np.array([1.0]), 3)
    f = J.sin(x)
    assert f.diff().order == 2
    assert np.allclose(f.diff().value, np.cos(1.0))
    assert f.truncate(1).order == 1
    with pytest.raises(ValueError):
        f.truncate(5)


@given(finite, finite)
def test_product_rule(a, b):
    t = np.array([a])
    x = Jet.variable(t, 2)
    f, g = J.sin(x * b), J.exp(x / b)
    h = f * g
    assert np.allclose(h.d1, f.d1 * g.value + f.value * g.d1)
    assert np.allclose(h.d(2), f.d(2) * g.value + 2 * f.d1 * g.d1 + f.value * g.d(2))


@given(finite)
def test_log_inverts_exp(a):
    x = Jet.variable(np.array([a]), 4)
    y = J.log(J.exp(x))
    assert np.allclose(y.tc, x.tc, atol=1e-12)


@given(finite)
def test_sqrt_squares_back(a):
    x = Jet.variable(np.array([a]), 3) + 1.0
    y = J.sqrt(x)
    assert np.allclose((y * y).tc, x.tc, atol=1e-12)


def test_finite_difference_oracle():
    t0, h = 1.3, 1e-4
    f = lambda T: J.cos(T) * T**1.5  # noqa: E731
    jet = f(Jet.variable(np.array([t0]), 2))
    fd = (f(t0 + h) - f(t0 - h)) / (2 * h)
    assert math.isclose(float(jet.d1[0]), fd, rel_tol=1e-6)
