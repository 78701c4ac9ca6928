"""Compiled coefficient kernels agree with the model's Python definitions."""

import numpy as np
import pytest

from zonewave.coeffs import make_example

CASES = [
    ("ex31", {}),
    ("ex32", {}),
    ("ex33", {}),
    ("ex34", {}),
    ("ex35", {"horizon": 1e5}),
    ("ex35", {"shape": "ex34", "horizon": 1e5}),
]


@pytest.mark.parametrize("family,params", CASES)
def test_kernel_matches_model(family, params):
    model = make_example(family, params)
    t = np.concatenate([np.linspace(0.0, 50.0, 401), np.logspace(1.7, 5, 600)])
    if model.phase_breaks_fn is not None:
        br = model.phase_breaks_fn(1e5)[:201]
        t = np.concatenate([t, br, 0.5 * (br[1:] + br[:-1])])
    mu_ref, sig_ref = model.mu(t), model.sigma(t)
    got = np.array([model.kernel(x, model.kernel_params) for x in t])
    assert np.allclose(got[:, 0], mu_ref, rtol=1e-13, atol=1e-300)
    assert np.allclose(got[:, 1], sig_ref, rtol=1e-12, atol=1e-15)
