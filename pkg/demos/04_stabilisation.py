"""
Stabilising oscillations
========================

The oscillation ``sigma`` enters only through ``omega_inf``, the limit of
``exp(int_0^t sigma)``. For ``sigma = sin(sqrt t)/(1+t)`` the integral
converges to ``pi/e`` times the amplitude. For the bump family ``ex35``
there is no pointwise limit, but the mean deviation still vanishes.
"""

import math

import numpy as np

from zonewave.coeffs import make_example
from zonewave.stabilize import calculus_properties, check_zero_mean, estimate_omega_inf, stabilization_functional

ex31 = make_example("ex31")
est = estimate_omega_inf(ex31, 1e6, full=True)
exact = math.exp(0.4 * math.pi / math.e)
print(f"ex31 omega_inf {est.estimate:.8f}, closed form {exact:.8f}")

# S(t) = int_0^t |exp(int sigma) - omega_inf| grows like sqrt(t)
t = np.logspace(0, 6, 13)
st = stabilization_functional(ex31, est.value, t, scale=np.sqrt)
for ti, r in zip(t[::2], st.ratio_curve[::2]):
    print(f"  t = {ti:8.0e}   S(t)/sqrt(t) = {r:.4f}")

ex35 = make_example("ex35")
zm = check_zero_mean(ex35)
print(f"\nex35 sup |int sigma| = {zm.constant:.4f}")
est35 = estimate_omega_inf(ex35, 1e6, full=True)
print(f"ex35 omega_inf estimate {est35.estimate:.4f} (exact 1), stabilising: {est35.stabilising}")

# the calculus of stabilising functions on a synthetic set
for name, res in calculus_properties().items():
    print(f"{name:12s} {'ok' if res['passed'] else 'FAILED'}")
