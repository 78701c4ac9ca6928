"""
Zones and fundamental solutions
===============================

The damped system ``d/dt E = i A E`` with ``A = [[0, xi], [xi, 2 i b]]``
is solved frequency by frequency. Phase space splits into a dissipative,
an intermediate and a hyperbolic zone, and each zone has its own
representation of ``E``.
"""

import numpy as np

from zonewave.coeffs import make_example, mu_integral, sigma_integral
from zonewave.mat2 import norm
from zonewave.propagator import evolve
from zonewave.zones import boundaries

# mu(t) = 0.4/(1+t) plus the oscillation sigma(t) = sin(sqrt t)/(1+t)
model = make_example("ex31")
print(model)

# zone boundaries: t1 closes the dissipative zone, t2 opens the hyperbolic one
print("\n     xi          t1            t2")
for xi in (1e-3, 1e-2, 0.1, 1.0):
    zb = boundaries(model, xi)
    print(f"{xi:8.0e}  {zb.t1:12.5g}  {zb.t2:12.5g}")

# one sweep of the integrator gives E(t, 0, xi) on a whole time grid
xi = 0.05
t = np.logspace(0, 4, 9)
E = evolve(model, xi, t)
zones = boundaries(model, xi).classify(t)

# Liouville: det E = exp(-2 int b), independent of xi
det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
liouville = np.abs(det * np.exp(mu_integral(model, t) + sigma_integral(model, t)) - 1)

print(f"\nxi = {xi}")
print("       t    zone            ||E||      Liouville residual")
for ti, z, Ei, r in zip(t, zones, E, liouville):
    print(f"{ti:8.0f}    {z.value:14s}  {norm(Ei):.5f}    {r:.1e}")
