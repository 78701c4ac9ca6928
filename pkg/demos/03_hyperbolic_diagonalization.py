"""
Diagonalization in the hyperbolic zone
======================================

For ``Theta(t) xi >= N`` the symbol is diagonalized step by step. The
product of the diagonalizers, the oscillating phases and a Peano-Baker
remainder rebuilds ``E`` exactly, and ``E`` compared with the modified
free evolution ``E_*`` converges to a limit ``W``.
"""

import numpy as np

from zonewave.coeffs import make_example
from zonewave.diag import diagonalize, reconstruct_hyp
from zonewave.mat2 import norm
from zonewave.propagator import evolve
from zonewave.verify import mode_limit
from zonewave.zones import boundaries

model = make_example("ex31")
xi = 1.0
s = max(boundaries(model, xi).t2, 1.0)
t = s * np.array([10.0, 100.0, 1000.0])

# the roots delta_k of each diagonalization step stay real
stages, _ = diagonalize(model, xi, t)
for k, st in enumerate(stages):
    d = st.delta.value
    print(f"stage {k}: max |Im delta|/|delta| = {np.max(np.abs(d.imag) / np.abs(d)):.1e}")

# reconstruction against direct integration
E_rec = reconstruct_hyp(model, xi, s, t)
E_int = evolve(model, xi, t, s)
for ti, a, b in zip(t, E_rec, E_int):
    print(f"t = {ti:8.1f}: relative difference {norm(a - b) / norm(b):.1e}")

# the mode limit: W(T) settles, with a tail that oscillates like (1 + sin sqrt T)/T
ml = mode_limit(model, xi)
print("\n        T     Cauchy residual   factor")
for T, r, f in zip(ml.T[:-1], ml.cauchy_residuals, np.r_[np.nan, ml.decay_factors]):
    print(f"{T:9.0f}    {r:.3e}        {f:6.2f}")
print(f"|det W| band ratio {ml.det_band['ratio']:.7f}")
