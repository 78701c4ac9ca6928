"""Phase-space zones.

For a frequency ``xi`` the dissipative zone is ``xi <= N mu(t)`` (ending at
``t1``) and the hyperbolic zone is ``Theta(t) xi >= N`` (starting at
``t2``); between them lies the intermediate zone. ``mu`` decreases and
``Theta`` increases, so each trajectory ``t -> (t, xi)`` passes the zones
in this order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .coeffs import CoefficientModel

__all__ = ["Zone", "ZoneBoundaries", "boundaries", "classify", "ZoneError"]

BOUNDARY_RTOL = 1e-12


class ZoneError(ValueError):
    pass


class Zone(str, enum.Enum):
    DISSIPATIVE = "Dissipative"
    INTERMEDIATE = "Intermediate"
    HYPERBOLIC = "Hyperbolic"


@dataclass(frozen=True)
class ZoneBoundaries:
    """``t1`` ends the dissipative zone, ``t2`` starts the hyperbolic zone."""

    xi: float
    t1: float
    t2: float
    N: float

    def classify(self, t):
        """Zone of ``t`` (a :class:`Zone`, or an object array for array input)."""
        t_arr = np.asarray(t, dtype=float)
        out = np.empty(t_arr.shape, dtype=object)
        out[...] = Zone.INTERMEDIATE
        out[t_arr <= self.t1] = Zone.DISSIPATIVE
        # t1 = t2 = 0 means xi > N mu(0): the dissipative zone is empty
        out[t_arr >= self.t2] = Zone.HYPERBOLIC
        return out.item() if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"xi": self.xi, "t1": self.t1, "t2": self.t2, "N": self.N}


def _increasing_root(g, lo_val: float, hi_start: float = 1.0) -> float:
    """Root of an increasing ``g`` on ``[0, inf)`` with ``g(0) < 0``; ``inf`` if beyond float range."""
    hi = hi_start
    while g(hi) < 0:
        hi *= 4.0
        if hi > 1e300:
            return math.inf
    root = brentq(g, lo_val, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(root)


def boundaries(model: CoefficientModel, xi: float, N: float | None = None) -> ZoneBoundaries:
    """Zone boundaries ``t1`` (``xi = N mu(t1)``) and ``t2`` (``Theta(t2) xi = N``).

    Boundaries below 0 are clamped to 0; a boundary beyond the float range
    is returned as ``inf`` (the zone is never reached).

    Raises
    ------
    ZoneError
        If ``xi <= 0`` or a root fails its residual check.
    """
    xi = float(xi)
    if not xi > 0:
        raise ZoneError(f"frequency must be positive, got xi = {xi}")
    N = model.zone_constant if N is None else float(N)
    mu0 = float(model.mu(0.0))
    if xi >= N * mu0:
        t1 = 0.0
    else:
        t1 = _increasing_root(lambda t: xi - N * float(model.mu(t)), 0.0)
        res = 0.0 if math.isinf(t1) else abs(N * float(model.mu(t1)) - xi) / xi
        if res > 1e-10:
            raise ZoneError(f"t1 residual {res:.3g} exceeds tolerance for xi = {xi}")
    th0 = float(model.theta(0.0))
    if th0 * xi >= N:
        t2 = 0.0
    else:
        t2 = _increasing_root(lambda t: float(model.theta(t)) * xi - N, 0.0)
        res = 0.0 if math.isinf(t2) else abs(float(model.theta(t2)) * xi - N) / N
        if res > 1e-10:
            raise ZoneError(f"t2 residual {res:.3g} exceeds tolerance for xi = {xi}")
    return ZoneBoundaries(xi=xi, t1=t1, t2=t2, N=N)


def classify(model: CoefficientModel, t, xi: float, N: float | None = None):
    """Zone of ``(t, xi)``; ties go to the closed outer zones."""
    if np.any(np.asarray(t) < 0):
        raise ZoneError("t must be nonnegative")
    return boundaries(model, xi, N).classify(t)
