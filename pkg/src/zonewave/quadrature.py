"""Composite Gauss-Legendre quadrature on oscillation-aware panels.

Integrands in this package oscillate on a time scale supplied by the
coefficient family (lobes of ``sin(t**alpha)``, bumps, ...). Panels are
built from those breakpoints, refined geometrically (ratio <= 2 in ``t``,
graded towards ``t = 0`` where ``t**alpha`` is singular) and optionally
capped in width. On such panels a fixed Gauss-Legendre rule is spectrally
accurate and also gives cumulative (running) integrals at every node,
which is what nested integrals (Picard, Peano-Baker, stabilisation
functional) need.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

__all__ = [
    "QuadratureError",
    "PanelGrid",
    "make_breaks",
    "adaptive_integrate",
]


class QuadratureError(RuntimeError):
    """Adaptive refinement failed to converge on a subinterval."""

    def __init__(self, a: float, b: float, estimate: float, error: float):
        self.interval = (a, b)
        super().__init__(
            f"quadrature did not converge on [{a:.17g}, {b:.17g}] "
            f"(estimate {estimate:.6g}, error {error:.3g})"
        )


@lru_cache(maxsize=None)
def _gauss(n: int):
    x, w = L.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def _cumulative_matrix(n: int) -> np.ndarray:
    """``C[i, j] = int_{-1}^{x_i} l_j(x) dx`` for the Lagrange basis on GL nodes."""
    x, _ = _gauss(n)
    V = L.legvander(x, n - 1)
    W = np.empty((n, n))
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        W[:, k] = L.legval(x, L.legint(c, lbnd=-1.0))
    return W @ np.linalg.inv(V)


def make_breaks(
    a: float,
    b: float,
    extra=(),
    *,
    ratio: float = 2.0,
    grade_levels: int = 40,
    max_width: float | None = None,
) -> np.ndarray:
    """Sorted panel breakpoints covering ``[a, b]`` (``0 <= a < b``).

    ``extra`` points inside ``(a, b)`` are always included. Panels have
    endpoint ratio at most ``ratio`` for ``t > 0``; when ``a == 0`` the
    geometric grading continues ``grade_levels`` halvings towards 0.
    """
    if not b > a:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    pts = [np.array([a, b], dtype=float)]
    extra = np.asarray(extra, dtype=float).ravel()
    if extra.size:
        pts.append(extra[(extra > a) & (extra < b)])
    top = b
    lo = max(a, top * 2.0 ** (-grade_levels)) if a == 0.0 else a
    if lo > 0:
        n = int(np.ceil(np.log(top / lo) / np.log(ratio)))
        if n > 0:
            pts.append(lo * ratio ** np.arange(0, n + 1))
    br = np.unique(np.concatenate(pts))
    br = br[(br >= a) & (br <= b)]
    if max_width is not None:
        widths = np.diff(br)
        k = np.maximum(1, np.ceil(widths / max_width)).astype(int)
        if np.any(k > 1):
            pieces = [br[:1]]
            for left, w, kk in zip(br[:-1], widths, k):
                pieces.append(left + w * np.arange(1, kk + 1) / kk)
            br = np.concatenate(pieces)
    return br


class PanelGrid:
    """Gauss-Legendre nodes on consecutive panels ``[breaks[p], breaks[p+1]]``.

    Values sampled at :attr:`nodes` (shape ``(P, n)``) may carry extra
    trailing axes (e.g. ``(P, n, 2, 2)`` matrices).
    """

    def __init__(self, breaks, order: int = 16):
        self.breaks = np.asarray(breaks, dtype=float)
        if self.breaks.ndim != 1 or self.breaks.size < 2 or np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breaks must be a strictly increasing 1-d array with >= 2 entries")
        self.order = order
        x, w = _gauss(order)
        left = self.breaks[:-1, None]
        half = 0.5 * np.diff(self.breaks)[:, None]
        self.half = half
        self.nodes = left + half * (x[None, :] + 1.0)
        self.weights = half * w[None, :]

    @property
    def n_panels(self) -> int:
        return self.breaks.size - 1

    def _w(self, values):
        return self.weights.reshape(self.weights.shape + (1,) * (np.ndim(values) - 2))

    def panel_integrals(self, values) -> np.ndarray:
        values = np.asarray(values)
        return np.sum(values * self._w(values), axis=1)

    def integrate(self, values):
        return np.sum(self.panel_integrals(values), axis=0)

    def at_breaks(self, values) -> np.ndarray:
        """Running integral from ``breaks[0]`` evaluated at every breakpoint."""
        p = self.panel_integrals(values)
        zero = np.zeros((1,) + p.shape[1:], dtype=p.dtype)
        return np.concatenate([zero, np.cumsum(p, axis=0)], axis=0)

    def cumulative(self, values) -> np.ndarray:
        """Running integral from ``breaks[0]`` evaluated at every node."""
        values = np.asarray(values)
        C = _cumulative_matrix(self.order)
        local = np.einsum("ij,pj...->pi...", C, values)
        local = local * self.half.reshape(self.half.shape + (1,) * (values.ndim - 2))
        offsets = self.at_breaks(values)[:-1]
        return local + offsets[:, None]


def adaptive_integrate(
    f,
    breaks,
    *,
    rtol: float = 1e-10,
    atol: float = 0.0,
    order: int = 16,
    max_depth: int = 30,
    return_panels: bool = False,
):
    """Integrate ``f`` over ``[breaks[0], breaks[-1]]`` to relative tolerance.

    Each panel is compared against its two halves; panels whose estimates
    disagree are bisected until the discrepancy is below
    ``max(atol, 0.1 * rtol * |panel integral|)`` (the factor guards against
    cancellation between oscillation lobes). ``f`` must be vectorised.

    With ``return_panels`` the accepted panel integrals are also returned
    as ``(left_edges, values)`` sorted by position.
    """
    x, w = _gauss(order)
    br = np.asarray(breaks, dtype=float)
    a = br[:-1]
    b = br[1:]
    acc_left = []
    acc_val = []
    for _ in range(max_depth + 1):
        if a.size == 0:
            break
        mid = 0.5 * (a + b)
        coarse = _rule(f, a, b, x, w)
        fine = _rule(f, a, mid, x, w) + _rule(f, mid, b, x, w)
        err = np.abs(fine - coarse)
        ok = err <= np.maximum(atol, 0.1 * rtol * np.abs(fine))
        acc_left.append(a[ok])
        acc_val.append(fine[ok])
        bad = ~ok
        a, b = np.concatenate([a[bad], mid[bad]]), np.concatenate([mid[bad], b[bad]])
    if a.size:
        i = int(np.argmax(b - a))
        raise QuadratureError(float(a[i]), float(b[i]), float(_rule(f, a[i:i + 1], b[i:i + 1], x, w)[0]), np.nan)
    left = np.concatenate(acc_left)
    vals = np.concatenate(acc_val)
    order_ = np.argsort(left, kind="stable")
    total = float(np.sum(vals[order_])) if not np.iscomplexobj(vals) else complex(np.sum(vals[order_]))
    if return_panels:
        return total, (left[order_], vals[order_])
    return total


def _rule(f, a, b, x, w):
    half = 0.5 * (b - a)
    nodes = a[:, None] + half[:, None] * (x[None, :] + 1.0)
    return np.sum(f(nodes) * w[None, :], axis=1) * half
