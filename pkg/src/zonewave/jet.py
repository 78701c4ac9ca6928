"""Truncated Taylor jets in one real variable.

A :class:`Jet` of order ``n`` carries a function value and its first ``n``
derivatives at one (or many, vectorised) evaluation points. Arithmetic is
exact up to truncation: the jet of ``f * g`` is computed from the jets of
``f`` and ``g`` by the Leibniz rule, compositions with elementary functions
by the usual Taylor-coefficient recurrences.

Internally coefficients are stored as normalised Taylor coefficients
``tc[k] = f^(k) / k!`` with shape ``(order + 1, *points_shape)``; the
derivative view is available through :attr:`Jet.derivs`.
"""

from __future__ import annotations

from math import factorial
from numbers import Number

import numpy as np

__all__ = ["Jet", "exp", "log", "sin", "cos", "sqrt", "value_of"]


def _factorials(n: int) -> np.ndarray:
    return np.array([float(factorial(k)) for k in range(n + 1)])


def _expand(arr: np.ndarray, ndim: int) -> np.ndarray:
    return arr.reshape(arr.shape + (1,) * ndim)


class Jet:
    """Value plus derivatives up to ``order`` at one or many points.

    Parameters
    ----------
    tc : array_like
        Normalised Taylor coefficients, shape ``(order + 1, ...)``.
    """

    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tc):
        tc = np.asarray(tc)
        if tc.ndim == 0:
            tc = tc.reshape(1)
        if not (np.issubdtype(tc.dtype, np.floating) or np.issubdtype(tc.dtype, np.complexfloating)):
            tc = tc.astype(float)
        self.tc = tc

    # construction -------------------------------------------------------

    @classmethod
    def from_derivs(cls, derivs) -> Jet:
        """Build a jet from ``[f, f', f'', ...]`` (leading axis = order)."""
        d = np.asarray(derivs)
        if not np.issubdtype(d.dtype, np.complexfloating):
            d = d.astype(float)
        fac = _expand(_factorials(d.shape[0] - 1), d.ndim - 1)
        return cls(d / fac)

    @classmethod
    def variable(cls, t, order: int) -> Jet:
        """The identity function ``t -> t`` expanded at the points ``t``."""
        t = np.asarray(t, dtype=float)
        tc = np.zeros((order + 1,) + t.shape)
        tc[0] = t
        if order >= 1:
            tc[1] = 1.0
        return cls(tc)

    @classmethod
    def constant(cls, c, order: int, shape=()) -> Jet:
        c = np.asarray(c)
        dtype = complex if np.iscomplexobj(c) else float
        tc = np.zeros((order + 1,) + np.broadcast_shapes(np.shape(c), shape), dtype=dtype)
        tc[0] = c
        return cls(tc)

    # views --------------------------------------------------------------

    @property
    def order(self) -> int:
        return self.tc.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.tc.shape[1:]

    @property
    def value(self):
        return self.tc[0]

    @property
    def derivs(self) -> np.ndarray:
        """Array ``[f, f', ..., f^(order)]``."""
        fac = _expand(_factorials(self.order), self.tc.ndim - 1)
        return self.tc * fac

    def d(self, k: int):
        """The ``k``-th derivative at the evaluation points."""
        if k > self.order:
            raise ValueError(f"derivative of order {k} requested from a jet of order {self.order}")
        return self.tc[k] * factorial(k)

    @property
    def d1(self):
        return self.d(1)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, derivs={self.derivs!r})"

    # structural ops ------------------------------------------------------

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise ValueError(f"cannot raise jet order from {self.order} to {order}")
        return Jet(self.tc[: order + 1])

    def diff(self) -> Jet:
        """Jet of the derivative; one order is consumed."""
        if self.order == 0:
            raise ValueError("cannot differentiate a jet of order 0")
        k = _expand(np.arange(1, self.order + 1, dtype=float), self.tc.ndim - 1)
        return Jet(self.tc[1:] * k)

    def conj(self) -> Jet:
        return Jet(np.conj(self.tc))

    @property
    def real(self) -> Jet:
        return Jet(self.tc.real)

    @property
    def imag(self) -> Jet:
        return Jet(self.tc.imag)

    def __getitem__(self, idx) -> Jet:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.tc[(slice(None),) + idx])

    # arithmetic ----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            n = min(self.order, other.order)
            a, b = self.tc[: n + 1], other.tc[: n + 1]
        else:
            other = np.asarray(other)
            n = self.order
            a = self.tc
            b = np.zeros((n + 1,) + other.shape, dtype=np.result_type(other, float))
            b[0] = other
        pts = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        return _lift(a, pts), _lift(b, pts)

    def _scale(self, c):
        c = np.asarray(c)
        return _lift(self.tc, np.broadcast_shapes(self.shape, c.shape)), c

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a - b)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(b - a)

    def __neg__(self):
        return Jet(-self.tc)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            a, c = self._scale(other)
            return Jet(a * c)
        a, b = self._coerce(other)
        return Jet(_cauchy(a, b))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            a, c = self._scale(other)
            return Jet(a / c)
        a, b = self._coerce(other)
        return Jet(_divide(a, b))

    def __rtruediv__(self, other):
        a, b = self._coerce(other)
        return Jet(_divide(b, a))

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        if isinstance(p, (int, np.integer)) or (isinstance(p, Number) and float(p).is_integer() and p >= 0):
            p = int(p)
            if p < 0:
                return 1.0 / (self ** (-p))
            out = Jet.constant(np.ones(self.shape), self.order)
            base = self
            while p:
                if p & 1:
                    out = out * base
                base = base * base
                p >>= 1
            return out
        return Jet(_power(self.tc, float(p)))

    def __rpow__(self, base):
        return exp(self * np.log(base))


def _lift(tc: np.ndarray, pts: tuple) -> np.ndarray:
    """Broadcast coefficients ``(order+1, *shape)`` to ``(order+1, *pts)``."""
    tc = tc.reshape((tc.shape[0],) + (1,) * (len(pts) - (tc.ndim - 1)) + tc.shape[1:])
    return np.broadcast_to(tc, (tc.shape[0],) + pts)


# coefficient recurrences --------------------------------------------------


def _cauchy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for k in range(n):
        acc = a[0] * b[k]
        for j in range(1, k + 1):
            acc = acc + a[j] * b[k - j]
        out[k] = acc
    return out


def _divide(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    q = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b, float))
    for k in range(n):
        acc = a[k]
        for j in range(1, k + 1):
            acc = acc - b[j] * q[k - j]
        q[k] = acc / b[0]
    return q


def _power(a: np.ndarray, p: float) -> np.ndarray:
    n = a.shape[0]
    y = np.zeros(a.shape, dtype=np.result_type(a, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        y[0] = a[0] ** p
        for k in range(1, n):
            acc = 0.0
            for j in range(1, k + 1):
                acc = acc + ((p + 1.0) * j - k) * a[j] * y[k - j]
            y[k] = acc / (k * a[0])
    return y


def _exp(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    e = np.zeros(a.shape, dtype=a.dtype)
    e[0] = np.exp(a[0])
    for k in range(1, n):
        acc = 0.0
        for j in range(1, k + 1):
            acc = acc + j * a[j] * e[k - j]
        e[k] = acc / k
    return e


def _log(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros(a.shape, dtype=np.result_type(a, float))
    out[0] = np.log(a[0])
    for k in range(1, n):
        acc = a[k]
        for j in range(1, k):
            acc = acc - j * out[j] * a[k - j] / k
        out[k] = acc / a[0]
    return out


def _sincos(a: np.ndarray):
    n = a.shape[0]
    s = np.zeros(a.shape, dtype=a.dtype)
    c = np.zeros(a.shape, dtype=a.dtype)
    s[0] = np.sin(a[0])
    c[0] = np.cos(a[0])
    for k in range(1, n):
        acc_s = 0.0
        acc_c = 0.0
        for j in range(1, k + 1):
            acc_s = acc_s + j * a[j] * c[k - j]
            acc_c = acc_c - j * a[j] * s[k - j]
        s[k] = acc_s / k
        c[k] = acc_c / k
    return s, c


# elementary functions dispatching on Jet / ndarray ---------------------------


def exp(x):
    return Jet(_exp(x.tc)) if isinstance(x, Jet) else np.exp(x)


def log(x):
    return Jet(_log(x.tc)) if isinstance(x, Jet) else np.log(x)


def sin(x):
    return Jet(_sincos(x.tc)[0]) if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return Jet(_sincos(x.tc)[1]) if isinstance(x, Jet) else np.cos(x)


def sqrt(x):
    return x ** 0.5 if isinstance(x, Jet) else np.sqrt(x)


def value_of(x):
    """Plain value of a jet, or the argument itself."""
    return x.value if isinstance(x, Jet) else x
