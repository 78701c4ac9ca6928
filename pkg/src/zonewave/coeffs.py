"""Coefficient models ``2b(t) = mu(t) + sigma(t)`` and the built-in families.

A :class:`CoefficientModel` bundles the shape part ``mu``, the oscillating
part ``sigma`` (both evaluable as plain arrays or as derivative jets), the
stabilisation scale ``Theta``, the symbol scale ``Xi``, the number ``m`` of
diagonalisation steps and the zone constant ``N``. It is the single source
of truth for one problem instance; every other module takes a model.

Families
--------
``ex31``  ``mu/(1+t)`` with ``sigma = mu(t) sin(t**alpha)``
``ex32``  ``mu/(1+t)`` with ``sigma = mu(t) sin(t/log(e+t))``
``ex33``  ``mu/(1+t)`` with ``sigma = (1+t)**-beta sin(t**alpha)``
``ex34``  ``1/((1+t) log(e+t))`` with ``sigma = mu(t) sin(t/log(e+t))``
``ex35``  compactly supported zero-mean bumps at ``t_j = j**alpha``
"""

from __future__ import annotations

import ast
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from numba import njit

from . import _kernels
from . import jet as J
from .jet import Jet
from .quadrature import _gauss, adaptive_integrate, make_breaks

__all__ = [
    "CoefficientModel",
    "ModelError",
    "CheckResult",
    "FAMILIES",
    "make_example",
    "make_custom",
    "model_from_config",
    "load_model",
    "lambda_shape",
    "mu_integral",
    "sigma_integral",
    "b_jet",
    "check_shape",
    "check_symbol_bounds",
    "check_compatibility",
    "fd_jet",
]

QUAD_RTOL = 1e-10
DEFAULT_N = 2.0


class ModelError(ValueError):
    """Invalid family, parameters or model configuration."""


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one numerical assumption check.

    ``constant`` is the reported constant (sup of the normalised quantity),
    ``threshold`` the growth factor the verdict was taken against.
    """

    name: str
    passed: bool
    constant: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "constant": float(self.constant),
            "threshold": float(self.threshold),
            **self.detail,
        }


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """One dissipation coefficient with its derived scales.

    Parameters
    ----------
    family : str
        Family id (``ex31`` .. ``ex35`` or ``custom``).
    params : dict
        Resolved family parameters.
    m : int
        Number of diagonalisation steps.
    zone_constant : float
        Zone constant ``N``.
    mu_fn, sigma_fn : callable
        ``T -> value`` where ``T`` is an array of times or a :class:`Jet`
        of the identity; written with :mod:`zonewave.jet` elementary
        functions so the same code yields values and derivative jets.
    theta_fn, xi_scale_fn : callable
        Array evaluators for ``Theta`` and ``Xi``.
    kernel, kernel_params
        Compiled ``(t, p) -> (mu, sigma)`` evaluator for the integrator.
    """

    family: str
    params: dict
    m: int
    zone_constant: float
    mu_fn: Callable
    sigma_fn: Callable
    theta_fn: Callable
    xi_scale_fn: Callable
    kernel: Any
    kernel_params: np.ndarray
    omega_inf_hint: float | None = None
    mu_integral_fn: Callable | None = None
    phase_breaks_fn: Callable | None = None
    sigma_scale: float = 1.0
    fd_jets: bool = False
    tags: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: Any = field(default_factory=threading.Lock, repr=False, compare=False)

    # evaluation -------------------------------------------------------------

    def _eval(self, fn, t, order):
        if order is None:
            t = np.asarray(t, dtype=float)
            return np.asarray(fn(t), dtype=float) * np.ones_like(t)
        if self.fd_jets:
            return fd_jet(fn, t, order)
        out = fn(Jet.variable(t, order))
        if not isinstance(out, Jet):
            out = Jet.constant(out, order, np.shape(t))
        return out

    def mu(self, t, order: int | None = None):
        """``mu(t)`` as an array, or as a jet of the given order."""
        return self._eval(self.mu_fn, t, order)

    def sigma(self, t, order: int | None = None):
        if self.sigma_scale == 0.0:
            if order is None:
                return np.zeros_like(np.asarray(t, dtype=float))
            return Jet.constant(0.0, order, np.shape(t))
        out = self._eval(self.sigma_fn, t, order)
        return out if self.sigma_scale == 1.0 else out * self.sigma_scale

    def b(self, t, order: int | None = None):
        return 0.5 * (self.mu(t, order) + self.sigma(t, order))

    def theta(self, t) -> np.ndarray:
        return np.asarray(self.theta_fn(np.asarray(t, dtype=float)), dtype=float)

    def xi_scale(self, t) -> np.ndarray:
        return np.asarray(self.xi_scale_fn(np.asarray(t, dtype=float)), dtype=float)

    @property
    def N(self) -> float:
        return self.zone_constant

    @property
    def sigma_off(self) -> bool:
        return self.sigma_scale == 0.0

    # derived models ----------------------------------------------------------

    def replace(self, **changes) -> CoefficientModel:
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__ if not f.startswith("_")}
        kw.update(changes)
        return CoefficientModel(**kw)

    def without_sigma(self) -> CoefficientModel:
        """The same shape ``mu`` with the oscillation switched off."""
        return self.replace(sigma_scale=0.0, omega_inf_hint=1.0, tags=self.tags + ("sigma-off",))

    def with_zone_constant(self, N: float) -> CoefficientModel:
        return self.replace(zone_constant=float(N))

    def to_config(self) -> dict:
        cfg = {"family": self.family, "params": _jsonable(self.params), "m": self.m, "zone_constant": self.zone_constant}
        if self.sigma_off:
            cfg["sigma_off"] = True
        return cfg

    def __repr__(self) -> str:
        return f"CoefficientModel({self.family}, params={self.params}, m={self.m}, N={self.zone_constant})"

    # cached antiderivatives ---------------------------------------------------

    def _antiderivative(self, name: str, f, breaks_fn):
        with self._lock:
            table = self._cache.get(name)
            if table is None:
                table = _Antiderivative(f, breaks_fn)
                self._cache[name] = table
        return table


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# running integrals
# ---------------------------------------------------------------------------


class _Antiderivative:
    """``F(t) = int_0^t f`` from a table of accepted adaptive panels.

    The table covers ``[0, T]`` and is rebuilt on a doubled horizon when a
    later query exceeds it. Between panel edges the remainder is a 32-point
    Gauss rule on a sub-interval of an accepted panel.
    """

    def __init__(self, f, breaks_fn):
        self.f = f
        self.breaks_fn = breaks_fn
        self.T = 0.0
        self.left = np.zeros(1)
        self.cum = np.zeros(1)
        self._lock = threading.Lock()

    def _build(self, T: float) -> None:
        br = self.breaks_fn(0.0, T)
        _, (left, vals) = adaptive_integrate(self.f, br, rtol=QUAD_RTOL, atol=1e-17 * (1.0 + T), return_panels=True)
        self.left = left
        self.cum = np.concatenate([[0.0], np.cumsum(vals)[:-1]])
        self.T = T

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("running integrals need t >= 0")
        tmax = float(np.max(t)) if t.size else 0.0
        with self._lock:
            if tmax > self.T:
                self._build(max(tmax, 2.0 * self.T, 16.0))
            left, cum = self.left, self.cum
        idx = np.clip(np.searchsorted(left, t, side="right") - 1, 0, left.size - 1)
        a = left[idx]
        x, w = _gauss(32)
        half = 0.5 * (t - a)
        nodes = a[..., None] + half[..., None] * (x + 1.0)
        part = np.sum(self.f(nodes) * w, axis=-1) * half
        return cum[idx] + part


def _smooth_breaks(a: float, b: float) -> np.ndarray:
    return make_breaks(a, b)


def mu_integral(model: CoefficientModel, t):
    """``int_0^t mu``, closed form when the family has one."""
    if model.mu_integral_fn is not None:
        return np.asarray(model.mu_integral_fn(np.asarray(t, dtype=float)), dtype=float)
    return model._antiderivative("mu", lambda s: model.mu(s), _smooth_breaks)(t)


def sigma_integral(model: CoefficientModel, t):
    """``int_0^t sigma`` by oscillation-aware adaptive quadrature.

    Panels are cut at the zeros of the family's oscillation phase (or at
    bump edges), graded geometrically and bisected until the relative
    tolerance ``1e-10`` is met on every panel.
    """
    t = np.asarray(t, dtype=float)
    if model.sigma_off:
        return np.zeros_like(t)
    pb = model.phase_breaks_fn

    def breaks(a, b):
        extra = pb(b) if pb is not None else ()
        return make_breaks(a, b, extra)

    raw = model._antiderivative("sigma", lambda s: model.sigma_fn(s) * np.ones_like(s), breaks)(t)
    return raw * model.sigma_scale


def lambda_shape(model: CoefficientModel, t):
    """``lambda(t) = exp(int_0^t mu / 2)``."""
    return np.exp(0.5 * mu_integral(model, t))


def b_jet(model: CoefficientModel, t, order: int | None = None) -> Jet:
    """Jet of ``b = (mu + sigma)/2``; order defaults to ``model.m``."""
    return model.b(t, model.m if order is None else order)


def fd_jet(fn, t, order: int, h: float = 1e-3) -> Jet:
    """Central finite-difference jet, used only for opaque user callables."""
    t = np.asarray(t, dtype=float)
    derivs = [np.asarray(fn(t), dtype=float)]
    for k in range(1, order + 1):
        # k-th central difference on a symmetric stencil, step scaled with t
        hh = h * (1.0 + np.abs(t))
        acc = 0.0
        for j in range(k + 1):
            acc = acc + (-1) ** j * math.comb(k, j) * np.asarray(fn(t + (k / 2 - j) * hh), dtype=float)
        derivs.append(acc / hh**k)
    return Jet.from_derivs(np.array(derivs))


# ---------------------------------------------------------------------------
# phase helpers
# ---------------------------------------------------------------------------


def _power_phase_zeros(alpha: float, t_max: float) -> np.ndarray:
    kmax = int(t_max**alpha / math.pi)
    k = np.arange(1, kmax + 1, dtype=float)
    return (k * math.pi) ** (1.0 / alpha)


def _log_phase_inverse(y: np.ndarray) -> np.ndarray:
    """Solve ``t / log(e + t) = y`` for ``t >= 0``."""
    y = np.asarray(y, dtype=float)
    t = y * np.log(np.e + y)
    for _ in range(3):
        t = y * np.log(np.e + t)
    for _ in range(4):
        lg = np.log(np.e + t)
        g = t / lg - y
        dg = 1.0 / lg - t / ((np.e + t) * lg**2)
        t = t - g / dg
    return t


def _log_phase_zeros(t_max: float) -> np.ndarray:
    kmax = int(t_max / math.log(math.e + t_max) / math.pi)
    return _log_phase_inverse(np.arange(1, kmax + 1, dtype=float) * math.pi)


# ---------------------------------------------------------------------------
# bump profile for the compactly supported family
# ---------------------------------------------------------------------------


def _bump_profile(x):
    """``exp(-1/(1-x^2))`` on ``|x| < 1`` (jet or array)."""
    return J.exp(-1.0 / (1.0 - x * x))


def _bump_max_slope() -> float:
    x = np.linspace(0.0, 0.999, 200001)
    q = 1.0 - x * x
    d = np.exp(-1.0 / q) * 2.0 * x / q**2
    return float(np.max(d))


_PHI_SLOPE = _bump_max_slope()


@dataclass(frozen=True)
class _Bumps:
    centers: np.ndarray
    halfw: np.ndarray
    c0: float

    def sigma(self, T):
        """``c0 d/dt phi((t - c)/h)`` summed over the (at most two) neighbours."""
        is_jet = isinstance(T, Jet)
        tv = np.asarray(J.value_of(T), dtype=float)
        out = None
        j = np.searchsorted(self.centers, tv)
        for off in (-1, 0):
            jj = j + off
            valid = (jj >= 0) & (jj < self.centers.size)
            jj = np.clip(jj, 0, max(self.centers.size - 1, 0))
            if self.centers.size == 0:
                break
            c = self.centers[jj]
            h = self.halfw[jj]
            x0 = (tv - c) / h
            active = valid & (1.0 - x0 * x0 > _kernels.BUMP_EDGE)
            # evaluate at a harmless point where inactive, then mask
            c_safe = np.where(active, c, tv)
            if is_jet:
                Tx = Jet(np.concatenate([T.tc, np.zeros((1,) + T.shape)], axis=0))
                x = (Tx - c_safe) / h
                term = (self.c0 * _bump_profile(x)).diff() * np.where(active, 1.0, 0.0)
            else:
                x = (tv - c_safe) / h
                q = 1.0 - x * x
                term = np.where(active, self.c0 * np.exp(-1.0 / q) * (-2.0 * x / q**2) / h, 0.0)
            out = term if out is None else out + term
        if out is None:
            return J.Jet.constant(0.0, T.order, T.shape) if is_jet else np.zeros_like(tv)
        return out

    def integral_exact(self, t):
        """``int_0^t sigma`` in closed form (the primitive is ``c0 phi``)."""
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.centers, t)
        out = np.zeros_like(t)
        for off in (-1, 0):
            jj = np.clip(j + off, 0, self.centers.size - 1)
            valid = (j + off >= 0) & (j + off < self.centers.size)
            x = (t - self.centers[jj]) / self.halfw[jj]
            q = 1.0 - x * x
            act = valid & (q > _kernels.BUMP_EDGE)
            out = out + np.where(act, self.c0 * np.exp(-1.0 / np.where(act, q, 1.0)), 0.0)
        return out

    def breaks(self, t_max: float) -> np.ndarray:
        lo = self.centers - self.halfw
        keep = lo < t_max
        c, h = self.centers[keep], self.halfw[keep]
        return np.concatenate([c - h, c - 0.5 * h, c, c + 0.5 * h, c + h])


def _make_bumps(alpha: float, gamma: float, horizon: float) -> _Bumps:
    centers, halfw = [], []
    j = 1
    prev_edge = 0.0
    while True:
        c = float(j) ** alpha
        if c > horizon:
            break
        h = c**gamma
        # a bump whose support would overlap the previous one is skipped
        if c - h >= prev_edge:
            centers.append(c)
            halfw.append(h)
            prev_edge = c + h
        j += 1
    return _Bumps(np.array(centers), np.array(halfw), 0.99 / _PHI_SLOPE)


# ---------------------------------------------------------------------------
# family registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilyInfo:
    name: str
    description: str
    defaults: dict
    ranges: str


FAMILIES: dict[str, FamilyInfo] = {
    "ex31": FamilyInfo(
        "ex31", "mu/(1+t), sigma = mu(t) sin(t^alpha); m = 1", {"mu": 0.4, "alpha": 0.5}, "mu in (0, 1/2), alpha in (0, 1)"
    ),
    "ex32": FamilyInfo(
        "ex32",
        "mu/(1+t), sigma = mu(t) sin(t/log(e+t)); symbol and compatibility conditions fail",
        {"mu": 0.4},
        "mu in (0, 1/2)",
    ),
    "ex33": FamilyInfo(
        "ex33",
        "mu/(1+t), sigma = (1+t)^-beta sin(t^alpha); m = 1",
        {"mu": 0.4, "alpha": 0.5, "beta": 1.2},
        "mu in (0, 1/2), alpha, beta > 0, 1 < alpha + beta < 2, beta >= 1",
    ),
    "ex34": FamilyInfo(
        "ex34", "1/((1+t) log(e+t)), sigma = mu(t) sin(t/log(e+t)); m = 1", {}, "no parameters"
    ),
    "ex35": FamilyInfo(
        "ex35",
        "zero-mean bumps at t_j = j^alpha with half-width t_j^gamma; any m",
        {"alpha": 3.0, "m": 2, "mu": 0.4, "shape": "ex31", "horizon": 1e8},
        "alpha > 1, integer m >= 1, shape in {ex31, ex34}",
    ),
}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelError(msg)


def _resolve(family: str, params: dict | None) -> dict:
    if family not in FAMILIES:
        raise ModelError(f"unknown family {family!r}; choose one of {', '.join(FAMILIES)} or 'custom'")
    p = dict(FAMILIES[family].defaults)
    for k, v in (params or {}).items():
        if k not in p:
            raise ModelError(f"family {family} has no parameter {k!r} (known: {', '.join(p) or 'none'})")
        p[k] = v
    return p


def _mu_ratio(mu0):
    return lambda T: mu0 / (1.0 + T)


def _mu_log(T):
    return 1.0 / ((1.0 + T) * J.log(np.e + T))


def make_example(
    family: str,
    params: dict | None = None,
    *,
    m: int | None = None,
    zone_constant: float = DEFAULT_N,
) -> CoefficientModel:
    """Build a built-in family with validated parameters.

    Parameters
    ----------
    family : {'ex31', 'ex32', 'ex33', 'ex34', 'ex35'}
    params : dict, optional
        Overrides of the family defaults (see :data:`FAMILIES`).
    m : int, optional
        Number of diagonalisation steps; defaults to the family's value
        (``params['m']`` for ``ex35``).
    zone_constant : float
        The zone constant ``N``.

    Raises
    ------
    ModelError
        On unknown family or a violated parameter condition; the message
        names the condition.
    """
    p = _resolve(family, params)
    _require(zone_constant > 0, f"zone_constant must be positive, got {zone_constant}")
    tags: tuple = ()
    if family in ("ex31", "ex32", "ex33") or (family == "ex35" and p["shape"] == "ex31"):
        mu0 = float(p["mu"])
        _require(0.0 < mu0 < 0.5, f"condition mu in (0, 1/2) violated: mu = {mu0}")

    if family == "ex31":
        a = float(p["alpha"])
        _require(0.0 < a < 1.0, f"condition alpha in (0, 1) violated: alpha = {a}")
        mu_fn = _mu_ratio(mu0)
        model = dict(
            m=1,
            mu_fn=mu_fn,
            sigma_fn=lambda T: mu_fn(T) * J.sin(T**a),
            theta_fn=lambda t: mu0 + t ** (1.0 - a),
            xi_scale_fn=lambda t: (1.0 + t) ** (1.0 - 0.5 * a),
            kernel=_kernels.ex31_kernel,
            kernel_params=np.array([mu0, a]),
            mu_integral_fn=lambda t: mu0 * np.log1p(t),
            phase_breaks_fn=lambda tm: _power_phase_zeros(a, tm),
        )
    elif family == "ex32":
        mu_fn = _mu_ratio(mu0)
        model = dict(
            m=1,
            mu_fn=mu_fn,
            sigma_fn=lambda T: mu_fn(T) * J.sin(T / J.log(np.e + T)),
            theta_fn=lambda t: mu0 * np.log(np.e + t) ** 2,
            xi_scale_fn=lambda t: mu0 * np.log(np.e + t) ** 2,
            kernel=_kernels.ex32_kernel,
            kernel_params=np.array([mu0]),
            mu_integral_fn=lambda t: mu0 * np.log1p(t),
            phase_breaks_fn=_log_phase_zeros,
        )
        tags = ("fails (4)/(5)",)
    elif family == "ex33":
        a, be = float(p["alpha"]), float(p["beta"])
        _require(a > 0 and be > 0, f"condition alpha, beta > 0 violated: alpha = {a}, beta = {be}")
        _require(1.0 < a + be < 2.0, f"condition 1 < alpha + beta < 2 violated: alpha + beta = {a + be}")
        _require(be >= 1.0, f"condition beta >= 1 violated: beta = {be}")
        mu_fn = _mu_ratio(mu0)
        model = dict(
            m=1,
            mu_fn=mu_fn,
            sigma_fn=lambda T: (1.0 + T) ** (-be) * J.sin(T**a),
            theta_fn=lambda t: mu0 + t ** (2.0 - a - be),
            xi_scale_fn=lambda t: (1.0 + t) ** (0.5 * (1.0 + be - a)),
            kernel=_kernels.ex33_kernel,
            kernel_params=np.array([mu0, a, be]),
            mu_integral_fn=lambda t: mu0 * np.log1p(t),
            phase_breaks_fn=lambda tm: _power_phase_zeros(a, tm),
        )
    elif family == "ex34":
        model = dict(
            m=1,
            mu_fn=_mu_log,
            sigma_fn=lambda T: _mu_log(T) * J.sin(T / J.log(np.e + T)),
            # log(e + 0) = 1 = mu(0), so the normalisation holds as is
            theta_fn=lambda t: np.log(np.e + t),
            xi_scale_fn=lambda t: np.sqrt(1.0 + t) * np.log(np.e + t),
            kernel=_kernels.ex34_kernel,
            kernel_params=np.array([0.0]),
            mu_integral_fn=None,
            phase_breaks_fn=_log_phase_zeros,
        )
    elif family == "ex35":
        a = float(p["alpha"])
        mm = int(p["m"])
        _require(a > 1.0, f"condition alpha > 1 violated: alpha = {a}")
        _require(mm >= 1 and mm == p["m"], f"condition integer m >= 1 violated: m = {p['m']}")
        _require(p["shape"] in ("ex31", "ex34"), f"shape must be 'ex31' or 'ex34', got {p['shape']!r}")
        horizon = float(p["horizon"])
        _require(horizon >= 1.0, f"horizon must be >= 1, got {horizon}")
        gamma = 1.0 / (mm + 1) + mm / (a * (mm + 1))
        bumps = _make_bumps(a, gamma, horizon)
        if p["shape"] == "ex31":
            mu_fn = _mu_ratio(mu0)
            mu00 = mu0
            mu_int = lambda t: mu0 * np.log1p(t)  # noqa: E731
        else:
            mu_fn = _mu_log
            mu00 = 1.0
            mu_int = None
        kp = np.concatenate(
            [[0.0 if p["shape"] == "ex31" else 1.0, mu00, bumps.c0, bumps.centers.size], bumps.centers, bumps.halfw]
        )
        model = dict(
            m=mm,
            mu_fn=mu_fn,
            sigma_fn=bumps.sigma,
            theta_fn=lambda t: mu00 + t ** (1.0 / a),
            xi_scale_fn=lambda t: (1.0 + t) ** gamma,
            kernel=_kernels.ex35_kernel,
            kernel_params=kp,
            mu_integral_fn=mu_int,
            phase_breaks_fn=bumps.breaks,
            omega_inf_hint=1.0,
        )
        p = dict(p, gamma=gamma)
        if not a > 2.0 + 1.0 / mm:
            tags = (f"stabilisation (3) needs alpha > 2 + 1/m = {2.0 + 1.0 / mm:g}",)
        model["_bumps"] = bumps
    else:  # pragma: no cover - guarded by _resolve
        raise ModelError(family)

    bumps = model.pop("_bumps", None)
    if m is not None:
        _require(int(m) >= 1, f"m must be a positive integer, got {m}")
        model["m"] = int(m)
    cm = CoefficientModel(family=family, params=p, zone_constant=float(zone_constant), tags=tags, **model)
    if bumps is not None:
        cm._cache["bumps"] = bumps
    return cm


# ---------------------------------------------------------------------------
# user-defined models
# ---------------------------------------------------------------------------

_ALLOWED_FUNCS = {"exp", "log", "sin", "cos", "sqrt"}
_ALLOWED_NAMES = {"t", "pi", "e"}
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _parse_expr(src: str) -> ast.Expression:
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ModelError(f"expression {src!r} uses unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS) or len(node.args) != 1:
                raise ModelError(f"expression {src!r}: only {sorted(_ALLOWED_FUNCS)} with one argument are allowed")
        elif isinstance(node, ast.Name) and node.id not in _ALLOWED_NAMES | _ALLOWED_FUNCS:
            raise ModelError(f"expression {src!r}: unknown name {node.id!r} (allowed: t, pi, e)")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ModelError(f"expression {src!r}: only numeric constants are allowed")
    return tree


def _expr_fn(src: str):
    code = compile(_parse_expr(src), "<expr>", "eval")
    ns = {"exp": J.exp, "log": J.log, "sin": J.sin, "cos": J.cos, "sqrt": J.sqrt, "pi": math.pi, "e": math.e}

    def f(T):
        return eval(code, {"__builtins__": {}}, dict(ns, t=T))

    return f


class _Piecewise:
    """Piecewise function from ``[{'until': t_i, 'expr': ..., 'derivs': [...]}, ...]``.

    With explicit ``derivs`` the jet is assembled from those expressions;
    otherwise the expression itself is propagated through jet arithmetic.
    """

    def __init__(self, spec):
        if isinstance(spec, str):
            spec = [{"expr": spec}]
        if isinstance(spec, dict):
            spec = [spec]
        self.pieces = []
        for i, piece in enumerate(spec):
            if "expr" not in piece:
                raise ModelError(f"piece {i} has no 'expr'")
            until = float(piece.get("until", math.inf))
            derivs = [_expr_fn(s) for s in piece.get("derivs", [])]
            self.pieces.append((until, _expr_fn(piece["expr"]), derivs, piece))
        ends = [p[0] for p in self.pieces]
        if ends != sorted(ends) or ends[-1] != math.inf:
            raise ModelError("pieces must have increasing 'until' and the last one must be open-ended")
        self.ends = np.array(ends[:-1])

    def __call__(self, T):
        is_jet = isinstance(T, Jet)
        tv = np.asarray(J.value_of(T), dtype=float)
        which = np.searchsorted(self.ends, tv, side="right")
        if is_jet:
            out = np.zeros(T.tc.shape)
        else:
            out = np.zeros(tv.shape)
        for i, (_, f, derivs, _) in enumerate(self.pieces):
            sel = which == i
            if not np.any(sel):
                continue
            if is_jet:
                Ti = T[sel] if T.shape else T
                if derivs and len(derivs) >= T.order:
                    vals = [np.asarray(f(Ti.value)) * np.ones(Ti.shape)]
                    vals += [np.asarray(d(Ti.value)) * np.ones(Ti.shape) for d in derivs[: T.order]]
                    piece_tc = Jet.from_derivs(np.array(vals)).tc
                else:
                    r = f(Ti)
                    piece_tc = r.tc if isinstance(r, Jet) else Jet.constant(r, T.order, Ti.shape).tc
                if T.shape:
                    out[:, sel] = piece_tc
                else:
                    out = piece_tc
            else:
                r = np.asarray(f(tv[sel] if tv.shape else tv), dtype=float)
                if tv.shape:
                    out[sel] = r
                else:
                    out = r * 1.0
        return Jet(out) if is_jet else out


def _python_kernel(mu_fn, sigma_fn):
    def kernel(t, p):
        return float(mu_fn(np.float64(t))), float(sigma_fn(np.float64(t)))

    return kernel


_KERNEL_NAMESPACE = {
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "pi": math.pi,
    "e": math.e,
}


def _piecewise_source(pw: _Piecewise, var: str) -> list[str]:
    lines = []
    for i, (until, _, _, piece) in enumerate(pw.pieces):
        # re-emit the validated tree rather than the raw user string
        expr = ast.unparse(_parse_expr(piece["expr"]))
        if len(pw.pieces) == 1:
            return [f"    {var} = {expr}"]
        head = "if" if i == 0 else "elif"
        lines.append(f"    {head} t < {until!r}:" if math.isfinite(until) else "    else:")
        lines.append(f"        {var} = {expr}")
    return lines


def _compiled_kernel(mu_pw: _Piecewise, sigma_pw: _Piecewise):
    """Jitted ``kernel(t, p)`` for whitelisted expressions, or ``None`` if numba rejects it."""
    src = "\n".join(
        ["def kernel(t, p):"]
        + _piecewise_source(mu_pw, "mu")
        + _piecewise_source(sigma_pw, "sigma")
        + ["    return float(mu), float(sigma)"]
    )
    ns = dict(_KERNEL_NAMESPACE)
    exec(compile(src, "<zonewave-kernel>", "exec"), ns)  # source built from whitelisted ASTs only
    kernel = njit(error_model="numpy", nogil=True)(ns["kernel"])
    try:
        kernel(1.0, np.zeros(1))
    except Exception:  # noqa: BLE001 - any typing failure falls back to Python
        return None
    return kernel


def make_custom(
    mu: Callable | str | list,
    sigma: Callable | str | list,
    theta: Callable | str,
    xi_scale: Callable | str,
    *,
    m: int = 1,
    zone_constant: float = DEFAULT_N,
    omega_inf_hint: float | None = None,
    name: str = "custom",
    config: dict | None = None,
) -> CoefficientModel:
    """User-defined model.

    ``mu`` and ``sigma`` may be expression strings in ``t`` (functions
    ``exp, log, sin, cos, sqrt``), piecewise lists of such pieces, or
    Python callables. Callables cannot be differentiated exactly, so the
    model falls back to finite-difference jets and is tagged ``fd-jets``.
    """
    opaque = callable(mu) or callable(sigma)
    mu_fn = mu if callable(mu) else _Piecewise(mu)
    sigma_fn = sigma if callable(sigma) else _Piecewise(sigma)
    theta_fn = theta if callable(theta) else _vectorize_expr(theta)
    xi_fn = xi_scale if callable(xi_scale) else _vectorize_expr(xi_scale)
    tags = ("fd-jets",) if opaque else ()
    _require(int(m) >= 1, f"m must be a positive integer, got {m}")
    mu_v = lambda T: mu_fn(T) if isinstance(T, Jet) else np.asarray(mu_fn(T), dtype=float)  # noqa: E731
    kernel = None if opaque else _compiled_kernel(mu_fn, sigma_fn)
    if kernel is None:
        kernel = _python_kernel(lambda t: J.value_of(mu_fn(t)), lambda t: J.value_of(sigma_fn(t)))
    return CoefficientModel(
        family=name,
        params=config or {},
        m=int(m),
        zone_constant=float(zone_constant),
        mu_fn=mu_v,
        sigma_fn=sigma_fn,
        theta_fn=theta_fn,
        xi_scale_fn=xi_fn,
        kernel=kernel,
        kernel_params=np.zeros(1),
        omega_inf_hint=omega_inf_hint,
        fd_jets=opaque,
        tags=tags,
    )


def _vectorize_expr(src: str):
    f = _expr_fn(src)
    return lambda t: np.asarray(f(np.asarray(t, dtype=float)), dtype=float) * np.ones_like(t)


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------


def model_from_config(cfg: dict) -> CoefficientModel:
    """Build a model from a JSON-style dictionary.

    Built-in: ``{"family": "ex31", "params": {...}, "m": 1, "zone_constant": 2.0}``.
    Custom: ``{"family": "custom", "mu": <expr or pieces>, "sigma": ...,
    "theta": <expr>, "xi_scale": <expr>, "m": 1}``.
    """
    if not isinstance(cfg, dict):
        raise ModelError("model config must be a JSON object")
    if "family" not in cfg:
        raise ModelError("model config needs a 'family' key")
    known = {"family", "params", "m", "zone_constant", "sigma_off", "mu", "sigma", "theta", "xi_scale", "omega_inf_hint"}
    extra = set(cfg) - known
    if extra:
        raise ModelError(f"unknown model config keys: {', '.join(sorted(extra))}")
    N = float(cfg.get("zone_constant", DEFAULT_N))
    if cfg["family"] == "custom":
        for key in ("mu", "sigma", "theta", "xi_scale"):
            if key not in cfg:
                raise ModelError(f"custom model needs {key!r}")
        model = make_custom(
            cfg["mu"],
            cfg["sigma"],
            cfg["theta"],
            cfg["xi_scale"],
            m=int(cfg.get("m", 1)),
            zone_constant=N,
            omega_inf_hint=cfg.get("omega_inf_hint"),
            config={k: cfg[k] for k in ("mu", "sigma", "theta", "xi_scale")},
        )
    else:
        model = make_example(cfg["family"], cfg.get("params"), m=cfg.get("m"), zone_constant=N)
    if cfg.get("sigma_off"):
        model = model.without_sigma()
    return model


def load_model(path) -> CoefficientModel:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_config(cfg)


# ---------------------------------------------------------------------------
# assumption checks (1), (4), (5)
# ---------------------------------------------------------------------------


def _top_vs_early(t: np.ndarray, q: np.ndarray, decades: float = 2.0, factor: float = 2.0):
    """Max of ``q`` on the top ``decades`` against the max before them."""
    cut = t[-1] / 10.0**decades
    top = float(np.max(q[t >= cut]))
    early = float(np.max(q[t < cut]))
    return top, early, top <= factor * early + 1e-300


def check_shape(model: CoefficientModel, t_max: float = 1e6, n: int = 2000) -> CheckResult:
    """Assumption (1) plus the Theta normalisation and monotonicity."""
    t = np.concatenate([[0.0], np.logspace(-3, math.log10(t_max), n)])
    mu = model.mu(t, 1)
    top = t >= t_max / 10.0
    tmu = float(np.max(t[top] * mu.value[top]))
    th = model.theta(t)
    ok = {
        "mu_positive": bool(np.all(mu.value > 0)),
        "mu_decreasing": bool(np.all(mu.d1 < 0)),
        "limsup_t_mu_below_1": tmu < 1.0,
        "theta_normalised": abs(float(th[0]) - float(mu.value[0])) <= 1e-12,
        "theta_nondecreasing": bool(np.all(np.diff(th) >= 0)),
    }
    return CheckResult("(1)", all(ok.values()), tmu, 1.0, {"parts": ok})


def check_symbol_bounds(
    model: CoefficientModel, t_max: float = 1e6, per_decade: int = 400, factor: float = 2.0
) -> CheckResult:
    """Assumption (4): ``|b^(k)| Xi^(k+1)`` bounded for ``k = 1..m``.

    Boundedness is certified by a finite-horizon proxy: the sup over the
    top two decades of ``[1, t_max]`` may not exceed ``factor`` times the
    sup over the earlier part. Also reports ``c = min Xi/Theta``.
    """
    nd = math.log10(t_max)
    t = np.logspace(0.0, nd, int(per_decade * nd) + 1)
    if model.phase_breaks_fn is not None:
        # the oscillation's own breakpoints and their midpoints catch narrow features
        br = np.unique(model.phase_breaks_fn(t_max))
        br = br[(br >= 1.0) & (br <= t_max)]
        t = np.unique(np.concatenate([t, br, 0.5 * (br[1:] + br[:-1])]))
    bj = model.b(t, model.m)
    xi = model.xi_scale(t)
    consts, passed = {}, True
    for k in range(1, model.m + 1):
        q = np.abs(bj.d(k)) * xi ** (k + 1)
        top, early, ok = _top_vs_early(t, q, factor=factor)
        consts[f"C_{k}"] = max(top, early)
        consts[f"C_{k}_top"] = top
        passed = passed and ok
    ratio = xi / model.theta(t)
    c = float(np.min(ratio))
    passed = passed and c > 0
    return CheckResult("(4)", bool(passed), max(consts.values()), factor, {"constants": consts, "xi_over_theta_min": c})


def check_compatibility(
    model: CoefficientModel, t_max: float = 1e6, upper: float = 1e8, factor: float = 2.0
) -> CheckResult:
    """Assumption (5): ``int_t^upper Xi^(-m-1) <= C Theta(t)^(-m)``.

    The ratio is sampled on a dyadic grid of ``[1, t_max]``; PASS when the
    sup over the top two decades is at most ``factor`` times the earlier sup.
    """
    m = model.m
    t = 2.0 ** np.arange(0, int(math.log2(t_max)) + 1)
    f = lambda s: model.xi_scale(s) ** (-m - 1.0)  # noqa: E731
    pts = np.concatenate([t, [upper]])
    seg = np.array([adaptive_integrate(f, make_breaks(a, b), rtol=1e-10) for a, b in zip(pts[:-1], pts[1:])])
    tails = np.cumsum(seg[::-1])[::-1]
    ratio = tails * model.theta(t) ** m
    top, early, ok = _top_vs_early(t, ratio, factor=factor)
    return CheckResult(
        "(5)", bool(ok), max(top, early), factor, {"ratio_top": top, "ratio_early": early, "upper": upper}
    )
