"""Stabilisation of the oscillating part and its calculus.

``f`` stabilises to ``alpha`` when ``int_0^t |f - alpha| = o(t)``. An
``o(t)`` statement cannot be certified on a finite horizon, so every check
here uses an explicit proxy (recorded together with its threshold) and
returns the raw curve it was based on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coeffs import (
    CheckResult,
    CoefficientModel,
    check_compatibility,
    check_shape,
    check_symbol_bounds,
    sigma_integral,
)
from .quadrature import PanelGrid, make_breaks

__all__ = [
    "StabilizationError",
    "OmegaEstimate",
    "StabilizationReport",
    "Residual",
    "estimate_omega_inf",
    "stabilization_functional",
    "stabilizes_to",
    "check_zero_mean",
    "assumption_report",
    "SYNTHETIC",
    "calculus_properties",
]

DECADE_FACTOR = 2.0
INCREMENT_FACTOR = 0.9
BAND_FACTOR = 2.0


class StabilizationError(RuntimeError):
    """The running integral of ``sigma`` shows no stabilising trend."""


def _sigma_grid(model: CoefficientModel, a: float, b: float, t_points=(), max_panels: int = 400_000) -> PanelGrid:
    extra = [model.phase_breaks_fn(b)] if model.phase_breaks_fn is not None else []
    extra.append(np.asarray(t_points, dtype=float))
    br = make_breaks(a, b, np.concatenate(extra) if extra else ())
    if br.size > max_panels:
        raise ValueError(f"{br.size} panels needed on [{a:g}, {b:g}]; reduce the horizon")
    return PanelGrid(br, order=16)


@dataclass(frozen=True)
class OmegaEstimate:
    """``omega_inf`` with the diagnostics behind it."""

    value: float
    estimate: float
    hint: float | None
    discrepancy: float | None
    residual_trend: list
    stabilising: bool

    def to_dict(self) -> dict:
        return {
            "omega_inf": self.value,
            "estimate": self.estimate,
            "hint": self.hint,
            "discrepancy": self.discrepancy,
            "residual_trend": self.residual_trend,
            "stabilising": self.stabilising,
        }


def estimate_omega_inf(model: CoefficientModel, horizon: float = 1e6, *, full: bool = False):
    """``exp(L)`` with ``L`` the Cesaro-type limit of ``int_0^t sigma``.

    ``L`` is the average of the running integral over the log-uniform
    window ``[horizon/10, horizon]``. When the model carries an analytic
    hint, the hint is returned and the discrepancy recorded.

    Raises
    ------
    StabilizationError
        If the running integral's residual against ``L`` does not decrease
        over the last decades and no hint is available.
    """
    if horizon < 1e3:
        raise ValueError(f"horizon must be >= 1e3, got {horizon:g}")
    if model.sigma_off:
        est = OmegaEstimate(1.0, 1.0, model.omega_inf_hint, 0.0, [0.0, 0.0, 0.0], True)
        return est if full else est.value
    grid = _sigma_grid(model, horizon / 10.0, horizon)
    I = sigma_integral(model, grid.nodes)
    L = float(grid.integrate(I / grid.nodes)) / math.log(10.0)
    # per decade [10^-k H, 10^(1-k) H], k = 3, 2, 1: mean |I - L| and the log-window mean of I
    trend, means = [], []
    for k in (3, 2, 1):
        g = _sigma_grid(model, horizon * 10.0**-k, horizon * 10.0 ** (1 - k))
        Ik = sigma_integral(model, g.nodes)
        trend.append(float(g.integrate(np.abs(Ik - L))) / (g.breaks[-1] - g.breaks[0]))
        means.append(float(g.integrate(Ik / g.nodes)) / math.log(10.0))
    # a divergent running integral (e.g. log t) has decreasing deviations from L
    # but decade means that keep moving by a fixed amount
    inc_early, inc_late = abs(means[1] - means[0]), abs(means[2] - means[1])
    settling = inc_late <= INCREMENT_FACTOR * inc_early or inc_late <= 1e-9
    stabilising = (trend[2] <= trend[1] <= trend[0] and settling) or trend[2] <= 1e-12
    estimate = math.exp(L)
    hint = model.omega_inf_hint
    if hint is not None:
        value, disc = float(hint), abs(estimate - hint) / hint
    else:
        if not stabilising:
            raise StabilizationError(
                "running integral of sigma does not stabilise: mean deviation per decade "
                + " -> ".join(f"{v:.3g}" for v in trend)
                + f"; decade means move by {inc_early:.3g} then {inc_late:.3g}"
            )
        value, disc = estimate, None
    est = OmegaEstimate(value, estimate, hint, disc, trend, stabilising)
    return est if full else est.value


@dataclass
class StabilizationReport:
    """``S(t) = int_0^t |exp(int_0^s sigma) - omega| ds`` and its ratio to ``Theta``."""

    omega_inf: float
    t: np.ndarray
    S_curve: np.ndarray
    ratio_curve: np.ndarray
    zero_mean_sup: float
    passed: bool
    threshold: float
    band: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "omega_inf": self.omega_inf,
            "zero_mean_sup": self.zero_mean_sup,
            "t": self.t.tolist(),
            "S_curve": self.S_curve.tolist(),
            "ratio_curve": self.ratio_curve.tolist(),
            "pass": bool(self.passed),
            "threshold": self.threshold,
            **self.band,
        }


def stabilization_functional(
    model: CoefficientModel,
    omega: float,
    t_grid,
    *,
    scale=None,
    threshold: float = BAND_FACTOR,
) -> StabilizationReport:
    """Stabilisation functional on ``t_grid`` with its ``Theta`` ratio.

    PASS when, over the top two decades of the grid, the largest ratio
    ``S/Theta`` is at most ``threshold`` times the smallest. ``scale`` may
    replace ``Theta`` by another normalising function.
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("t_grid must be increasing and nonnegative")
    T = float(t[-1])
    grid = _sigma_grid(model, 0.0, T, t)
    I = sigma_integral(model, grid.nodes)
    integrand = np.abs(np.exp(I) - omega)
    at = grid.at_breaks(integrand)
    S = np.interp(t, grid.breaks, at)
    S = np.maximum.accumulate(S)
    den = model.theta(t) if scale is None else np.asarray(scale(t), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, S / den, np.inf)
    top = t >= T / 100.0
    rmax, rmin = float(np.max(ratio[top])), float(np.min(ratio[top]))
    passed = rmax <= threshold * rmin or rmax <= 1e-14
    zsup = float(np.max(np.abs(I))) if I.size else 0.0
    band = {"ratio_top_max": rmax, "ratio_top_min": rmin}
    return StabilizationReport(float(omega), t, S, ratio, zsup, bool(passed), threshold, band)


@dataclass
class Residual:
    """``r(t) = (1/t) int_0^t |f - alpha|`` on a grid with its verdict."""

    t: np.ndarray
    r: np.ndarray
    passed: bool
    factors: list
    threshold: float


def stabilizes_to(
    f,
    alpha: float,
    t_grid,
    *,
    max_width: float | None = None,
    extra_breaks=(),
    threshold: float = DECADE_FACTOR,
) -> Residual:
    """Residual curve of the stabilisation ``f -> alpha``.

    PASS when ``r`` drops by at least ``threshold`` across each of the top
    two decades of ``t_grid`` (or is already below ``1e-14``).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise ValueError("t_grid must be increasing and positive")
    T = float(t[-1])
    if max_width is None:
        max_width = max(1.0, T / 200_000)
    br = make_breaks(0.0, T, np.concatenate([t, np.asarray(extra_breaks, dtype=float)]), max_width=max_width)
    grid = PanelGrid(br, order=16)
    dev = np.abs(np.asarray(f(grid.nodes)) - alpha)
    at = grid.at_breaks(dev)
    r = np.interp(t, grid.breaks, at) / t
    r_at = lambda x: float(np.interp(x, grid.breaks, at) / x)  # noqa: E731
    factors = []
    for k in (2, 1):
        hi, lo = r_at(T * 10.0 ** (1 - k)), r_at(T * 10.0**-k)
        factors.append(lo / hi if hi > 0 else math.inf)
    passed = r_at(T) <= 1e-14 or all(fac >= threshold for fac in factors)
    return Residual(t, r, bool(passed), factors, threshold)


def check_zero_mean(model: CoefficientModel, horizon: float = 1e6, factor: float = 1.01) -> CheckResult:
    """Assumption (2): ``sup |int_0^t sigma|`` does not grow in the last decade."""
    if model.sigma_off:
        return CheckResult("(2)", True, 0.0, factor)
    grid = _sigma_grid(model, 0.0, horizon)
    I = np.abs(sigma_integral(model, grid.nodes))
    late = grid.nodes >= horizon / 10.0
    s_late, s_early = float(np.max(I[late])), float(np.max(I[~late]))
    ok = s_late <= factor * s_early + 1e-12
    return CheckResult("(2)", bool(ok), max(s_late, s_early), factor, {"sup_last_decade": s_late, "sup_before": s_early})


def assumption_report(model: CoefficientModel, horizon: float = 1e6, per_decade: int = 20) -> dict:
    """Numerical verdicts on assumptions (1) to (5) for one model."""
    omega = estimate_omega_inf(model, horizon, full=True)
    nd = int(round(math.log10(horizon)))
    t = np.logspace(0.0, math.log10(horizon), per_decade * nd + 1)
    st = stabilization_functional(model, omega.value, t)
    checks = {
        "(1)": check_shape(model, horizon),
        "(2)": check_zero_mean(model, horizon),
        "(3)": CheckResult(
            "(3)", st.passed, st.band["ratio_top_max"], st.threshold, {"omega_inf": omega.to_dict(), **st.band}
        ),
        "(4)": check_symbol_bounds(model, horizon),
        "(5)": check_compatibility(model, horizon),
    }
    return {"checks": checks, "omega": omega, "stabilization": st}


# ---------------------------------------------------------------------------
# synthetic stabilising functions and the calculus of stabilisation
# ---------------------------------------------------------------------------


def _spikes(t):
    # unit spikes of width ~1 at the squares: measure o(t), no pointwise limit
    k = np.round(np.sqrt(t))
    return np.exp(-((t - k * k) ** 2))


SYNTHETIC = {
    "decay": (lambda t: 1.0 + 1.0 / (1.0 + t), 1.0),
    "damped-oscillation": (lambda t: 2.0 + np.sin(t) / (1.0 + np.sqrt(t)), 2.0),
    "sparse-spikes": (lambda t: 0.5 + _spikes(t), 0.5),
    "negative-decay": (lambda t: -1.0 + np.cos(t) / (1.0 + t), -1.0),
}


def calculus_properties(t_grid=None, functions=None) -> dict:
    """Check uniqueness, linearity, composition and Lipschitz post-composition.

    Returns ``{property: {"passed": bool, ...}}`` over the synthetic set.
    """
    t = np.logspace(0.0, 4.0, 41) if t_grid is None else np.asarray(t_grid, dtype=float)
    funcs = SYNTHETIC if functions is None else functions
    out = {}
    base = {name: stabilizes_to(f, a, t) for name, (f, a) in funcs.items()}
    out["convergence"] = {"passed": all(r.passed for r in base.values()), "per_function": {k: r.passed for k, r in base.items()}}

    uniq = {}
    for name, (f, a) in funcs.items():
        r_end = float(base[name].r[-1])
        alt = a + max(10.0 * r_end, 1e-3)
        uniq[name] = base[name].passed and not stabilizes_to(f, alt, t).passed
    out["uniqueness"] = {"passed": all(uniq.values()), "per_function": uniq}

    names = list(funcs)
    lin_ok = True
    worst = 0.0
    for i, n1 in enumerate(names):
        for n2 in names[i + 1 :]:
            (f1, a1), (f2, a2) = funcs[n1], funcs[n2]
            for c in (-2.0, 0.5, 3.0):
                r = stabilizes_to(lambda x: f1(x) + c * f2(x), a1 + c * a2, t).r
                bound = base[n1].r + abs(c) * base[n2].r
                excess = float(np.max(r - bound - 1e-12 * (1.0 + bound)))
                worst = max(worst, excess)
                lin_ok = lin_ok and excess <= 0
    out["linearity"] = {"passed": lin_ok, "max_excess": worst}

    comp = {}
    for name, (f, a) in funcs.items():
        comp[name] = (not base[name].passed) or stabilizes_to(lambda x: f(0.5 * x), a, t).passed
    out["composition"] = {"passed": all(comp.values()), "g": "t/2", "per_function": comp}

    lip_ok = True
    for name, (f, a) in funcs.items():
        sample = f(np.linspace(0.0, t[-1], 20001))
        bound_f = float(np.max(np.abs(sample)))
        for g, L in ((np.sin, 1.0), (np.square, 2.0 * max(bound_f, abs(a)))):
            r = stabilizes_to(lambda x: g(f(x)), float(g(a)), t).r
            lip_ok = lip_ok and bool(np.all(r <= L * base[name].r * (1 + 1e-12) + 1e-15))
    out["lipschitz"] = {"passed": lip_ok}
    return out
