"""Decay, sharpness and scattering-limit experiments.

Two-sided estimates ``f ~ g`` are operationalised as band ratios
``max(f/g) / min(f/g)`` over sampled decades, with explicit thresholds
recorded in each :class:`VerificationReport`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoefficientModel, lambda_shape
from .diag import reconstruct_hyp
from .mat2 import M_DIAG, M_DIAG_INV, det, inv, norm
from .propagator import SolveConfig, evolve
from .zones import Zone, boundaries

__all__ = [
    "VerificationReport",
    "ModeLimit",
    "fit_slope",
    "two_sided_band",
    "theorem1_decay",
    "default_xi_grid",
    "theorem2_sharpness",
    "mode_limit",
    "ZoneViolation",
    "worker_count",
]

BAND_THRESHOLD = 10.0
SLOPE_TOL = 0.1


class ZoneViolation(ValueError):
    pass


def worker_count(workers: int | None = None) -> int:
    """Worker cap: explicit value, else ``ZONEWAVE_THREADS``, else 1."""
    if workers is None:
        env = os.environ.get("ZONEWAVE_THREADS", "").strip()
        try:
            workers = int(env) if env else 1
        except ValueError:
            raise ValueError(f"ZONEWAVE_THREADS must be a positive integer, got {env!r}") from None
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


@dataclass
class VerificationReport:
    """Named curves, slopes, band ratios and thresholded verdicts."""

    name: str
    curves: dict = field(default_factory=dict)
    fitted_slopes: dict = field(default_factory=dict)
    band_ratios: dict = field(default_factory=dict)
    pass_flags: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(f["passed"] for f in self.pass_flags.values())

    def flag(self, name: str, passed: bool, threshold, **extra) -> None:
        self.pass_flags[name] = {"passed": bool(passed), "threshold": threshold, **extra}

    def curve(self, name: str, t, value) -> None:
        self.curves[name] = {"t": np.asarray(t, dtype=float), "value": np.asarray(value, dtype=float)}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "pass_flags": self.pass_flags,
            "fitted_slopes": self.fitted_slopes,
            "band_ratios": self.band_ratios,
            "curves": {k: {"t": v["t"].tolist(), "value": v["value"].tolist()} for k, v in self.curves.items()},
            "notes": self.notes,
        }


def fit_slope(x, y) -> dict:
    """Least-squares slope of ``y`` against ``x`` with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = x.size
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(n - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(s2 / sxx) if sxx > 0 else math.inf
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "stderr": stderr}


def _band(values) -> dict:
    v = np.asarray(values, dtype=float)
    lo, hi = float(np.min(v)), float(np.max(v))
    return {"min": lo, "max": hi, "ratio": hi / lo if lo > 0 else math.inf}


def _xi_weight(xi: float) -> np.ndarray:
    return np.diag([xi / math.sqrt(1.0 + xi * xi), 1.0]).astype(complex)


# ---------------------------------------------------------------------------


def two_sided_band(
    model: CoefficientModel,
    xi: float,
    t_grid,
    zone: str | Zone,
    *,
    threshold: float = BAND_THRESHOLD,
    cfg: SolveConfig | None = None,
) -> VerificationReport:
    """Band ratio of ``||E(t, s_ref, xi)|| lambda(t) / lambda(s_ref)``.

    ``s_ref`` is the entry time of the zone (``0``, ``t1`` or ``t2``).

    Raises
    ------
    ZoneViolation
        If a grid point lies outside the named zone.
    """
    zone = zone if isinstance(zone, Zone) else Zone(str(zone).capitalize())
    zb = boundaries(model, xi)
    s_ref = {Zone.DISSIPATIVE: 0.0, Zone.INTERMEDIATE: zb.t1, Zone.HYPERBOLIC: zb.t2}[zone]
    t = np.asarray(t_grid, dtype=float)
    zones = np.atleast_1d(zb.classify(t))
    # the entry time belongs to both neighbouring zones
    bad = [float(x) for x, z in zip(t, zones) if z != zone and x != s_ref]
    if bad:
        raise ZoneViolation(f"{len(bad)} grid points are outside the {zone.value} zone for xi = {xi:g}, e.g. t = {bad[0]:.6g}")
    E = evolve(model, xi, t, s_ref, cfg)
    val = norm(E) * lambda_shape(model, t) / lambda_shape(model, s_ref)
    rep = VerificationReport("two_sided_band")
    rep.curve("norm_E_times_lambda_ratio", t, val)
    band = _band(val)
    rep.band_ratios["E"] = band
    rep.flag("band", band["ratio"] <= threshold, threshold)
    rep.notes = {"xi": xi, "zone": zone.value, "s_ref": s_ref, "t1": zb.t1, "t2": zb.t2}
    return rep


def default_xi_grid(model: CoefficientModel, t_max: float, n: int = 60, lo: float = 1e-4, hi: float = 1e2) -> np.ndarray:
    """Log-uniform grid, extended below ``lo`` when needed to reach the dissipative zone at ``t_max``."""
    reach = 0.5 * model.zone_constant * float(model.mu(t_max))
    return np.logspace(math.log10(min(lo, reach)), math.log10(hi), n)


def theorem1_decay(
    model: CoefficientModel,
    xi_grid=None,
    t_grid=None,
    *,
    threshold: float = BAND_THRESHOLD,
    slope_tol: float = SLOPE_TOL,
    weighted: bool = True,
    cfg: SolveConfig | None = None,
    workers: int | None = None,
) -> VerificationReport:
    """Decay of ``G(t) = sup_xi ||E(t, 0, xi) diag(xi/<xi>, 1)||``.

    Fits ``log G`` against ``log lambda`` (expected slope ``-1``) and
    against ``log t``; PASS when the first slope is ``-1 +- slope_tol`` and
    ``G lambda`` has band ratio at most ``threshold``. With
    ``weighted=False`` the factor ``diag(xi/<xi>, 1)`` is dropped.
    """
    t = np.logspace(2.0, 4.0, 41) if t_grid is None else np.asarray(t_grid, dtype=float)
    xis = default_xi_grid(model, float(t[-1])) if xi_grid is None else np.asarray(xi_grid, dtype=float)

    def one(xi):
        E = evolve(model, xi, t, 0.0, cfg)
        return norm(E @ _xi_weight(xi) if weighted else E)

    n_workers = worker_count(workers)
    if n_workers == 1:
        per_xi = np.array([one(xi) for xi in xis])
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_xi = np.array(list(pool.map(one, xis)))
    G = per_xi.max(axis=0)
    arg = xis[per_xi.argmax(axis=0)]
    lam = lambda_shape(model, t)
    rep = VerificationReport("theorem1_decay")
    rep.curve("G", t, G)
    rep.curve("G_times_lambda", t, G * lam)
    rep.curve("argmax_xi", t, arg)
    rep.fitted_slopes["log_G_vs_log_t"] = fit_slope(np.log(t), np.log(G))
    band = _band(G * lam)
    rep.band_ratios["G_times_lambda"] = band
    if np.ptp(np.log(lam)) < 1e-12:
        rep.flag("slope_vs_lambda", True, slope_tol, degenerate=True)
    else:
        fit = fit_slope(np.log(lam), np.log(G))
        rep.fitted_slopes["log_G_vs_log_lambda"] = fit
        rep.flag("slope_vs_lambda", abs(fit["slope"] + 1.0) <= slope_tol, slope_tol)
    rep.flag("band", band["ratio"] <= threshold, threshold)
    zones = [boundaries(model, xi) for xi in xis]
    T = float(t[-1])
    covered = {
        "dissipative": any(T <= z.t1 for z in zones),
        "intermediate": any(z.t1 < T < z.t2 for z in zones),
        "hyperbolic": any(T >= z.t2 for z in zones),
    }
    rep.notes = {
        "xi_grid": {"min": float(xis[0]), "max": float(xis[-1]), "n": int(xis.size), "spacing": "log-uniform"},
        "weighted": weighted,
        "zones_covered_at_t_max": covered,
        "sup_note": "supremum over a sampled xi grid approximates the essential supremum",
    }
    return rep


def theorem2_sharpness(
    model: CoefficientModel,
    xi0: float,
    V0,
    t_grid=None,
    *,
    threshold: float = BAND_THRESHOLD,
    lower_fraction: float = 1e-3,
    cfg: SolveConfig | None = None,
) -> VerificationReport:
    """Two-sided bound ``c <= lambda(t) ||E(t, 0, xi0) V0|| <= C``."""
    V0 = np.asarray(V0, dtype=complex).reshape(2)
    nv = float(np.linalg.norm(V0))
    if nv == 0:
        raise ValueError("V0 must be nonzero")
    t = np.logspace(1.0, 4.0, 61) if t_grid is None else np.asarray(t_grid, dtype=float)
    E = evolve(model, xi0, t, 0.0, cfg)
    val = np.linalg.norm(E @ V0, axis=-1) * lambda_shape(model, t)
    rep = VerificationReport("theorem2_sharpness")
    rep.curve("lambda_times_norm", t, val)
    band = _band(val)
    rep.band_ratios["lambda_times_norm"] = band
    rep.flag("band", band["ratio"] <= threshold, threshold)
    rep.flag("lower_bound", band["min"] >= lower_fraction * nv, lower_fraction)
    t2 = boundaries(model, xi0).t2
    span = math.log10(t[-1] / max(t2, t[0]))
    rep.flag("span_past_t2", span >= 2.0, 2.0, decades=span)
    rep.notes = {"xi0": xi0, "V0": [[float(z.real), float(z.imag)] for z in V0], "t2": t2}
    return rep


@dataclass
class ModeLimit:
    """Samples of ``W(T) = E_*(T)^{-1} E(T, 0, xi)`` on a doubling schedule."""

    xi: float
    t_xi: float
    T: np.ndarray
    W_samples: np.ndarray
    cauchy_residuals: np.ndarray
    decay_factors: np.ndarray
    det_band: dict
    report: VerificationReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def mode_limit(
    model: CoefficientModel,
    xi: float,
    T_schedule=None,
    *,
    cutoff: float = 0.1,
    factor_range: tuple = (1.0, 4.0),
    det_threshold: float = 2.0,
    tol: float = 1e-12,
    cfg: SolveConfig | None = None,
) -> ModeLimit:
    """Convergence of ``E_*^{-1}(T, xi) E(T, 0, xi)`` as ``T`` doubles.

    ``E_*(T) = lambda(t_xi)^{-1} M exp(i int_{t_xi}^T D_m) M^{-1}`` with
    ``t_xi = max(t2, 1)`` and the phases from the diagonalisation.
    """
    if xi < cutoff:
        raise ValueError(f"xi = {xi:g} is below the cutoff {cutoff:g}")
    t_xi = max(boundaries(model, xi).t2, 1.0)
    if T_schedule is None:
        k0 = max(8, int(math.ceil(math.log2(4.0 * t_xi))))
        T_schedule = 2.0 ** np.arange(k0, k0 + 9)
    T = np.asarray(T_schedule, dtype=float)
    if np.any(np.diff(T) <= 0) or T[0] <= t_xi:
        raise ValueError("T_schedule must be increasing and beyond t_xi")
    rep_h = reconstruct_hyp(model, xi, t_xi, T, tol, return_parts=True)
    E = evolve(model, xi, T, 0.0, cfg)
    lam_xi = float(lambda_shape(model, t_xi))
    expD = np.zeros((T.size, 2, 2), dtype=complex)
    expD[:, 0, 0] = np.exp(1j * rep_h.phase[:, 0])
    expD[:, 1, 1] = np.exp(1j * rep_h.phase[:, 1])
    E_star = (M_DIAG @ expD @ M_DIAG_INV) / lam_xi
    W = inv(E_star) @ E
    res = norm(np.diff(W, axis=0))
    factors = res[:-1] / res[1:]
    dets = np.abs(det(W))
    band = _band(dets)
    rep = VerificationReport("mode_limit")
    rep.curve("cauchy_residual", T[1:], res)
    rep.curve("abs_det_W", T, dets)
    rep.flag("residuals_decrease", bool(np.all(factors >= 1.0)), 1.0)
    lo, hi = factor_range
    rep.flag("decay_factor_range", bool(np.all((factors >= lo) & (factors <= hi))), [lo, hi])
    rep.flag("det_band", band["ratio"] <= det_threshold, det_threshold)
    rep.band_ratios["abs_det_W"] = band
    tail = norm(W - W[-1])[:-1] * (1.0 + T[:-1]) * xi
    rep.curve("tail_times_envelope_inverse", T[:-1], tail)
    rep.notes = {
        "xi": xi,
        "t_xi": t_xi,
        "tail_envelope_max": float(np.max(tail)) if tail.size else 0.0,
        "decay_factors": factors.tolist(),
        "reference_factors": (((1.0 + T[1:-1]) * xi) ** -1 / ((1.0 + T[2:]) * xi) ** -1).tolist(),
        "scope": "per-frequency convergence only; strong operator convergence is not sampled",
    }
    return ModeLimit(float(xi), t_xi, T, W, res, factors, band, rep)

