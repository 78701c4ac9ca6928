"""Fundamental matrices by direct numerical integration.

``E(t, s, xi)`` solves ``d/dt E = i A(t, xi) E`` with ``E(s, s) = I`` and
``A = [[0, xi], [xi, 2 i b(t)]]``. Variants switch parts of ``b`` off
(``E_mu``: no oscillation, ``E_0``: free) or rescale the off-diagonal
entries (``E_hat_mu``). The dissipative-zone Picard iteration is an
independent construction used to cross-check the integrator.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from numba.core.registry import CPUDispatcher

from . import _kernels
from .coeffs import CoefficientModel, lambda_shape, mu_integral, sigma_integral
from .mat2 import I2, inv, norm
from .quadrature import PanelGrid, make_breaks

__all__ = [
    "SolveConfig",
    "IntegrationError",
    "PicardResult",
    "solve_E",
    "solve_E_mu",
    "solve_E_free",
    "solve_E_hat_mu",
    "evolve",
    "free_solution",
    "picard_dissipative",
    "lambda_tilde",
]


@dataclass(frozen=True)
class SolveConfig:
    """Tolerances of the adaptive DOP853 integrator."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 50_000_000
    checkpoints: bool = True

    def to_dict(self) -> dict:
        return {"rtol": self.rtol, "atol": self.atol, "max_steps": self.max_steps}


DEFAULT_CONFIG = SolveConfig()


class IntegrationError(RuntimeError):
    """The integrator stopped before reaching the requested time."""

    def __init__(self, reason: str, t_fail: float, xi: float):
        self.reason = reason
        self.t_fail = t_fail
        self.xi = xi
        super().__init__(f"{reason} at t = {t_fail:.17g} (xi = {xi:.17g})")


_STATUS_TEXT = {
    _kernels.STATUS_MAX_STEPS: "maximum number of steps exceeded",
    _kernels.STATUS_UNDERFLOW: "step size underflow",
}


def _run(model, xi, s, ts, *, c_mu, c_sigma, a12=1.0, a21=1.0, cfg=None, Y0=None):
    cfg = cfg or DEFAULT_CONFIG
    ts = np.ascontiguousarray(np.atleast_1d(np.asarray(ts, dtype=float)))
    if np.any(ts < 0) or s < 0:
        raise ValueError("times must be nonnegative")
    Y0 = I2.copy() if Y0 is None else np.ascontiguousarray(Y0, dtype=complex)
    kern = model.kernel
    integ = _kernels.integrate_2x2 if isinstance(kern, CPUDispatcher) else _kernels.integrate_2x2.py_func
    out, status, t_fail, nsteps = integ(
        kern,
        model.kernel_params,
        float(c_mu),
        float(c_sigma),
        float(xi),
        float(a12),
        float(a21),
        float(s),
        ts,
        Y0,
        cfg.rtol,
        cfg.atol,
        cfg.max_steps,
    )
    if status != _kernels.STATUS_OK:
        raise IntegrationError(_STATUS_TEXT[status], float(t_fail), float(xi))
    return out, int(nsteps)


def _variant(model: CoefficientModel, kind: str):
    if kind == "full":
        return 1.0, model.sigma_scale
    if kind == "mu":
        return 1.0, 0.0
    if kind == "free":
        return 0.0, 0.0
    raise ValueError(kind)


def evolve(
    model: CoefficientModel,
    xi: float,
    t_grid,
    s: float = 0.0,
    cfg: SolveConfig | None = None,
    *,
    kind: str = "full",
    return_steps: bool = False,
):
    """``E(t, s, xi)`` for every ``t`` in a monotone grid, in one sweep.

    Returns an array of shape ``(len(t_grid), 2, 2)``.
    """
    _check_xi(xi)
    c_mu, c_sig = _variant(model, kind)
    t_grid = np.asarray(t_grid, dtype=float)
    d = np.diff(t_grid)
    if not (np.all(d >= 0) or np.all(d <= 0)):
        raise ValueError("t_grid must be monotone")
    if t_grid.size and (t_grid[0] - s) * (t_grid[-1] - s) < 0:
        fwd = t_grid >= s
        a, na = _run(model, xi, s, t_grid[~fwd][::-1], c_mu=c_mu, c_sigma=c_sig, cfg=cfg)
        b, nb = _run(model, xi, s, t_grid[fwd], c_mu=c_mu, c_sigma=c_sig, cfg=cfg)
        out = np.empty((t_grid.size, 2, 2), dtype=complex)
        out[~fwd] = a[::-1]
        out[fwd] = b
        steps = na + nb
    else:
        out, steps = _run(model, xi, s, t_grid, c_mu=c_mu, c_sigma=c_sig, cfg=cfg)
    return (out, steps) if return_steps else out


def _check_xi(xi):
    if not float(xi) > 0:
        raise ValueError(f"frequency must be positive, got xi = {xi}")


class _Checkpoints:
    """Per-(xi, variant) dyadic checkpoints ``E(2^k, 0)``.

    Entries are deterministic functions of their key, so concurrent
    writers store identical values and the last write wins harmlessly.
    """

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return dict(self._store.get(key, {}))

    def put(self, key, tk, E):
        with self._lock:
            self._store.setdefault(key, {})[tk] = E


def _checkpoints(model) -> _Checkpoints:
    with model._lock:
        return model._cache.setdefault("checkpoints", _Checkpoints())


def _solve(model, xi, s, t, cfg, kind):
    _check_xi(xi)
    s, t = float(s), float(t)
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    if s == t:
        return I2.copy()
    cfg = cfg or DEFAULT_CONFIG
    c_mu, c_sig = _variant(model, kind)
    if s == 0.0 and t > 2.0 and cfg.checkpoints:
        return _solve_from_zero(model, float(xi), t, cfg, kind, c_mu, c_sig)
    out, _ = _run(model, xi, s, [t], c_mu=c_mu, c_sigma=c_sig, cfg=cfg)
    return out[0]


def _solve_from_zero(model, xi, t, cfg, kind, c_mu, c_sig):
    key = (xi, kind, c_sig, cfg.rtol, cfg.atol)
    store = _checkpoints(model)
    have = store.get(key)
    k_top = int(np.floor(np.log2(t)))
    tk = 2.0**k_top
    if tk not in have:
        known = [k for k in have if k <= tk]
        start = max(known) if known else 0.0
        E0 = have[start] if known else I2.copy()
        ks = np.arange(int(np.log2(start)) + 1 if start > 0 else 0, k_top + 1)
        grid = 2.0 ** ks.astype(float)
        grid = grid[grid > start]
        # columns of E(start, 0) are integrated forward together
        out, _ = _run(model, xi, start, grid, c_mu=c_mu, c_sigma=c_sig, cfg=cfg, Y0=E0)
        for g, E in zip(grid, out):
            store.put(key, float(g), E)
        have = store.get(key)
    if t == tk:
        return have[tk].copy()
    out, _ = _run(model, xi, tk, [t], c_mu=c_mu, c_sigma=c_sig, cfg=cfg, Y0=have[tk])
    return out[0]


def solve_E(model: CoefficientModel, xi: float, s: float, t: float, cfg: SolveConfig | None = None) -> np.ndarray:
    """Fundamental matrix ``E(t, s, xi)`` of the full system.

    Parameters
    ----------
    model : CoefficientModel
    xi : float
        Frequency ``|xi| > 0``.
    s, t : float
        Initial and final time (``t < s`` integrates backwards).
    cfg : SolveConfig, optional

    Raises
    ------
    IntegrationError
        Step-size underflow or too many steps; the failing ``t`` is reported.
    """
    return _solve(model, xi, s, t, cfg, "full")


def solve_E_mu(model: CoefficientModel, xi: float, s: float, t: float, cfg: SolveConfig | None = None) -> np.ndarray:
    """``E_mu``: the system with the oscillating part ``sigma`` removed."""
    return _solve(model, xi, s, t, cfg, "mu")


def solve_E_free(model: CoefficientModel | None, xi: float, s: float, t: float, cfg: SolveConfig | None = None):
    """``E_0`` (``b = 0``) by the integrator."""
    from .coeffs import make_example

    return _solve(model or make_example("ex31"), xi, s, t, cfg, "free")


def free_solution(xi: float, s: float, t: float) -> np.ndarray:
    """Closed form ``E_0 = cos(xi (t-s)) I + i sin(xi (t-s)) [[0,1],[1,0]]``."""
    ph = float(xi) * (float(t) - float(s))
    c, sn = np.cos(ph), np.sin(ph)
    return np.array([[c, 1j * sn], [1j * sn, c]])


def _omega_conj(omega_hat):
    # M_hat M^{-1} = diag(1, omega_hat)
    return np.diag([1.0, omega_hat]).astype(complex), np.diag([1.0, 1.0 / omega_hat]).astype(complex)


class HatMuMismatch(RuntimeError):
    pass


def solve_E_hat_mu(
    model: CoefficientModel,
    xi: float,
    s: float,
    t: float,
    omega_hat_s: float,
    cfg: SolveConfig | None = None,
    *,
    check_tol: float = 1e-8,
    return_discrepancy: bool = False,
):
    """Fundamental matrix of ``A_hat_mu = [[0, xi/w], [w xi, i mu]]``, ``w = omega_hat_s``.

    Computed by conjugating ``E_mu`` with ``M_hat(s) M^{-1} = diag(1, w)``
    and, independently, by integrating ``A_hat_mu`` directly; the two must
    agree to ``check_tol`` relative to the norm.
    """
    if not omega_hat_s > 0:
        raise ValueError(f"omega_hat_s must be positive, got {omega_hat_s}")
    _check_xi(xi)
    if s == t:
        return (I2.copy(), 0.0) if return_discrepancy else I2.copy()
    Emu = solve_E_mu(model, xi, s, t, cfg)
    P, Pinv = _omega_conj(omega_hat_s)
    conj = P @ Emu @ Pinv
    direct, _ = _run(model, xi, s, [t], c_mu=1.0, c_sigma=0.0, a12=1.0 / omega_hat_s, a21=omega_hat_s, cfg=cfg)
    disc = float(norm(direct[0] - conj) / max(norm(conj), 1e-300))
    if disc > check_tol:
        raise HatMuMismatch(f"E_hat_mu cross-check failed: relative discrepancy {disc:.3g} > {check_tol:g}")
    return (conj, disc) if return_discrepancy else conj


def lambda_tilde(model: CoefficientModel, t):
    """``exp(int_0^t b) = lambda(t) exp(int_0^t sigma / 2)``."""
    return lambda_shape(model, t) * np.exp(0.5 * sigma_integral(model, t))


@dataclass
class PicardResult:
    """Picard iterate at ``t`` with the per-iteration endpoint deltas."""

    E: np.ndarray
    deltas: list
    iterations: int
    contracting: bool
    v_second_column: complex


class NonContractionError(RuntimeError):
    pass


def picard_dissipative(
    model: CoefficientModel,
    xi: float,
    t: float,
    iterations: int = 8,
    *,
    order: int = 16,
    raise_on_growth: bool = True,
) -> PicardResult:
    """Dissipative-zone construction of ``E(t, 0, xi)`` by Picard iteration.

    Each column ``(v, w)`` with initial datum ``eta`` solves

    ``v(t) = eta_1 + i xi int_0^t w``,
    ``w(t) = lt(t)^-2 (eta_2 + i xi int_0^t lt^2 v)``,  ``lt = exp(int b)``,

    iterated on a Gauss-Legendre panel grid cut at the oscillation
    breakpoints. Deltas are the max-norm changes of the endpoint matrix.

    Raises
    ------
    NonContractionError
        If the deltas grow, which signals a point outside the zone.
    """
    _check_xi(xi)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    t = float(t)
    if t == 0.0:
        return PicardResult(I2.copy(), [0.0], 0, True, 0j)
    extra = model.phase_breaks_fn(t) if model.phase_breaks_fn is not None else ()
    grid = PanelGrid(make_breaks(0.0, t, extra, max_width=max(t / 64.0, 0.25)), order=order)
    nodes = grid.nodes

    def log_lt2(x):
        return mu_integral(model, x) + sigma_integral(model, x)

    lt2 = np.exp(log_lt2(nodes))
    lt2_end = float(np.exp(log_lt2(np.array([t]))[0]))
    E = np.zeros((2, 2), dtype=complex)
    deltas = []
    contracting = True
    for col, eta in enumerate(((1.0, 0.0), (0.0, 1.0))):
        v = np.full(nodes.shape, eta[0], dtype=complex)
        w = eta[1] / lt2 + 0j
        end = np.array([eta[0], eta[1] / lt2_end], dtype=complex)
        col_deltas = []
        for _ in range(iterations):
            v_new = eta[0] + 1j * xi * grid.cumulative(w)
            v_end = eta[0] + 1j * xi * grid.integrate(w)
            w_new = (eta[1] + 1j * xi * grid.cumulative(lt2 * v)) / lt2
            w_end = (eta[1] + 1j * xi * grid.integrate(lt2 * v)) / lt2_end
            v, w = v_new, w_new
            new_end = np.array([v_end, w_end])
            col_deltas.append(float(np.max(np.abs(new_end - end))))
            end = new_end
        E[:, col] = end
        deltas.append(col_deltas)
        tail = [d for d in col_deltas if d > 1e-15 * max(1.0, float(np.max(np.abs(end))))]
        if len(tail) >= 3 and tail[-1] > tail[-2] > tail[-3]:
            contracting = False
    if not contracting and raise_on_growth:
        raise NonContractionError(
            f"Picard deltas grow at (t, xi) = ({t:.6g}, {xi:.6g}); the point is probably outside the dissipative zone"
        )
    merged = [max(a, b) for a, b in zip(*deltas)]
    return PicardResult(E, merged, iterations, contracting, complex(E[0, 1]))
