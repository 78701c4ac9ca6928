"""Multi-step diagonalisation, Peano-Baker series and zone factorisations.

After ``V = M V_0`` the system reads ``D_t V_0 = (D_0 + R_0) V_0`` with
``D_0 = diag(xi + i b, -xi + i b)`` and ``R_0 = i b [[0, 1], [1, 0]]``.
Each step conjugates by ``N_k = I + [[0, -R12/delta], [R21/delta, 0]]``
(``delta = tau^+ - tau^-``), which solves ``[D_k, N_k] = -R_k``; then

``D_{k+1} + R_{k+1} = D_k - N_k^{-1} B_k``,   ``B_k = D_t N_k - R_k (N_k - I)``

with ``D_t = -i d/dt``. All symbols are jets in ``t`` at fixed ``xi``; a
step consumes one derivative order, so ``m`` steps need ``b`` to order ``m``.

With ``Ncal = N_0 ... N_{m-1}`` the propagator in the hyperbolic zone is

``E(t, s) = M Ncal(t) exp(i int_s^t D_m) Q_m(t, s) Ncal(s)^{-1} M^{-1}``

where ``Q_m`` solves ``d/dt Q = i R~ Q``, ``R~ = exp(-i Phi) R_m exp(i Phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoefficientModel, b_jet, sigma_integral
from .jet import Jet
from .mat2 import I2, M_DIAG, M_DIAG_INV, inv, norm
from .propagator import SolveConfig, evolve
from .quadrature import PanelGrid, make_breaks
from .zones import boundaries

__all__ = [
    "ZoneConstantError",
    "PeanoBakerError",
    "DiagStage",
    "NFactor",
    "HypRepresentation",
    "stage0",
    "diag_step",
    "diagonalize",
    "min_zone_constant",
    "peano_baker",
    "reconstruct_hyp",
    "im_tau_m",
    "intermediate_factorization",
    "omega_inf",
]

D_LIMIT = 0.5
PB_BOUND = 30.0


class ZoneConstantError(RuntimeError):
    """``d_k >= 1/2`` somewhere: the zone constant is too small."""

    def __init__(self, msg: str, d_max: float, min_N: float | None = None):
        self.d_max = d_max
        self.min_N = min_N
        super().__init__(msg if min_N is None else f"{msg}; minimal admissible N found: {min_N:.6g}")


class PeanoBakerError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


@dataclass
class DiagStage:
    """Symbols of stage ``k`` at a set of times.

    ``tau_plus``, ``tau_minus`` are the diagonal of ``D_k``; ``r12``, ``r21``
    the off-diagonal of ``R_k``. ``beta = r21 / i``; hypothesis (H) states
    ``r12 = i conj(beta)``, whose residual is kept in :attr:`h_residual`.
    """

    k: int
    xi: float
    t: np.ndarray
    tau_plus: Jet
    tau_minus: Jet
    r12: Jet
    r21: Jet
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.tau_plus.order

    @property
    def delta(self) -> Jet:
        return self.tau_plus - self.tau_minus

    @property
    def beta(self) -> Jet:
        return self.r21 * (-1j)

    @property
    def d(self) -> Jet:
        """``|beta|^2 / delta^2`` so that ``det N_k = 1 - d_k``."""
        beta = self.beta
        dl = self.delta
        return (beta * beta.conj()).real / (dl * dl).real

    @property
    def h_residual(self) -> float:
        dev = np.abs(self.r12.value - 1j * np.conj(self.beta.value))
        scale = np.maximum(np.abs(self.r12.value), 1e-300)
        return float(np.max(dev / scale)) if dev.size else 0.0

    def D(self) -> np.ndarray:
        out = np.zeros(np.shape(self.t) + (2, 2), dtype=complex)
        out[..., 0, 0] = self.tau_plus.value
        out[..., 1, 1] = self.tau_minus.value
        return out

    def R(self) -> np.ndarray:
        out = np.zeros(np.shape(self.t) + (2, 2), dtype=complex)
        out[..., 0, 1] = self.r12.value
        out[..., 1, 0] = self.r21.value
        return out


@dataclass
class NFactor:
    """``N_k = [[1, a], [c, 1]]`` as jets."""

    a: Jet
    c: Jet

    @property
    def det(self) -> Jet:
        return 1.0 - self.a * self.c

    def matrix(self) -> np.ndarray:
        a, c = self.a.value, self.c.value
        out = np.empty(np.shape(a) + (2, 2), dtype=complex)
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 0, 1] = a
        out[..., 1, 0] = c
        return out

    def derivative(self) -> np.ndarray:
        a, c = self.a.d1, self.c.d1
        out = np.zeros(np.shape(a) + (2, 2), dtype=complex)
        out[..., 0, 1] = a
        out[..., 1, 0] = c
        return out


def _as_complex(j: Jet) -> Jet:
    return Jet(j.tc.astype(complex))


def stage0(model: CoefficientModel, xi: float, t, order: int | None = None) -> DiagStage:
    """Stage 0: ``tau^+- = +-xi + i b``, ``beta_0 = b``, ``delta_0 = 2 xi``."""
    xi = float(xi)
    if not xi > 0:
        raise ValueError(f"frequency must be positive, got xi = {xi}")
    t = np.asarray(t, dtype=float)
    b = _as_complex(b_jet(model, t, model.m if order is None else order))
    ib = b * 1j
    return DiagStage(0, xi, t, ib + xi, ib - xi, ib, ib)


def diag_step(stage: DiagStage, *, check_d: bool = True) -> tuple[NFactor, DiagStage]:
    """One diagonalisation step ``stage_k -> (N_k, stage_{k+1})``.

    The new stage carries diagnostics: the operator-identity residual
    ``(d/dt - i(D_k+R_k)) N_k - N_k (d/dt - i(D_{k+1}+R_{k+1}))`` and the
    discrepancy against the closed-form diagonal update.

    Raises
    ------
    ValueError
        If the jets have no derivative order left.
    ZoneConstantError
        If ``d_k >= 1/2`` at any evaluation point.
    """
    if stage.order < 1:
        raise ValueError(f"stage {stage.k} has jets of order 0; no derivative left for another step")
    delta = stage.delta
    d = stage.d
    d_max = float(np.max(np.abs(d.value))) if np.size(d.value) else 0.0
    if check_d and d_max >= D_LIMIT:
        raise ZoneConstantError(f"zone constant too small: d_{stage.k} reaches {d_max:.3g} >= {D_LIMIT}", d_max)
    r12, r21 = stage.r12, stage.r21
    a = -(r12 / delta)
    c = r21 / delta
    Nk = NFactor(a, c)
    da, dc = a.diff(), c.diff()
    # truncate everything to the order that survives differentiation
    o = da.order
    a_, c_, r12_, r21_ = a.truncate(o), c.truncate(o), r12.truncate(o), r21.truncate(o)
    det = 1.0 - a_ * c_
    # B = -i dN/dt - R (N - I)
    B11 = -(r12_ * c_)
    B12 = da * (-1j)
    B21 = dc * (-1j)
    B22 = -(r21_ * a_)
    X11 = (B11 - a_ * B21) / det
    X12 = (B12 - a_ * B22) / det
    X21 = (B21 - c_ * B11) / det
    X22 = (B22 - c_ * B12) / det
    tp = stage.tau_plus.truncate(o) - X11
    tm = stage.tau_minus.truncate(o) - X22
    nxt = DiagStage(stage.k + 1, stage.xi, stage.t, tp, tm, -X12, -X21)

    # closed form of the diagonal update, written with u = beta/delta
    u = stage.beta / delta
    du = u.diff()
    u_, dd = u.truncate(o), d.diff()
    d_ = d.truncate(o)
    im_term = (u_.conj() * du).imag
    re_shift = (d_ * delta.truncate(o) - im_term) / (1.0 - d_)
    im_shift = dd / (2.0 * (d_ - 1.0))
    tp_formula = stage.tau_plus.truncate(o) - re_shift + im_shift * 1j
    tm_formula = stage.tau_minus.truncate(o) + re_shift + im_shift * 1j
    scale = np.maximum(np.abs(tp.value), 1e-300)
    formula_res = float(
        np.max(np.maximum(np.abs(tp.value - tp_formula.value), np.abs(tm.value - tm_formula.value)) / scale)
    )
    # operator identity on constant vectors
    Nv = Nk.matrix()
    lhs = Nk.derivative() - 1j * (stage.D() + stage.R()) @ Nv + 1j * Nv @ (nxt.D() + nxt.R())
    id_res = float(np.max(norm(lhs) / np.maximum(norm(stage.D()), 1.0))) if lhs.size else 0.0
    nxt.diagnostics = {
        "identity_residual": id_res,
        "formula_residual": formula_res,
        "h_residual": nxt.h_residual,
        "d_prev_max": d_max,
        "det_N_vs_d": float(np.max(np.abs(Nk.det.value - (1.0 - d.value)))) if np.size(d.value) else 0.0,
    }
    return Nk, nxt


def diagonalize(
    model: CoefficientModel, xi: float, t, m: int | None = None, *, check_d: bool = True
) -> tuple[list[DiagStage], list[NFactor]]:
    """All stages ``0..m`` and factors ``N_0..N_{m-1}`` at the times ``t``."""
    m = model.m if m is None else int(m)
    st = stage0(model, xi, t, order=m)
    stages, factors = [st], []
    for _ in range(m):
        Nk, st = diag_step(st, check_d=check_d)
        factors.append(Nk)
        stages.append(st)
    return stages, factors


def min_zone_constant(
    model: CoefficientModel, xi_grid, *, start: float | None = None, growth: float = 1.5, max_tries: int = 60
) -> float:
    """Smallest ``N`` on a geometric ladder with ``d_k < 1/2`` on the sampled hyperbolic-zone boundary."""
    N = model.zone_constant if start is None else float(start)
    for _ in range(max_tries):
        worst = 0.0
        for xi in np.atleast_1d(xi_grid):
            t2 = boundaries(model, xi, N).t2
            tt = np.array([max(t2, 1e-8)]) * np.array([1.0, 1.5, 3.0, 10.0])
            stages, _ = diagonalize(model, xi, tt, check_d=False)
            for st in stages[:-1]:
                worst = max(worst, float(np.max(np.abs(st.d.value))))
        if worst < D_LIMIT:
            return N
        N *= growth
    raise ZoneConstantError("no admissible zone constant found", worst)


def _chain_checked(model, xi, t):
    try:
        return diagonalize(model, xi, t)
    except ZoneConstantError as exc:
        try:
            n_min = min_zone_constant(model, [xi])
        except ZoneConstantError:
            n_min = None
        raise ZoneConstantError(str(exc).split(";")[0], exc.d_max, n_min) from None


# ---------------------------------------------------------------------------
# Peano-Baker series
# ---------------------------------------------------------------------------


def _pb_on_grid(grid: PanelGrid, G: np.ndarray, tol: float, max_terms: int = 400):
    """Peano-Baker sums at every breakpoint for samples ``G`` of shape ``(P, n, 2, 2)``."""
    gnorm = norm(G)
    L = float(grid.integrate(gnorm))
    if L > PB_BOUND:
        raise PeanoBakerError(
            f"integral of the generator norm is {L:.4g} > {PB_BOUND}; the series bound diverges (point outside the zone?)"
        )
    P = np.broadcast_to(I2, G.shape).copy()
    total = np.broadcast_to(I2, (grid.breaks.size, 2, 2)).copy()
    term_bound = 1.0
    k = 0
    while True:
        k += 1
        prod = G @ P
        total = total + grid.at_breaks(prod)
        term_bound *= L / k
        if term_bound * L / (k + 1) < tol or k >= max_terms:
            break
        P = grid.cumulative(prod)
    return total, L, k


def peano_baker(
    R,
    s: float,
    t: float,
    tol: float = 1e-12,
    *,
    breaks=None,
    max_width: float | None = None,
    order: int = 16,
    return_info: bool = False,
):
    """Time-ordered exponential ``Q(t)`` with ``dQ/dt = R(t) Q``, ``Q(s) = I``.

    The series ``I + int R + int R int R + ...`` is summed until the bound
    ``(int ||R||)^k / k!`` on the next term drops below ``tol``. Nested
    integrals use spectral cumulative integration on Gauss-Legendre panels;
    panels are halved until two successive refinements agree to ``tol``.

    Parameters
    ----------
    R : callable
        ``R(theta)`` for an array ``theta`` returns matrices ``(..., 2, 2)``.

    Raises
    ------
    PeanoBakerError
        If ``int ||R|| > 30``.
    """
    s, t = float(s), float(t)
    if t == s:
        return (I2.copy(), {"terms": 0, "norm_integral": 0.0, "refinement_error": 0.0}) if return_info else I2.copy()
    if t < s:
        raise ValueError("peano_baker needs t >= s")
    br = np.unique(np.concatenate([[s, t], np.asarray(breaks if breaks is not None else [], dtype=float)]))
    br = br[(br >= s) & (br <= t)]
    if max_width is None:
        max_width = (t - s) / 8.0
    br = make_breaks(s, t, br, ratio=2.0, max_width=max_width) if s > 0 else make_breaks(s, t, br, max_width=max_width)
    prev = None
    err = math.inf
    for _ in range(8):
        grid = PanelGrid(br, order=order)
        total, L, k = _pb_on_grid(grid, np.asarray(R(grid.nodes), dtype=complex), tol)
        Q = total[-1]
        if prev is not None:
            err = float(norm(Q - prev))
            if err <= tol:
                break
        prev = Q
        br = np.sort(np.concatenate([br, 0.5 * (br[1:] + br[:-1])]))
    info = {"terms": k, "norm_integral": L, "refinement_error": err}
    return (Q, info) if return_info else Q


# ---------------------------------------------------------------------------
# hyperbolic zone
# ---------------------------------------------------------------------------


def _ncal(factors: list[NFactor]) -> np.ndarray:
    out = None
    for Nk in factors:
        Mk = Nk.matrix()
        out = Mk if out is None else out @ Mk
    return out


@dataclass
class HypRepresentation:
    """Factors of ``E(t, s, xi)`` in the hyperbolic zone on a time grid.

    ``t`` are the requested times; ``Ncal_t``/``Ncal_s`` the products of the
    ``N_k``; ``phase`` the integrals ``int_s^t tau_m^+-`` (complex pair);
    ``Q`` the Peano-Baker factor; ``E`` the assembled matrices.
    """

    xi: float
    s: float
    t: np.ndarray
    stages_s: list
    Ncal_s: np.ndarray
    Ncal_t: np.ndarray
    phase: np.ndarray
    Q: np.ndarray
    E: np.ndarray
    info: dict

    def unitary_factor(self) -> np.ndarray:
        """``exp(int Im tau_m) exp(i int D_m)``; unitary by reality of ``delta_m``."""
        out = np.zeros(self.phase.shape[:-1] + (2, 2), dtype=complex)
        im = 0.5 * (self.phase[..., 0].imag + self.phase[..., 1].imag)
        out[..., 0, 0] = np.exp(1j * self.phase[..., 0] + im)
        out[..., 1, 1] = np.exp(1j * self.phase[..., 1] + im)
        return out


def _hyp_breaks(model, xi, s, T, t_points):
    extra = [np.asarray(t_points, dtype=float)]
    if model.phase_breaks_fn is not None:
        extra.append(model.phase_breaks_fn(T))
    width = min(math.pi / xi, max(T - s, 1e-12) / 4.0)
    return make_breaks(s, T, np.concatenate(extra), max_width=width)


def _hyp_build(model, xi, s, t, tol, order=16):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < s):
        raise ValueError("reconstruct_hyp needs t >= s")
    T = float(np.max(t))
    stages_s, factors_s = _chain_checked(model, xi, np.array([s]))
    Ns = _ncal(factors_s)[0] if factors_s else I2.copy()
    if T == s:
        n = t.size
        ones = np.broadcast_to(I2, (n, 2, 2)).copy()
        return HypRepresentation(xi, s, t, stages_s, Ns, ones, np.zeros((n, 2), complex), ones, ones, {"terms": 0})
    br = _hyp_breaks(model, xi, s, T, t)
    prev = None
    err = math.inf
    for _ in range(6):
        grid = PanelGrid(br, order=order)
        stages, _ = _chain_checked(model, xi, grid.nodes)
        last = stages[-1]
        tau = np.stack([last.tau_plus.value, last.tau_minus.value], axis=-1)
        Phi_nodes = grid.cumulative(tau)
        Phi_breaks = grid.at_breaks(tau)
        dphi = Phi_nodes[..., 0] - Phi_nodes[..., 1]
        G = np.zeros(grid.nodes.shape + (2, 2), dtype=complex)
        G[..., 0, 1] = 1j * np.exp(-1j * dphi) * last.r12.value
        G[..., 1, 0] = 1j * np.exp(1j * dphi) * last.r21.value
        Qb, L, k = _pb_on_grid(grid, G, tol)
        idx = np.searchsorted(grid.breaks, t)
        Q = Qb[idx]
        if prev is not None:
            err = float(np.max(norm(Q - prev)))
            if err <= 10 * tol:
                break
        prev = Q
        br = np.sort(np.concatenate([br, 0.5 * (br[1:] + br[:-1])]))
    phase = Phi_breaks[idx]
    _, factors_t = _chain_checked(model, xi, t)
    Nt = _ncal(factors_t) if factors_t else np.broadcast_to(I2, (t.size, 2, 2))
    expD = np.zeros((t.size, 2, 2), dtype=complex)
    expD[:, 0, 0] = np.exp(1j * phase[:, 0])
    expD[:, 1, 1] = np.exp(1j * phase[:, 1])
    E = M_DIAG @ Nt @ expD @ Q @ inv(Ns) @ M_DIAG_INV
    info = {"terms": k, "norm_integral": L, "refinement_error": err, "panels": grid.n_panels}
    return HypRepresentation(xi, s, t, stages_s, Ns, Nt, phase, Q, E, info)


def reconstruct_hyp(model: CoefficientModel, xi: float, s: float, t, tol: float = 1e-12, *, return_parts: bool = False):
    """``E(t, s, xi)`` assembled from the diagonalisation (hyperbolic zone).

    ``t`` may be a scalar or an array of times ``>= s``; the result is a
    matrix or a stack of matrices. With ``return_parts`` the full
    :class:`HypRepresentation` is returned.
    """
    xi = float(xi)
    rep = _hyp_build(model, xi, float(s), t, tol)
    if return_parts:
        return rep
    return rep.E[0] if np.ndim(t) == 0 else rep.E


def im_tau_m(model: CoefficientModel, xi: float, t, *, s: float | None = None, return_check: bool = False):
    """``Im tau_m`` from the stages, checked against ``b + sum_k d_k' / (2 (d_k - 1))``.

    With ``s`` given the integrated identity
    ``exp(-int_s^t Im tau_m) = exp(-int_s^t b) prod_k ((d_k(t)-1)/(d_k(s)-1))^(-1/2)``
    is also evaluated (by quadrature of the left-hand side).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    stages, _ = _chain_checked(model, xi, t_arr)
    val = stages[-1].tau_plus.value.imag
    formula = model.b(t_arr).copy()
    for st in stages[:-1]:
        d = st.d
        formula = formula + d.d1 / (2.0 * (d.value - 1.0))
    check = {"formula_residual": float(np.max(np.abs(val - formula) / np.maximum(np.abs(formula), 1e-300)))}
    if s is not None:
        check.update(_im_tau_identity(model, xi, float(s), t_arr))
    out = val[0] if np.ndim(t) == 0 else val
    return (out, check) if return_check else out


def _im_tau_identity(model, xi, s, t_arr):
    T = float(np.max(t_arr))
    br = make_breaks(s, T, np.concatenate([t_arr, model.phase_breaks_fn(T) if model.phase_breaks_fn else []]))
    prev = None
    for _ in range(10):
        grid = PanelGrid(br)
        stages, _ = _chain_checked(model, xi, grid.nodes)
        im = stages[-1].tau_plus.value.imag
        int_im = np.interp(t_arr, grid.breaks, grid.at_breaks(im))
        int_b = np.interp(t_arr, grid.breaks, grid.at_breaks(model.b(grid.nodes)))
        if prev is not None and np.max(np.abs(int_im - prev[0]) + np.abs(int_b - prev[1])) < 1e-13:
            break
        prev = (int_im, int_b)
        br = np.sort(np.concatenate([br, 0.5 * (br[1:] + br[:-1])]))
    lhs = np.exp(-int_im)
    st_t, _ = _chain_checked(model, xi, t_arr)
    st_s, _ = _chain_checked(model, xi, np.array([s]))
    prod = np.ones_like(t_arr)
    for a, b in zip(st_t[:-1], st_s[:-1]):
        prod = prod * ((a.d.value - 1.0) / (b.d.value[0] - 1.0)) ** (-0.5)
    rhs = np.exp(-int_b) * prod
    return {"identity_residual": float(np.max(np.abs(lhs / rhs - 1.0)))}


# ---------------------------------------------------------------------------
# intermediate zone
# ---------------------------------------------------------------------------


def omega_inf(model: CoefficientModel, horizon: float = 1e6) -> float:
    """``omega_inf`` (hint or estimate), cached on the model."""
    from .stabilize import estimate_omega_inf

    key = ("omega_inf", horizon)
    with model._lock:
        if key in model._cache:
            return model._cache[key]
    val = estimate_omega_inf(model, horizon)
    with model._lock:
        model._cache[key] = val
    return val


@dataclass
class IntermediateFactors:
    Lambda: np.ndarray
    Ehat: np.ndarray
    Q_R: np.ndarray
    omega_hat: float
    info: dict

    @property
    def product(self) -> np.ndarray:
        return self.Lambda @ self.Ehat @ self.Q_R


def intermediate_factorization(
    model: CoefficientModel,
    xi: float,
    s: float,
    t: float,
    tol: float = 1e-12,
    *,
    omega: float | None = None,
    cfg: SolveConfig | None = None,
    enforce_zone: bool = True,
    order: int = 16,
) -> IntermediateFactors:
    """``E(t, s, xi) = Lambda Ehat_mu Q_R`` in the intermediate zone.

    ``Lambda = diag(1, exp(-int_s^t sigma))``; ``Ehat_mu`` is the
    propagator of ``[[0, xi/w], [w xi, i mu]]`` with
    ``w = omega_inf exp(-int_0^s sigma)``; ``Q_R`` is the Peano-Baker
    factor of ``i Ehat(s, tau) (A~ - A^)(tau) Ehat(tau, s)``.

    Raises
    ------
    ValueError
        If ``xi Theta(t) > N`` (outside the zone) while ``enforce_zone``.
    PeanoBakerError
        If the series bound diverges.
    """
    xi, s, t = float(xi), float(s), float(t)
    if t < s:
        raise ValueError("intermediate_factorization needs s <= t")
    if enforce_zone and xi * float(model.theta(t)) > model.zone_constant * (1.0 + 1e-9):
        raise ValueError(
            f"xi Theta(t) = {xi * float(model.theta(t)):.6g} exceeds N = {model.zone_constant:g}: outside the intermediate zone"
        )
    w_inf = 1.0 if model.sigma_off else (omega if omega is not None else omega_inf(model))
    Is = float(sigma_integral(model, s))
    w = w_inf * math.exp(-Is)
    P, Pinv = np.diag([1.0, w]).astype(complex), np.diag([1.0, 1.0 / w]).astype(complex)
    if t == s:
        return IntermediateFactors(I2.copy(), I2.copy(), I2.copy(), w, {"terms": 0})
    Lam = np.diag([1.0, math.exp(-(float(sigma_integral(model, t)) - Is))]).astype(complex)
    extra = model.phase_breaks_fn(t) if model.phase_breaks_fn is not None else np.array([])
    width = min(math.pi / xi, (t - s) / 4.0)
    br = make_breaks(s, t, extra, max_width=width)
    prev, err = None, math.inf
    for _ in range(6):
        grid = PanelGrid(br, order=order)
        nodes = grid.nodes.ravel()
        Emu = evolve(model, xi, nodes, s, cfg, kind="mu")
        Ehat = P @ Emu @ Pinv
        Ehat_inv = inv(Ehat)
        I_st = sigma_integral(model, nodes) - Is
        diff = np.zeros((nodes.size, 2, 2), dtype=complex)
        diff[:, 0, 1] = xi * (np.exp(-I_st) - 1.0 / w)
        diff[:, 1, 0] = xi * (np.exp(I_st) - w)
        G = (1j * Ehat_inv @ diff @ Ehat).reshape(grid.nodes.shape + (2, 2))
        Qb, L, k = _pb_on_grid(grid, G, tol)
        Q = Qb[-1]
        if prev is not None:
            err = float(norm(Q - prev))
            if err <= 10 * tol * max(1.0, float(norm(Q))):
                break
        prev = Q
        br = np.sort(np.concatenate([br, 0.5 * (br[1:] + br[:-1])]))
    Ehat_t = P @ evolve(model, xi, [t], s, cfg, kind="mu")[0] @ Pinv
    info = {"terms": k, "norm_integral": L, "refinement_error": err, "panels": grid.n_panels}
    return IntermediateFactors(Lam, Ehat_t, Q, w, info)
