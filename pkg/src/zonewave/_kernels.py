"""Compiled inner loops: coefficient kernels and the 2x2 DOP853 integrator.

Coefficient kernels have signature ``kernel(t, p) -> (mu, sigma)`` with a
float parameter vector ``p``. :func:`integrate_2x2` accepts either a jitted
kernel (fast path) or, through ``integrate_2x2.py_func``, any Python
callable with the same signature.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:N_STAGES])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_UNDERFLOW = 2

# bumps whose profile exp(-1/(1-x^2)) is below exp(-100) are treated as zero
BUMP_EDGE = 1e-2


@njit(cache=True, nogil=True)
def ex31_kernel(t, p):
    mu = p[0] / (1.0 + t)
    return mu, mu * math.sin(t ** p[1])


@njit(cache=True, nogil=True)
def ex32_kernel(t, p):
    mu = p[0] / (1.0 + t)
    return mu, mu * math.sin(t / math.log(math.e + t))


@njit(cache=True, nogil=True)
def ex33_kernel(t, p):
    mu = p[0] / (1.0 + t)
    return mu, (1.0 + t) ** (-p[2]) * math.sin(t ** p[1])


@njit(cache=True, nogil=True)
def ex34_kernel(t, p):
    lg = math.log(math.e + t)
    mu = 1.0 / ((1.0 + t) * lg)
    return mu, mu * math.sin(t / lg)


@njit(cache=True, nogil=True)
def ex35_kernel(t, p):
    # p = [shape, mu0, c0, K, centers(K), halfwidths(K)]
    if p[0] == 0.0:
        mu = p[1] / (1.0 + t)
    else:
        mu = 1.0 / ((1.0 + t) * math.log(math.e + t))
    c0 = p[2]
    K = int(p[3])
    centers = p[4:4 + K]
    halfw = p[4 + K:4 + 2 * K]
    j = np.searchsorted(centers, t)
    sig = 0.0
    for jj in (j - 1, j):
        if 0 <= jj < K:
            h = halfw[jj]
            x = (t - centers[jj]) / h
            q = 1.0 - x * x
            if q > BUMP_EDGE:
                sig += c0 * math.exp(-1.0 / q) * (-2.0 * x / (q * q)) / h
    return mu, sig


@njit(cache=True, nogil=True)
def integrate_2x2(coef, p, c_mu, c_sigma, xi, a12, a21, t0, ts, Y0, rtol, atol, max_steps):
    """Integrate ``dY/dt = i A(t) Y``, ``A = [[0, a12 xi], [a21 xi, 2 i b]]``.

    ``b = (c_mu mu + c_sigma sigma) / 2`` with ``(mu, sigma) = coef(t, p)``.
    ``ts`` must be monotone in the direction of integration; the solution
    is recorded exactly at each entry. Returns ``(out, status, t_fail, nsteps)``.
    """
    A = _A
    Bw = _B
    Cn = _C
    E3 = _E3
    E5 = _E5
    n_out = ts.shape[0]
    out = np.zeros((n_out, 2, 2), dtype=np.complex128)
    Y = Y0.copy()
    K = np.zeros((N_STAGES + 1, 2, 2), dtype=np.complex128)
    Ys = np.zeros((2, 2), dtype=np.complex128)
    Ynew = np.zeros((2, 2), dtype=np.complex128)
    t = t0
    direction = 1.0
    if n_out > 0 and ts[n_out - 1] < t0:
        direction = -1.0
    axi12 = 1j * a12 * xi
    axi21 = 1j * a21 * xi
    mu0, sg0 = coef(t, p)
    b0 = 0.5 * (c_mu * mu0 + c_sigma * sg0)
    span = 0.0
    if n_out > 0:
        span = abs(ts[n_out - 1] - t0)
    scale_rate = abs(xi) * max(abs(a12), abs(a21)) + 2.0 * abs(b0) + 1e-8
    h_abs = min(span, 0.05 / scale_rate)
    if h_abs <= 0.0:
        h_abs = 1e-6
    # K[0] = f(t, Y)
    for c in range(2):
        K[0, 0, c] = axi12 * Y[1, c]
        K[0, 1, c] = axi21 * Y[0, c] - 2.0 * b0 * Y[1, c]
    nsteps = 0
    k_out = 0
    eps = 2.220446049250313e-16
    while k_out < n_out:
        target = ts[k_out]
        if (target - t) * direction <= 0.0:
            for r in range(2):
                for c in range(2):
                    out[k_out, r, c] = Y[r, c]
            k_out += 1
            continue
        if nsteps >= max_steps:
            return out, STATUS_MAX_STEPS, t, nsteps
        min_step = 10.0 * eps * max(abs(t), 1.0)
        step_rejected = False
        while True:
            if h_abs < min_step:
                return out, STATUS_UNDERFLOW, t, nsteps
            hit = False
            h_nat = h_abs
            if h_abs >= abs(target - t):
                h_abs = abs(target - t)
                hit = True
            h = h_abs * direction
            # stages 1..11
            for s in range(1, N_STAGES + 1):
                if s < N_STAGES:
                    ts_ = t + Cn[s] * h
                    for r in range(2):
                        for c in range(2):
                            acc = 0.0 + 0.0j
                            for j in range(s):
                                acc += A[s, j] * K[j, r, c]
                            Ys[r, c] = Y[r, c] + h * acc
                else:
                    ts_ = t + h
                    if hit:
                        ts_ = target
                    for r in range(2):
                        for c in range(2):
                            acc = 0.0 + 0.0j
                            for j in range(N_STAGES):
                                acc += Bw[j] * K[j, r, c]
                            Ynew[r, c] = Y[r, c] + h * acc
                            Ys[r, c] = Ynew[r, c]
                mu_s, sg_s = coef(ts_, p)
                bs = 0.5 * (c_mu * mu_s + c_sigma * sg_s)
                for c in range(2):
                    K[s, 0, c] = axi12 * Ys[1, c]
                    K[s, 1, c] = axi21 * Ys[0, c] - 2.0 * bs * Ys[1, c]
            err5 = 0.0
            err3 = 0.0
            for r in range(2):
                for c in range(2):
                    sc = atol + rtol * max(abs(Y[r, c]), abs(Ynew[r, c]))
                    e5 = 0.0 + 0.0j
                    e3 = 0.0 + 0.0j
                    for j in range(N_STAGES + 1):
                        e5 += E5[j] * K[j, r, c]
                        e3 += E3[j] * K[j, r, c]
                    err5 += abs(e5 / sc) ** 2
                    err3 += abs(e3 / sc) ** 2
            if err5 == 0.0 and err3 == 0.0:
                err = 0.0
            else:
                err = h_abs * err5 / math.sqrt((err5 + 0.01 * err3) * 4.0)
            if err < 1.0:
                if err == 0.0:
                    factor = 10.0
                else:
                    factor = min(10.0, 0.9 * err ** (-1.0 / 8.0))
                if step_rejected:
                    factor = min(1.0, factor)
                if hit:
                    t = target
                else:
                    t = t + h
                for r in range(2):
                    for c in range(2):
                        Y[r, c] = Ynew[r, c]
                        K[0, r, c] = K[N_STAGES, r, c]
                # a clamped step says nothing about the natural step size
                if hit:
                    h_abs = max(h_nat, h_abs * factor) if not step_rejected else h_abs
                else:
                    h_abs = h_abs * factor
                nsteps += 1
                break
            else:
                h_abs = h_abs * max(0.2, 0.9 * err ** (-1.0 / 8.0))
                step_rejected = True
    return out, STATUS_OK, t, nsteps
