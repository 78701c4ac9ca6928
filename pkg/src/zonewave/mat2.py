"""Closed-form helpers for (stacks of) complex 2x2 matrices.

Matrices are plain ``numpy`` arrays with trailing shape ``(2, 2)``; every
function broadcasts over leading axes.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "I2",
    "M_DIAG",
    "M_DIAG_INV",
    "det",
    "inv",
    "norm",
    "singular_values",
    "to_reals",
    "from_reals",
]

I2 = np.eye(2, dtype=complex)

# diagonaliser of the homogeneous principal part: M^{-1} [[0,1],[1,0]] M = diag(1,-1)
M_DIAG = np.array([[1.0, -1.0], [1.0, 1.0]], dtype=complex)
M_DIAG_INV = 0.5 * np.array([[1.0, 1.0], [-1.0, 1.0]], dtype=complex)


def det(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def inv(a: np.ndarray) -> np.ndarray:
    d = det(a)
    if np.any(d == 0):
        raise np.linalg.LinAlgError("singular 2x2 matrix")
    out = np.empty_like(a, dtype=np.result_type(a, complex))
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / d[..., None, None]


def singular_values(a: np.ndarray) -> np.ndarray:
    """Both singular values, largest first, shape ``(..., 2)``."""
    fro2 = np.sum(np.abs(a) ** 2, axis=(-2, -1))
    d = np.abs(det(a))
    disc = np.sqrt(np.maximum(fro2**2 - 4.0 * d**2, 0.0))
    smax = np.sqrt(0.5 * (fro2 + disc))
    # smin from the determinant keeps precision when smax >> smin
    with np.errstate(divide="ignore", invalid="ignore"):
        smin = np.where(smax > 0, d / smax, 0.0)
    return np.stack([smax, smin], axis=-1)


def norm(a: np.ndarray) -> np.ndarray:
    """Spectral norm."""
    return singular_values(a)[..., 0]


def to_reals(a: np.ndarray) -> list[float]:
    """Eight reals, row-major, real/imag interleaved per entry."""
    a = np.asarray(a, dtype=complex).reshape(2, 2)
    out = []
    for z in a.ravel():
        out.extend([float(z.real), float(z.imag)])
    return out


def from_reals(vals) -> np.ndarray:
    v = np.asarray(vals, dtype=float).reshape(4, 2)
    return (v[:, 0] + 1j * v[:, 1]).reshape(2, 2)
