"""Small dense linear-algebra helpers shared by the model and filter modules."""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveSemidefiniteError

# Eigenvalues of a covariance computed by subtraction above -CLAMP_RTOL * max(1, ||C||)
# are roundoff and get clamped to zero.
CLAMP_RTOL = 1e-10


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def clamp_psd(c: np.ndarray, rtol: float = CLAMP_RTOL) -> np.ndarray:
    """Symmetrize and clip slightly negative eigenvalues to zero.

    Raises NotPositiveSemidefiniteError when an eigenvalue lies below the threshold.
    """
    c = symmetrize(np.asarray(c, dtype=float))
    if c.size == 0:
        return c
    w, v = np.linalg.eigh(c)
    thresh = rtol * max(1.0, float(np.max(np.abs(w))))
    if w[0] < -thresh:
        raise NotPositiveSemidefiniteError(
            f"matrix has eigenvalue {w[0]:.3e} below -{thresh:.1e}")
    if w[0] >= 0:
        return c
    w = np.clip(w, 0.0, None)
    return symmetrize((v * w) @ v.T)


def sqrt_psd(c: np.ndarray, rtol: float = CLAMP_RTOL) -> np.ndarray:
    """Symmetric factor ``B`` with ``B @ B.T == C`` for a PSD ``C``."""
    c = clamp_psd(c, rtol)
    w, v = np.linalg.eigh(c)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def min_eig(c: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(c, dtype=float)))[0])


def check_covariance(c: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Filter-side covariance guard.

    Eigenvalues below ``-rtol * trace`` mean a bug and raise; anything between
    that and zero is roundoff and gets clamped.
    """
    c = symmetrize(c)
    if c.size == 0:
        return c
    w, v = np.linalg.eigh(c)
    scale = max(float(np.trace(c)), 0.0)
    if w[0] < -rtol * max(scale, 1e-300) and w[0] < -1e-14:
        raise NotPositiveSemidefiniteError(
            f"error covariance has eigenvalue {w[0]:.3e} (trace {scale:.3e})")
    if w[0] >= 0:
        return c
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T)
