"""Kalman filter, predictor and Rauch-Tung-Striebel smoother with partial observation.

For a linear Gaussian model these are the conditional means; applied to the
Gaussian equivalent of a polynomial model they are the best estimators that
are affine in the observations.  Innovation covariances are inverted with a
Moore-Penrose pseudoinverse since observed blocks are singular whenever an
observed coordinate is a deterministic function of the past.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._linalg import check_covariance, symmetrize
from .polyssm import LinearGaussianSSM

PINV_RTOL = 1e-12


def pseudo_inverse(M: np.ndarray, tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below ``tol * s_max`` count as zero."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("pseudoinverse of a non-finite matrix")
    if M.size == 0:
        return M.T.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cut = tol * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    keep = s > cut
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def penrose_residual(M: np.ndarray, Mp: np.ndarray) -> float:
    """Largest violation of the four Penrose identities, relative to ``max(1, |M|, |M^+|)``."""
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)), float(np.max(np.abs(Mp), initial=0.0)))
    res = [M @ Mp @ M - M, Mp @ M @ Mp - Mp, (M @ Mp).T - M @ Mp, (Mp @ M).T - Mp @ M]
    return max(float(np.max(np.abs(r), initial=0.0)) for r in res) / scale


@dataclass(frozen=True)
class ObservationPartition:
    """Which coordinates of a ``d``-dimensional state are observed."""

    d: int
    observed: tuple[int, ...]
    allow_empty: bool = False

    def __post_init__(self) -> None:
        obs = tuple(int(i) for i in self.observed)
        if len(set(obs)) != len(obs):
            raise ValueError(f"duplicate observed indices in {obs}")
        if any(not 0 <= i < self.d for i in obs):
            raise ValueError(f"observed indices {obs} out of range for d={self.d}")
        if not obs and not self.allow_empty:
            raise ValueError("no observed coordinates")
        object.__setattr__(self, "observed", tuple(sorted(obs)))

    @property
    def unobserved(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.d) if i not in self.observed)

    @property
    def o(self) -> np.ndarray:
        return np.array(self.observed, dtype=int)

    @property
    def u(self) -> np.ndarray:
        return np.array(self.unobserved, dtype=int)


@dataclass(frozen=True)
class FilterState:
    """Estimate of ``X(t)`` from data up to ``s``: mean ``x`` and error covariance ``P``."""

    t: int
    s: int
    x: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class FilterResult:
    """Forward pass over ``t = 0..T``.

    ``x_filt[..., t, :]`` is ``x(t, t)`` and ``x_pred[..., t, :]`` is
    ``x(t, t-1)`` (the prior mean at ``t = 0``).  Means may carry a leading
    path axis; the covariances do not depend on the data.
    """

    part: ObservationPartition
    observations: np.ndarray
    x_filt: np.ndarray
    P_filt: np.ndarray
    x_pred: np.ndarray
    P_pred: np.ndarray

    @property
    def T(self) -> int:
        return self.P_filt.shape[0] - 1

    def filtered(self, t: int) -> FilterState:
        return FilterState(t, t, self.x_filt[..., t, :], self.P_filt[t])

    def predicted(self, t: int) -> FilterState:
        return FilterState(t, t - 1, self.x_pred[..., t, :], self.P_pred[t])


def _update(x: np.ndarray, P: np.ndarray, y: np.ndarray, part: ObservationPartition,
            tol: float) -> tuple[np.ndarray, np.ndarray]:
    o, u = part.o, part.u
    gain = P[:, o] @ pseudo_inverse(P[np.ix_(o, o)], tol)
    x = x + (y - x[..., o]) @ gain.T
    P = symmetrize(P - gain @ P[o, :])
    # observed coordinates are known exactly after the update
    x[..., o] = y
    out = np.zeros_like(P)
    out[np.ix_(u, u)] = check_covariance(P[np.ix_(u, u)])
    return x, out


def _propagate(model: LinearGaussianSSM, x: np.ndarray, P: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Moments of ``X(t)`` given those of ``X(t-1)``."""
    A = model.A_at(t)
    x = model.a_at(t) + x @ A.T
    P = check_covariance(A @ P @ A.T + model.C_at(t))
    return x, P


def kalman_filter(
    model: LinearGaussianSSM,
    part: ObservationPartition,
    observations: np.ndarray,
    tol: float = PINV_RTOL,
) -> FilterResult:
    """Filter ``x(t, t)`` and one-step predictions ``x(t, t-1)`` for ``t = 0..T``.

    ``observations`` has shape ``(T + 1, k)`` or ``(n_paths, T + 1, k)`` with
    ``k`` the number of observed coordinates; row ``t`` is ``X_o(t)``.
    """
    if part.d != model.d:
        raise ValueError(f"partition is for d={part.d}, model has d={model.d}")
    y = np.asarray(observations, dtype=float)
    k = len(part.observed)
    if y.ndim == 1 and k == 1:
        y = y[:, None]
    if y.ndim not in (2, 3) or y.shape[-1] != k:
        raise ValueError(f"observations must have shape (..., T+1, {k}), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations contain non-finite values")
    T = y.shape[-2] - 1
    if T < 0:
        raise ValueError("need at least one observation")
    if model.n_steps is not None and model.n_steps < T:
        raise ValueError(f"model covers {model.n_steps} steps, observations need {T}")
    lead = y.shape[:-2]
    d = model.d
    x_filt = np.empty(lead + (T + 1, d))
    x_pred = np.empty(lead + (T + 1, d))
    P_filt = np.empty((T + 1, d, d))
    P_pred = np.empty((T + 1, d, d))
    x = np.broadcast_to(model.mu0, lead + (d,)).copy()
    P = model.Sigma0
    for t in range(T + 1):
        if t > 0:
            x, P = _propagate(model, x, P, t)
        x_pred[..., t, :], P_pred[t] = x, P
        x, P = _update(x, P, y[..., t, :], part, tol)
        x_filt[..., t, :], P_filt[t] = x, P
    return FilterResult(part, y, x_filt, P_filt, x_pred, P_pred)


# the public name mirrors the other estimators
filter = kalman_filter  # noqa: A001


def predict(model: LinearGaussianSSM, state: FilterState, t: int) -> FilterState:
    """``x(t, s)`` and its error covariance from the filter state at ``(s, s)``."""
    s = state.s
    if t <= state.t:
        raise ValueError(f"prediction target t={t} must exceed the state's time {state.t}")
    x, P = np.array(state.x, dtype=float), state.P
    for r in range(state.t + 1, t + 1):
        x, P = _propagate(model, x, P, r)
    return FilterState(t, s, x, P)


def prediction_path(model: LinearGaussianSSM, state: FilterState, t: int) -> list[FilterState]:
    """All predictions ``x(r, s)`` for ``r = s+1..t``."""
    out, cur = [], state
    for r in range(state.t + 1, t + 1):
        cur = predict(model, cur, r)
        out.append(cur)
    return out


@dataclass(frozen=True)
class SmootherResult:
    """``x(t, s)`` and ``P(t, s)`` for ``t = 0..s``."""

    s: int
    x: np.ndarray
    P: np.ndarray
    gains: np.ndarray

    def state(self, t: int) -> FilterState:
        return FilterState(t, self.s, self.x[..., t, :], self.P[t])


def smooth(
    model: LinearGaussianSSM,
    forward: FilterResult,
    s: int | None = None,
    tol: float = PINV_RTOL,
) -> SmootherResult:
    """Rauch-Tung-Striebel backward pass giving ``x(t, s)`` for ``t <= s``.

    ``G(t) = P(t, t) A(t+1)^T P(t+1, t)^+`` and

        x(t, s) = x(t, t) + G(t) (x(t+1, s) - x(t+1, t)),
        P(t, s) = P(t, t) + G(t) (P(t+1, s) - P(t+1, t)) G(t)^T.
    """
    s = forward.T if s is None else s
    if not 0 <= s <= forward.T:
        raise ValueError(f"data horizon s={s} outside the forward pass 0..{forward.T}")
    d = model.d
    lead = forward.x_filt.shape[:-2]
    x = np.empty(lead + (s + 1, d))
    P = np.empty((s + 1, d, d))
    G = np.zeros((s + 1, d, d))
    x[..., s, :] = forward.x_filt[..., s, :]
    P[s] = forward.P_filt[s]
    for t in range(s - 1, -1, -1):
        gain = forward.P_filt[t] @ model.A_at(t + 1).T @ pseudo_inverse(forward.P_pred[t + 1], tol)
        G[t] = gain
        x[..., t, :] = forward.x_filt[..., t, :] + \
            (x[..., t + 1, :] - forward.x_pred[..., t + 1, :]) @ gain.T
        P[t] = check_covariance(forward.P_filt[t] + gain @ (P[t + 1] - forward.P_pred[t + 1]) @ gain.T)
    return SmootherResult(s, x, P, G)


def observed_block_residual(state: FilterState, part: ObservationPartition,
                            observation: Sequence[float] | None = None) -> float:
    """Size of the observed block of ``P`` (and of ``x_o - y`` when ``observation`` is given)."""
    o = part.o
    res = float(np.max(np.abs(state.P[o, :]), initial=0.0))
    if observation is not None:
        res = max(res, float(np.max(np.abs(np.asarray(state.x)[..., o] - observation), initial=0.0)))
    return res
