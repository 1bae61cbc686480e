"""Independent checks for the filters.

:func:`linear_mmse` solves the normal equations of the best affine estimator
directly from exact first and second moments, without any recursion; the
Monte Carlo helpers estimate moments and regression fits from simulated
paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ._linalg import symmetrize
from .kalman import ObservationPartition, pseudo_inverse
from .polyssm import (
    LinearGaussianSSM,
    PolySSM,
    cross_moment,
    extract_linear,
    second_moments,
    state_moments,
)

MMSE_PINV_RTOL = 1e-10


@dataclass(frozen=True)
class MomentTable:
    """``mu(t) = E X(t)`` and ``P(s, t) = E X(t) X(s)^T`` for ``0 <= s, t <= T``."""

    mu: np.ndarray
    P: np.ndarray

    @property
    def T(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    def second(self, t1: int, t2: int) -> np.ndarray:
        """``E X(t1) X(t2)^T``."""
        if not (0 <= t1 <= self.T and 0 <= t2 <= self.T):
            raise ValueError(f"times ({t1}, {t2}) outside the table 0..{self.T}")
        return self.P[t2, t1]

    def cov(self, t1: int, t2: int) -> np.ndarray:
        return self.second(t1, t2) - np.outer(self.mu[t1], self.mu[t2])

    @classmethod
    def _build(cls, rec, mus: np.ndarray, Ps: np.ndarray) -> MomentTable:
        T = mus.shape[0] - 1
        d = mus.shape[1]
        P = np.empty((T + 1, T + 1, d, d))
        for s in range(T + 1):
            cur = Ps[s]
            P[s, s] = cur
            for t in range(s + 1, T + 1):
                cur = rec.A_at(t) @ cur + np.outer(rec.a_at(t), mus[s])
                P[s, t] = cur
                P[t, s] = cur.T
        return cls(mus, P)

    @classmethod
    def from_polyssm(cls, model: PolySSM, T: int) -> MomentTable:
        """Exact moments of a polynomial model of order >= 2."""
        mus, Ps = state_moments(model, T)
        return cls._build(extract_linear(model.B, order=1), mus, Ps)

    @classmethod
    def from_gaussian(cls, model: LinearGaussianSSM, T: int) -> MomentTable:
        mus, Ps = second_moments(model, T)
        return cls._build(model.recursion, mus, Ps)

    def check_cross(self, rec, s: int, t: int) -> float:
        """Distance between the stored ``P(s, t)`` and :func:`cross_moment`."""
        ref = cross_moment(rec, self.P[s, s], self.mu[s], s, t)
        return float(np.max(np.abs(ref - self.P[s, t])))


@dataclass(frozen=True)
class MMSEResult:
    """Best affine estimator ``alpha + sum_r gamma[r] X_o(r)`` of the target."""

    target_time: int
    coords: tuple[int, ...]
    data_times: tuple[int, ...]
    alpha: np.ndarray
    gamma: np.ndarray
    mse: np.ndarray

    def estimate(self, observations: np.ndarray) -> np.ndarray:
        """Apply to observations of shape ``(..., len(data_times), k)``."""
        obs = np.asarray(observations, dtype=float)
        return self.alpha + np.einsum("irk,...rk->...i", self.gamma, obs)


def linear_mmse(
    table: MomentTable,
    part: ObservationPartition,
    t: int,
    data_times: Iterable[int],
    coords: Sequence[int] | None = None,
    tol: float = MMSE_PINV_RTOL,
) -> MMSEResult:
    """Solve the normal equations for the best affine estimator of ``X_coords(t)``.

    ``gamma = Cov(target, Z) Cov(Z)^+`` with ``Z`` the stacked observed
    vectors at ``data_times``; the achieved error covariance is
    ``Cov(target) - gamma Cov(Z, target)``.
    """
    times = tuple(sorted(set(int(r) for r in data_times)))
    coords = tuple(range(table.d)) if coords is None else tuple(coords)
    need = max((t,) + times)
    if need > table.T or min((t,) + times) < 0:
        raise ValueError(f"moment table covers 0..{table.T}, request needs {need}")
    o = part.o
    k = len(o)
    c = np.array(coords)
    n = len(times)
    gram = np.empty((n * k, n * k))
    cross = np.empty((len(c), n * k))
    for i, r1 in enumerate(times):
        cross[:, i * k:(i + 1) * k] = table.cov(t, r1)[np.ix_(c, o)]
        for j, r2 in enumerate(times):
            gram[i * k:(i + 1) * k, j * k:(j + 1) * k] = table.cov(r1, r2)[np.ix_(o, o)]
    gram = symmetrize(gram)
    gamma = cross @ pseudo_inverse(gram, tol) if n else np.zeros((len(c), 0))
    mu_z = np.concatenate([table.mu[r][o] for r in times]) if n else np.zeros(0)
    alpha = table.mu[t][c] - gamma @ mu_z
    mse = symmetrize(table.cov(t, t)[np.ix_(c, c)] - gamma @ cross.T)
    return MMSEResult(t, coords, times, alpha, gamma.reshape(len(c), n, k), mse)


@dataclass(frozen=True)
class MCEstimate:
    """Sample means and their standard errors."""

    mean: np.ndarray
    se: np.ndarray
    n_paths: int

    def z_scores(self, exact: np.ndarray) -> np.ndarray:
        """``(mean - exact) / se``, with zero where both the error and ``se`` vanish."""
        diff = self.mean - np.asarray(exact, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.se > 0, diff / np.where(self.se > 0, self.se, 1.0),
                         np.where(diff == 0, 0.0, np.inf))
        return z


def mc_moments(
    sampler: Callable[[int, int], np.ndarray],
    n_paths: int,
    monomials: Sequence[Sequence[int]],
    seed: int = 0,
) -> MCEstimate:
    """Estimate ``E X(t)^lam`` from ``sampler(n_paths, seed)``.

    The sampler returns states of shape ``(n_paths, n_times, d)``; the result
    has shape ``(n_times, len(monomials))``.
    """
    if n_paths < 100:
        raise ValueError("need at least 100 paths")
    X = np.asarray(sampler(n_paths, seed), dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    lam = np.asarray(monomials, dtype=int)
    if lam.ndim != 2 or lam.shape[1] != X.shape[-1]:
        raise ValueError(f"monomials must have {X.shape[-1]} exponents each")
    vals = np.prod(X[:, :, None, :] ** lam[None, None], axis=-1)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(X.shape[0])
    return MCEstimate(mean, se, X.shape[0])


@dataclass(frozen=True)
class RegressionFit:
    """Least-squares fit of a target on features with an intercept."""

    intercept: float
    coef: np.ndarray
    mse: float
    mse_se: float


def mc_regression(target: np.ndarray, features: np.ndarray) -> RegressionFit:
    """Regress simulated targets on simulated observables (with intercept).

    ``mse`` is the in-sample mean squared residual and ``mse_se`` its
    standard error, for comparison with a theoretical error variance.
    """
    y = np.asarray(target, dtype=float)
    F = np.asarray(features, dtype=float).reshape(y.shape[0], -1)
    design = np.column_stack([np.ones(y.shape[0]), F])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid2 = (y - design @ beta) ** 2
    return RegressionFit(float(beta[0]), beta[1:], float(resid2.mean()),
                         float(resid2.std(ddof=1) / np.sqrt(y.shape[0])))
