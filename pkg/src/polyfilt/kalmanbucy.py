"""Kalman-Bucy filter, predictor and smoother for Gaussian OU processes.

Observations are the coordinates ``X_o`` sampled densely on a grid; their
increments stand in for ``dX_o``.  The error covariance solves the Riccati
equation (observation independent, integrated once with RK45), the estimate
is advanced with an Euler step driven by the observed increments:

    Sigma' = Phi Sigma + Sigma Phi^T - Sigma A_o^T C_o^{-1} A_o Sigma + C - C_{:,o} C_o^{-1} C_{o,:},
    dx = [a - Psi a_o + (A - Psi A_o) x] dt + Psi dX_o,

with ``Phi = A - C_{:,o} C_o^{-1} A_o`` and ``Psi = (Sigma A_o^T + C_{:,o}) C_o^{-1}``.
Here ``A_o`` and ``a_o`` are the observed rows of the drift.  The observed
block of ``Sigma`` is identically zero, so only the unobserved block is
integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import check_covariance, symmetrize
from .errors import RegularityError
from .kalman import ObservationPartition, pseudo_inverse
from .polyproc import ODE_ATOL, ODE_RTOL, GaussianOU, solve_ode

COND_MAX = 1e12


@dataclass(frozen=True)
class ObservationPath:
    """Observed coordinates on a strictly increasing grid.

    ``values`` has shape ``(N + 1, k)`` or ``(n_paths, N + 1, k)``.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim not in (2, 3) or values.shape[-2] != grid.size:
            raise ValueError(f"values must have shape (..., {grid.size}, k), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation path contains non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class RiccatiSolution:
    """Error covariance ``Sigma(t)``, gain ``Psi(t)`` and optionally ``Gamma(t)`` on a grid."""

    grid: np.ndarray
    Sigma: np.ndarray
    Psi: np.ndarray
    Gamma: np.ndarray | None


@dataclass(frozen=True)
class ContinuousFilterOutput:
    part: ObservationPartition
    path: ObservationPath
    x: np.ndarray
    riccati: RiccatiSolution

    @property
    def grid(self) -> np.ndarray:
        return self.path.grid

    @property
    def Sigma(self) -> np.ndarray:
        return self.riccati.Sigma


def _obs_blocks(model: GaussianOU, part: ObservationPartition, t: float):
    o = part.o
    C = model.C_at(t)
    Co = C[np.ix_(o, o)]
    cond = np.linalg.cond(Co)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise RegularityError(f"observed diffusion block is singular at t={t} (condition {cond:.3e})")
    Co_inv = np.linalg.inv(Co)
    return C, Co_inv


def initial_conditioning(model: GaussianOU, part: ObservationPartition, x_o0: np.ndarray | None = None):
    """``Sigma(0)`` and, given ``X_o(0)``, ``x(0)`` from Gaussian conditioning on the initial law."""
    o = part.o
    S = model.Sigma0
    gain = S[:, o] @ pseudo_inverse(S[np.ix_(o, o)])
    Sigma = check_covariance(S - gain @ S[o, :])
    Sigma[o, :] = 0.0
    Sigma[:, o] = 0.0
    if x_o0 is None:
        return Sigma, None
    x_o0 = np.asarray(x_o0, dtype=float)
    x = model.mu0 + (x_o0 - model.mu0[o]) @ gain.T
    x[..., o] = x_o0
    return Sigma, x


def _segments(model: GaussianOU, grid: np.ndarray) -> list[np.ndarray]:
    """Split the grid at drift breakpoints so no RK step straddles a jump."""
    cuts = model.breakpoints(grid[0], grid[-1])
    if not cuts:
        return [grid]
    out, lo = [], grid[0]
    for c in cuts + [grid[-1]]:
        pts = grid[(grid >= lo) & (grid <= c)]
        seg = np.unique(np.concatenate([[lo], pts, [c]]))
        out.append(seg)
        lo = c
    return out


def _integrate(rhs, y0: np.ndarray, model: GaussianOU, grid: np.ndarray, atol: float, rtol: float,
               dense: bool = False):
    """Values of the ODE solution at every grid point, restarting at breakpoints.

    With ``dense=True`` also returns a callable interpolating the solution.
    """
    out = np.empty((grid.size, y0.size))
    out[0] = y0
    y = y0
    sols = []
    for seg in _segments(model, grid):
        if seg.size < 2:
            continue
        sol = solve_ode(rhs, y, float(seg[0]), float(seg[-1]), t_eval=seg, atol=atol, rtol=rtol,
                        dense_output=dense)
        idx = np.searchsorted(grid, seg)
        hit = (idx < grid.size) & np.isclose(grid[np.minimum(idx, grid.size - 1)], seg, rtol=0, atol=1e-14)
        out[idx[hit]] = sol.y.T[hit]
        y = sol.y[:, -1]
        sols.append((float(seg[0]), float(seg[-1]), sol.sol))
    if not dense:
        return out

    def interp(t: float) -> np.ndarray:
        for lo, hi, f in sols:
            if t <= hi:
                return f(min(max(t, lo), hi))
        return sols[-1][2](sols[-1][1]) if sols else y0

    return out, interp


def riccati_solve(
    model: GaussianOU,
    part: ObservationPartition,
    grid: np.ndarray,
    Sigma0: np.ndarray | None = None,
    with_gamma: bool = False,
    atol: float = ODE_ATOL,
    rtol: float = ODE_RTOL,
) -> RiccatiSolution:
    """Integrate the filter Riccati equation (and ``Gamma`` if requested) over ``grid``.

    ``dGamma = Gamma (A - Psi A_o)^T dt`` with ``Gamma(0) = I``.
    """
    if part.d != model.d:
        raise ValueError(f"partition is for d={part.d}, model has d={model.d}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    d, o, u = model.d, part.o, part.u
    nu = u.size
    if Sigma0 is None:
        Sigma0, _ = initial_conditioning(model, part)
    S0 = np.asarray(Sigma0, dtype=float)[np.ix_(u, u)]

    def pieces(t, Suu):
        A = model.A_at(t)
        C, Co_inv = _obs_blocks(model, part, t)
        Ao = A[o, :]
        Phi = A - C[:, o] @ Co_inv @ Ao
        Sfull = np.zeros((d, d))
        Sfull[np.ix_(u, u)] = Suu
        Psi = (Sfull @ Ao.T + C[:, o]) @ Co_inv
        return A, C, Co_inv, Ao, Phi, Psi

    def rhs(t, y):
        Suu = y.reshape(nu, nu)
        A, C, Co_inv, Ao, Phi, Psi = pieces(t, Suu)
        Pu = Phi[np.ix_(u, u)]
        Aou = Ao[:, u]
        Q = C - C[:, o] @ Co_inv @ C[o, :]
        dS = Pu @ Suu + Suu @ Pu.T - Suu @ Aou.T @ Co_inv @ Aou @ Suu + Q[np.ix_(u, u)]
        return symmetrize(dS).ravel()

    # Gamma is integrated in a second pass against the interpolated Sigma, so
    # the Sigma values do not depend on whether Gamma was requested
    res = _integrate(rhs, S0.ravel(), model, grid, atol, rtol, dense=with_gamma)
    ys, Sigma_at = res if with_gamma else (res, None)
    n = grid.size
    Sigma = np.zeros((n, d, d))
    Psi = np.empty((n, d, o.size))
    for i, t in enumerate(grid):
        Suu = check_covariance(ys[i].reshape(nu, nu))
        Sigma[i][np.ix_(u, u)] = Suu
        Psi[i] = pieces(t, Suu)[5]
    Gamma = None
    if with_gamma:
        def gamma_rhs(t, y):
            A, _, _, Ao, _, Psi_t = pieces(t, Sigma_at(t).reshape(nu, nu))
            return (y.reshape(d, d) @ (A - Psi_t @ Ao).T).ravel()

        Gamma = _integrate(gamma_rhs, np.eye(d).ravel(), model, grid, atol, rtol).reshape(n, d, d)
        for i, G in enumerate(Gamma):
            cond = np.linalg.cond(G)
            if not np.isfinite(cond) or cond > COND_MAX:
                raise RegularityError(f"Gamma is ill-conditioned at t={grid[i]} (condition {cond:.3e})")
    return RiccatiSolution(grid, Sigma, Psi, Gamma)


def kb_filter(
    model: GaussianOU,
    part: ObservationPartition,
    path: ObservationPath,
    with_gamma: bool = False,
    atol: float = ODE_ATOL,
    rtol: float = ODE_RTOL,
) -> ContinuousFilterOutput:
    """Kalman-Bucy estimate on the path grid with left-point Euler steps.

    ``x(0)`` conditions the initial law on ``X_o(0)``; each step uses the
    gain at the left end and the observed increment over the step.
    """
    if path.values.shape[-1] != len(part.observed):
        raise ValueError(f"path has {path.values.shape[-1]} columns, partition observes {len(part.observed)}")
    if path.grid[0] != 0.0:
        raise ValueError("the observation grid must start at t = 0")
    Sigma0, x = initial_conditioning(model, part, path.values[..., 0, :])
    ric = riccati_solve(model, part, path.grid, Sigma0, with_gamma=with_gamma, atol=atol, rtol=rtol)
    o = part.o
    grid, y = path.grid, path.values
    xs = np.empty(y.shape[:-2] + (grid.size, model.d))
    xs[..., 0, :] = x
    for k in range(grid.size - 1):
        t, h = grid[k], grid[k + 1] - grid[k]
        a, A, Psi = model.a_at(t), model.A_at(t), ric.Psi[k]
        innov = (y[..., k + 1, :] - y[..., k, :]) - (a[o] + x @ A[o, :].T) * h
        x = x + (a + x @ A.T) * h + innov @ Psi.T
        xs[..., k + 1, :] = x
    return ContinuousFilterOutput(part, path, xs, ric)


def kb_predict(
    model: GaussianOU,
    x_s: np.ndarray,
    Sigma_s: np.ndarray,
    s: float,
    t_eval: np.ndarray,
    atol: float = ODE_ATOL,
    rtol: float = ODE_RTOL,
) -> tuple[np.ndarray, np.ndarray]:
    """``x(t, s)`` and ``Sigma(t, s)`` at ``t_eval > s`` from the filter state at ``s``.

    Solves ``x' = a + A x`` and ``Sigma' = A Sigma + Sigma A^T + C``.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size == 0 or t_eval[0] <= s or np.any(np.diff(t_eval) <= 0):
        raise ValueError("prediction times must be increasing and after s")
    d = model.d

    def rhs(t, y):
        A = model.A_at(t)
        S = y[d:].reshape(d, d)
        return np.concatenate([model.a_at(t) + A @ y[:d], (A @ S + S @ A.T + model.C_at(t)).ravel()])

    grid = np.concatenate([[s], t_eval])
    ys = _integrate(rhs, np.concatenate([np.asarray(x_s, float), np.asarray(Sigma_s, float).ravel()]),
                    model, grid, atol, rtol)[1:]
    return ys[:, :d], np.array([check_covariance(S) for S in ys[:, d:].reshape(-1, d, d)])


def kb_smooth(
    model: GaussianOU,
    out: ContinuousFilterOutput,
    s_index: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed ``x(t_j, s)`` and ``Sigma(t_j, s)`` for every grid point ``t_j <= s``.

    With ``K(t, r) = Sigma(t) Gamma(t)^{-1} Gamma(r) A_o(r)^T`` the smoother is

        x(t, s) = x(t) + int_t^s K C_o^{-1} [dX_o - (a_o + A_o x(r)) dr],
        Sigma(t, s) = Sigma(t) - int_t^s K C_o^{-1} K^T dr,

    both discretized with the left-point rule on the path grid.
    """
    ric = out.riccati
    if ric.Gamma is None:
        raise ValueError("filter output lacks Gamma; run kb_filter(..., with_gamma=True)")
    grid, y, part = out.grid, out.path.values, out.part
    s_index = grid.size - 1 if s_index is None else s_index
    if not 0 <= s_index < grid.size:
        raise ValueError(f"s_index {s_index} outside the grid")
    o = part.o
    d = model.d
    lead = y.shape[:-2]
    xs = np.empty(lead + (s_index + 1, d))
    Ss = np.empty((s_index + 1, d, d))
    v = np.zeros(lead + (d,))
    W = np.zeros((d, d))
    xs[..., s_index, :] = out.x[..., s_index, :]
    Ss[s_index] = ric.Sigma[s_index]
    for k in range(s_index - 1, -1, -1):
        t, h = grid[k], grid[k + 1] - grid[k]
        a, A = model.a_at(t), model.A_at(t)
        _, Co_inv = _obs_blocks(model, part, t)
        Ao = A[o, :]
        innov = (y[..., k + 1, :] - y[..., k, :]) - (a[o] + out.x[..., k, :] @ Ao.T) * h
        L = ric.Gamma[k] @ Ao.T @ Co_inv
        v = v + innov @ L.T
        W = W + L @ Ao @ ric.Gamma[k].T * h
        # Sigma(t) Gamma(t)^{-1} via a linear solve: (Gamma^T \ Sigma^T)^T
        SG = np.linalg.solve(ric.Gamma[k].T, ric.Sigma[k].T).T
        xs[..., k, :] = out.x[..., k, :] + v @ SG.T
        Ss[k] = check_covariance(ric.Sigma[k] - SG @ W @ SG.T)
        Ss[k][o, :] = 0.0
        Ss[k][:, o] = 0.0
    return xs, Ss
