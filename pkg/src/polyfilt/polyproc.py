"""Continuous-time polynomial processes.

The extended generator of a polynomial diffusion maps polynomials of degree
``<= n`` into themselves.  On the graded monomial basis it is the matrix
``B^c`` with

    L x^lam = sum_mu b^c_{lam,mu} x^mu,

so the moment vector solves ``m'(t) = B^c m(t)`` and the process sampled on
a grid is a discrete polynomial model with ``B(k) = exp(B^c dt)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from . import multiindex as mi
from ._linalg import clamp_psd, symmetrize
from .errors import IntegrationError, NotPolynomialError, NumericalError
from .multiindex import IndexBasis
from .polyssm import CoefficientMatrix, PolySSM, extract_linear, structural_mask

ODE_ATOL = 1e-10
ODE_RTOL = 1e-8


def matrix_exponential(M: np.ndarray) -> np.ndarray:
    """``exp(M)`` via scaling and squaring with Pade approximants."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix exponential of a non-finite matrix")
    out = scipy.linalg.expm(M)
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential overflowed")
    return out


def solve_ode(
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t1: float,
    t_eval: np.ndarray | None = None,
    atol: float = ODE_ATOL,
    rtol: float = ODE_RTOL,
    dense_output: bool = False,
):
    """Adaptive RK45 solve that raises :class:`IntegrationError` on failure."""
    sol = scipy.integrate.solve_ivp(fun, (t0, t1), np.asarray(y0, dtype=float), method="RK45",
                                    t_eval=t_eval, atol=atol, rtol=rtol, dense_output=dense_output)
    if not sol.success:
        raise IntegrationError(f"ODE solver failed on [{t0}, {t1}]: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"ODE solution left the finite range on [{t0}, {t1}]")
    return sol


@dataclass(frozen=True)
class GeneratorMatrix:
    """Generator matrix ``B^c``, constant or piecewise constant in time.

    For a piecewise generator ``values`` has shape ``(K, N, N)`` and
    ``times`` holds the ``K + 1`` increasing breakpoints starting at 0; the
    last piece is used beyond the final breakpoint.
    """

    basis: IndexBasis
    values: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        size = len(self.basis)
        if not self.basis.include_zero:
            raise ValueError("generator matrices live on a basis that includes 0")
        if v.shape[-2:] != (size, size) or v.ndim not in (2, 3):
            raise ValueError(f"expected shape (..., {size}, {size}), got {v.shape}")
        if v.ndim == 3:
            if self.times is None:
                raise ValueError("a piecewise generator needs breakpoints")
            times = np.asarray(self.times, dtype=float)
            if times.shape != (v.shape[0] + 1,) or times[0] != 0 or np.any(np.diff(times) <= 0):
                raise ValueError("breakpoints must be K+1 increasing times starting at 0")
            object.__setattr__(self, "times", times)
        elif self.times is not None:
            raise ValueError("breakpoints given for a constant generator")
        forbidden = ~structural_mask(self.basis)
        for b in v if v.ndim == 3 else v[None]:
            if not np.all(np.isfinite(b)):
                raise ValueError("generator has non-finite entries")
            bad = np.argwhere(forbidden & (b != 0))
            if len(bad):
                i, j = bad[0]
                raise NotPolynomialError(
                    f"b^c_{self.basis[i]},{self.basis[j]} = {b[i, j]} violates the degree bound")

    @property
    def piecewise(self) -> bool:
        return self.values.ndim == 3

    def at(self, t: float) -> np.ndarray:
        if not self.piecewise:
            return self.values
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[min(max(k, 0), self.values.shape[0] - 1)]

    def pieces(self, s: float, t: float) -> list[tuple[float, float, np.ndarray]]:
        """Sub-intervals of ``[s, t]`` on which the generator is constant."""
        if not self.piecewise:
            return [(s, t, self.values)]
        cuts = [s] + [x for x in self.times[1:-1] if s < x < t] + [t]
        return [(lo, hi, self.at(0.5 * (lo + hi))) for lo, hi in zip(cuts[:-1], cuts[1:])]

    def transition(self, s: float, t: float) -> np.ndarray:
        """``Phi(t, s)`` mapping moments at ``s`` to moments at ``t``."""
        if t < s:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        out = np.eye(len(self.basis))
        for lo, hi, b in self.pieces(s, t):
            out = matrix_exponential(b * (hi - lo)) @ out
        return out

    def truncate(self, order: int) -> GeneratorMatrix:
        """Restriction to polynomials of degree ``<= order``."""
        sub = IndexBasis(self.basis.d, order)
        idx = [self.basis.rank(lam) for lam in sub]
        return GeneratorMatrix(sub, self.values[..., idx, :][..., idx], self.times)


def generator_from_table(
    d: int,
    n: int,
    table: Mapping[tuple[tuple[int, ...], tuple[int, ...]], float],
) -> GeneratorMatrix:
    """Generator matrix from drift and diffusion coefficients.

    ``table[(1_i, mu)]`` is the coefficient of ``x^mu`` in the drift of
    component ``i`` (``|mu| <= 1``) and ``table[(1_i + 1_j, mu)]`` that of
    the diffusion entry ``c_ij(x)`` (``|mu| <= 2``).  Then

        b^c_{lam,mu} = sum_{nu} binom(lam, nu) a_{lam - nu, mu - nu}.
    """
    basis = IndexBasis(d, n)
    a: dict[tuple[int, ...], dict[tuple[int, ...], float]] = {}
    for (lam, mu), val in table.items():
        lam, mu = tuple(lam), tuple(mu)
        if len(lam) != d or len(mu) != d:
            raise ValueError(f"coefficient index {(lam, mu)} does not have dimension {d}")
        if sum(lam) not in (1, 2):
            raise ValueError(f"only first and second order coefficients are allowed, got {lam}")
        if sum(mu) > sum(lam):
            raise NotPolynomialError(f"coefficient {(lam, mu)} exceeds the allowed degree")
        a.setdefault(lam, {})
        a[lam][mu] = a[lam].get(mu, 0.0) + float(val)
    b = np.zeros((len(basis), len(basis)))
    for i, lam in enumerate(basis):
        for lam_a, row in a.items():
            nu = mi.sub(lam, lam_a)
            if nu is None:
                continue
            w = mi.multi_binomial(lam, nu)
            for mu_a, val in row.items():
                b[i, basis.rank(mi.add(mu_a, nu))] += w * val
    return GeneratorMatrix(basis, b)


def coefficient_table(gen: GeneratorMatrix, t: float = 0.0) -> dict:
    """Inverse of :func:`generator_from_table`: ``a_{lam,mu}`` for ``|lam|`` in ``{1, 2}``."""
    basis = gen.basis
    b = gen.at(t)
    out = {}
    for lam in basis:
        if sum(lam) not in (1, 2):
            continue
        for mu in basis:
            val = 0.0
            for nu in basis:
                if not (mi.leq(nu, lam) and mi.leq(nu, mu)):
                    continue
                val += (-1) ** sum(nu) * mi.multi_binomial(lam, nu) * \
                    b[basis.rank(mi.sub(lam, nu)), basis.rank(mi.sub(mu, nu))]
            if val != 0.0:
                out[(lam, mu)] = val
    return out


@dataclass(frozen=True)
class PolyProcess:
    """Polynomial diffusion given by its generator matrix and initial moments."""

    generator: GeneratorMatrix
    initial_moments: np.ndarray

    def __post_init__(self) -> None:
        m0 = np.asarray(self.initial_moments, dtype=float)
        object.__setattr__(self, "initial_moments", m0)
        if m0.shape != (len(self.basis),):
            raise ValueError(f"initial moments must have length {len(self.basis)}")
        if abs(m0[0] - 1.0) > 1e-12:
            raise ValueError("initial moment of the zero index must be 1")

    @property
    def basis(self) -> IndexBasis:
        return self.generator.basis

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def n(self) -> int:
        return self.basis.n


def moment_ode(process: PolyProcess, t_eval: Sequence[float], method: str = "expm") -> np.ndarray:
    """Moment vectors ``E X(t)^lam`` at the increasing times ``t_eval``.

    ``method="expm"`` uses the exact transition matrices, ``method="ode"``
    integrates ``m' = B^c m`` with an adaptive Runge-Kutta scheme.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or (t_eval.size and t_eval[0] < 0):
        raise ValueError("evaluation times must be nonnegative and increasing")
    gen = process.generator
    out = np.empty((t_eval.size, len(process.basis)))
    if method == "expm":
        m, prev = process.initial_moments, 0.0
        for k, t in enumerate(t_eval):
            m = gen.transition(prev, t) @ m
            out[k], prev = m, t
    elif method == "ode":
        if t_eval.size == 0:
            return out
        sol = solve_ode(lambda t, m: gen.at(t) @ m, process.initial_moments, 0.0, float(t_eval[-1]),
                        t_eval=t_eval)
        out[:] = sol.y.T
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def state_moments_at(process: PolyProcess, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``E X(t)`` and ``E X(t) X(t)^T``."""
    m = moment_ode(process, [t])[0]
    pairs = np.array(process.basis.pairs())
    return m[process.basis.units()], symmetrize(m[pairs])


def cross_moment_continuous(process: PolyProcess, s: float, t: float) -> np.ndarray:
    """``E X(t) X(s)^T`` for ``s <= t``."""
    mu_s, P_s = state_moments_at(process, s)
    lin = process.generator.truncate(1).transition(s, t)
    a, A = lin[1:, 0], lin[1:, 1:]
    return np.outer(a, mu_s) + A @ P_s


def discretize(
    process: PolyProcess,
    dt: float | None = None,
    n_steps: int | None = None,
    times: Sequence[float] | None = None,
) -> PolySSM:
    """Sample the process on a grid: ``B(k) = Phi(t_k, t_{k-1})``.

    Either give a uniform step ``dt`` (with ``n_steps`` for a piecewise
    generator) or an explicit increasing grid ``times``.  A constant
    generator on a uniform grid gives a time-homogeneous model.
    """
    gen = process.generator
    if times is not None:
        grid = np.asarray(times, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) < 0):
            raise ValueError("grid must be increasing with at least two points")
        m0 = moment_ode(process, [grid[0]])[0] if grid[0] > 0 else process.initial_moments
        vals = np.array([gen.transition(lo, hi) for lo, hi in zip(grid[:-1], grid[1:])])
        return PolySSM(CoefficientMatrix.from_array(process.basis, vals), m0)
    if dt is None or dt <= 0:
        raise ValueError("dt must be positive")
    if gen.piecewise:
        if n_steps is None:
            raise ValueError("a piecewise generator needs n_steps")
        vals = np.array([gen.transition((k - 1) * dt, k * dt) for k in range(1, n_steps + 1)])
    else:
        vals = matrix_exponential(gen.values * dt)
    return PolySSM(CoefficientMatrix.from_array(process.basis, vals), process.initial_moments)


def process_from_ou(ou: GaussianOU) -> PolyProcess:
    """Order-two polynomial process of a Gaussian OU with constant coefficients."""
    if ou.times is not None or callable(ou.C):
        raise ValueError("only constant-coefficient OU processes can be lifted")
    d = ou.d
    table = {}
    for i in range(d):
        e_i = mi.unit(d, i)
        table[(e_i, (0,) * d)] = ou.a[i]
        for j in range(d):
            table[(e_i, mi.unit(d, j))] = ou.A[i, j]
        for j in range(i, d):
            table[(mi.unit(d, i, j), (0,) * d)] = ou.C[i, j]
    gen = generator_from_table(d, 2, table)
    P0 = ou.Sigma0 + np.outer(ou.mu0, ou.mu0)
    m0 = np.zeros(len(gen.basis))
    m0[0] = 1.0
    m0[gen.basis.units()] = ou.mu0
    m0[np.array(gen.basis.pairs())] = P0
    return PolyProcess(gen, m0)


def drift_coefficients(gen: GeneratorMatrix, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``a^c_i = b^c_{1_i,0}`` and ``A^c_ij = b^c_{1_i,1_j}``."""
    u = gen.basis.units()
    b = gen.at(t)
    return b[u, 0].copy(), b[np.ix_(u, u)].copy()


def diffusion_covariance(process: PolyProcess, t: float) -> np.ndarray:
    """``C(t) = E c(X(t))`` where ``c`` is the diffusion matrix of the process."""
    if process.n < 2:
        raise ValueError("the diffusion covariance needs a generator of order >= 2")
    basis = process.basis
    m = moment_ode(process, [t])[0]
    table = coefficient_table(process.generator, t)
    d = process.d
    C = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            lam = mi.unit(d, i, j)
            C[i, j] = C[j, i] = sum(v * m[basis.rank(mu)] for (l, mu), v in table.items() if l == lam)
    return clamp_psd(C)


@dataclass(frozen=True)
class GaussianOU:
    """``dX = (a(t) + A(t) X) dt + C(t)^{1/2} dW`` with Gaussian initial law.

    ``a`` and ``A`` are constant or piecewise constant on ``times``; ``C`` is
    a constant matrix or a callable of ``t``.
    """

    a: np.ndarray
    A: np.ndarray
    C: np.ndarray | Callable[[float], np.ndarray]
    mu0: np.ndarray
    Sigma0: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("a", "A", "mu0", "Sigma0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not callable(self.C):
            object.__setattr__(self, "C", clamp_psd(np.asarray(self.C, dtype=float)))
        d = self.mu0.shape[0]
        if self.a.shape[-1] != d or self.A.shape[-2:] != (d, d) or self.Sigma0.shape != (d, d):
            raise ValueError("inconsistent dimensions")
        if (self.a.ndim == 2) != (self.times is not None):
            raise ValueError("piecewise a and A need breakpoints and vice versa")
        object.__setattr__(self, "Sigma0", clamp_psd(self.Sigma0))

    @property
    def d(self) -> int:
        return self.mu0.shape[0]

    def _piece(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(k, 0), self.a.shape[0] - 1)

    def a_at(self, t: float) -> np.ndarray:
        return self.a if self.times is None else self.a[self._piece(t)]

    def A_at(self, t: float) -> np.ndarray:
        return self.A if self.times is None else self.A[self._piece(t)]

    def C_at(self, t: float) -> np.ndarray:
        return np.asarray(self.C(t), dtype=float) if callable(self.C) else self.C

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Interior points of ``(t0, t1)`` where the drift jumps."""
        if self.times is None:
            return []
        return [float(x) for x in self.times[1:-1] if t0 < x < t1]

    def moments(self, t_eval: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance at ``t_eval`` by integrating the moment ODEs."""
        d = self.d

        def rhs(t, y):
            mu, S = y[:d], y[d:].reshape(d, d)
            A = self.A_at(t)
            dS = A @ S + S @ A.T + self.C_at(t)
            return np.concatenate([self.a_at(t) + A @ mu, dS.ravel()])

        t_eval = np.asarray(t_eval, dtype=float)
        y0 = np.concatenate([self.mu0, self.Sigma0.ravel()])
        sol = solve_ode(rhs, y0, 0.0, float(t_eval[-1]), t_eval=t_eval)
        return sol.y[:d].T, symmetrize(sol.y[d:].T.reshape(-1, d, d))


def gaussian_equivalent_continuous(process: PolyProcess) -> GaussianOU:
    """Gaussian process with the same first and second moments as ``process``.

    Drift is the degree-one block of the generator; the diffusion covariance
    is ``E c(X(t))``, evaluated from the exact moment transition.
    """
    gen = process.generator
    basis = process.basis
    if process.n < 2:
        raise ValueError("the Gaussian equivalent needs a generator of order >= 2")
    mu0 = process.initial_moments[basis.units()]
    P0 = process.initial_moments[np.array(basis.pairs())]
    if gen.piecewise:
        parts = [drift_coefficients(gen, 0.5 * (lo + hi)) for lo, hi in zip(gen.times[:-1], gen.times[1:])]
        a = np.array([p[0] for p in parts])
        A = np.array([p[1] for p in parts])
        times = gen.times
    else:
        a, A = drift_coefficients(gen)
        times = None
    table_cache: dict[int, dict] = {}
    d = process.d
    rows = {}
    sub2 = gen.truncate(2)

    def C(t: float) -> np.ndarray:
        key = 0 if not gen.piecewise else int(np.searchsorted(gen.times, t, side="right"))
        if key not in table_cache:
            table_cache[key] = coefficient_table(gen, t)
            rows[key] = np.zeros((d, d, len(sub2.basis)))
            for (lam, mu), v in table_cache[key].items():
                if sum(lam) == 2:
                    i, j = [k for k in range(d) for _ in range(lam[k])]
                    rows[key][i, j, sub2.basis.rank(mu)] = rows[key][j, i, sub2.basis.rank(mu)] = v
        m = sub2.transition(0.0, t) @ process.initial_moments[[basis.rank(l) for l in sub2.basis]]
        return clamp_psd(rows[key] @ m)

    return GaussianOU(a, A, C, mu0, P0 - np.outer(mu0, mu0), times)
