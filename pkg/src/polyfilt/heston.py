"""Heston stochastic volatility as a polynomial state space model.

The variance ``v`` follows a CIR process and the log price ``Y`` has
instantaneous variance ``v`` (the ``delta = 1/2`` case):

    dv = kappa (m - v) dt + sigma sqrt(v) dW1,
    dY = mu dt + sqrt(v) dW2,          d[W1, W2] = rho dt.

``(v, Y, Y^2)`` is a polynomial process, and sampled on a grid with
``X = (v, dY, dY^2)`` it is a time-homogeneous polynomial state space model.
Observing ``dY`` and ``dY^2`` and filtering ``v`` is the motivating example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from . import multiindex as mi
from .errors import NotPolynomialError
from .multiindex import IndexBasis
from .polyproc import GeneratorMatrix, generator_from_table, matrix_exponential
from .polyssm import CoefficientMatrix, LinearGaussianSSM, PolySSM, gaussian_equivalent

STATE_NAMES = ("v", "dY", "dY2")
NOISY_STATE_NAMES = ("v", "Y", "Y2", "Ytilde", "Ytilde2")


@dataclass(frozen=True)
class HestonParams:
    """Heston parameters; the initial law of ``v`` defaults to the stationary one.

    ``mu_v`` and ``sigma_v`` are the mean and variance of ``v(0)``.
    """

    kappa: float
    m: float
    sigma: float
    rho: float
    mu: float = 0.0
    mu_v: float | None = None
    sigma_v: float | None = None

    def __post_init__(self) -> None:
        for name in ("kappa", "m", "sigma"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.mu_v is None:
            object.__setattr__(self, "mu_v", self.m)
        if self.sigma_v is None:
            object.__setattr__(self, "sigma_v", self.sigma**2 * self.m / (2 * self.kappa))
        if self.mu_v < 0 or self.sigma_v < 0:
            raise ValueError("the initial mean and variance of v must be nonnegative")

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 * self.m / (2 * self.kappa)

    def v_mean(self, t: float) -> float:
        return self.m + (self.mu_v - self.m) * math.exp(-self.kappa * t)

    def v_variance(self, t: float) -> float:
        k, e = self.kappa, math.exp(-self.kappa * t)
        return (self.sigma_v * e**2 + self.mu_v * self.sigma**2 / k * (e - e**2)
                + self.m * self.sigma**2 / (2 * k) * (1 - e) ** 2)

    def v0_moments(self, n: int) -> np.ndarray:
        """``E v(0)^k`` for ``k = 0..n`` under a Gamma law with the given mean and variance."""
        if self.sigma_v == 0 or self.mu_v == 0:
            return np.array([self.mu_v**k for k in range(n + 1)], dtype=float)
        shape = self.mu_v**2 / self.sigma_v
        scale = self.sigma_v / self.mu_v
        return np.array([scale**k * scipy.special.poch(shape, k) for k in range(n + 1)])


@dataclass(frozen=True)
class NoiseParams:
    """Standard deviation ``tau`` of i.i.d. Gaussian noise on observed log prices."""

    tau: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be nonnegative, got {self.tau}")

    def moment(self, p: int) -> float:
        """``E eps^p``: zero for odd ``p``, ``tau^p (p - 1)!!`` for even ``p``."""
        if p % 2:
            return 0.0
        return self.tau**p * math.prod(range(1, p, 2))


def heston_generator(p: HestonParams, n: int = 2) -> GeneratorMatrix:
    """Generator matrix of ``(v, Y, Y^2)`` on monomials of degree ``<= n``."""
    e = lambda *ix: mi.unit(3, *ix)  # noqa: E731
    zero = (0, 0, 0)
    sr = p.rho * p.sigma
    table = {
        (e(0), zero): p.kappa * p.m,
        (e(0), e(0)): -p.kappa,
        (e(1), zero): p.mu,
        # d(Y^2) = 2 Y dY + d[Y, Y]
        (e(2), e(0)): 1.0,
        (e(2), e(1)): 2 * p.mu,
        (e(0, 0), e(0)): p.sigma**2,
        (e(0, 1), e(0)): sr,
        (e(0, 2), e(0, 1)): 2 * sr,
        (e(1, 1), e(0)): 1.0,
        (e(1, 2), e(0, 1)): 2.0,
        (e(2, 2), e(0, 2)): 4.0,
    }
    return generator_from_table(3, n, table)


def increment_matrix(Bbar: np.ndarray, basis: IndexBasis) -> np.ndarray:
    """Coefficients of ``(v, dY, dY^2)`` from those of ``(v, Y, Y^2)``.

    The conditional law of ``(v(t), Y(t) - Y(t-1))`` does not depend on
    ``Y(t-1)``, so the increment model is the price model evaluated at
    ``Y(t-1) = 0``: every column with a ``Y`` or ``Y^2`` exponent drops out.
    """
    out = np.array(Bbar, dtype=float, copy=True)
    for j, mu in enumerate(basis):
        if mu[1] or mu[2]:
            out[..., j] = 0.0
    return out


def heston_ssm(p: HestonParams, dt: float = 1.0, n: int = 2) -> PolySSM:
    """Polynomial state space model of ``X = (v, dY, dY^2)`` sampled every ``dt``.

    Built from the generator by matrix exponentiation; accepts any ``mu``
    and ``dt``.  The initial state is ``(v(0), 0, 0)`` with ``v(0)`` Gamma
    distributed (a point mass when ``sigma_v = 0``).
    """
    gen = heston_generator(p, n)
    B = increment_matrix(matrix_exponential(gen.values * dt), gen.basis)
    vm = p.v0_moments(n)
    m0 = np.array([vm[lam[0]] if lam[1] == lam[2] == 0 else 0.0 for lam in gen.basis])
    return PolySSM(CoefficientMatrix.from_array(gen.basis, B), m0)


def heston_noise_covariance(p: HestonParams, t: int) -> np.ndarray:
    """Closed-form ``C(t) = Cov N(t)`` of ``(v, dY, dY^2)`` for unit spacing and ``mu = 0``."""
    if p.mu != 0:
        raise ValueError("the closed form assumes mu = 0; use heston_ssm for mu != 0")
    if t < 1:
        raise ValueError("C(t) is defined for t >= 1")
    k, m, s, r = p.kappa, p.m, p.sigma, p.rho
    mv, Sv = p.mu_v, p.sigma_v
    E = math.exp(-k)
    Et = math.exp(-k * t)
    dv = mv - m
    r2, s2 = r * r, s * s
    C11 = (1 - E) * s2 / k * ((1 - Et) * m + Et * mv - (1 - E) * m / 2)
    C12 = m / k * r * s * (1 - E) + r * s * dv * Et
    C13 = (s2 / (2 * k**2) * ((1 + 4 * r2 - E) * m - 2 * dv * Et) * (1 - E)
           + s2 / k * ((1 + k * r2) * dv * Et - 2 * r2 * m * E))
    C22 = m + dv * (1 - E) / k * Et / E
    C23 = (3 * r * s / k**2 * (dv * Et - m * E) * (1 / E - 1)
           - 3 * r * s / k * dv * Et + 3 * r * s / k * m)
    # dY^2 row: E[dY^4 | v] = q0 + q1 v + q2 v^2 and E[dY^2 | v] = a3 + A31 v
    a3, A31 = m * (1 - (1 - E) / k), (1 - E) / k
    q2 = 3 * A31**2
    q1 = 3 / k**3 * (2 * k**2 * m - 2 * k**2 * (m + r2 * s2) * E - 2 * k * m - 2 * k * m * E**2
                     + 2 * k * (2 * m - 2 * r2 * s2 - s2) * E - 4 * r2 * s2 * E
                     + s2 * (4 * r2 + 1) - s2 * E**2)
    q0 = 3 * m / (2 * k**3) * (2 * k**3 * m - 4 * k**2 * m + 4 * k**2 * (m + r2 * s2) * E
                               + 2 * k * m * E**2 + 4 * k * (-m + 4 * r2 * s2 + s2) * E
                               + 2 * k * (m + 4 * r2 * s2 + s2) + 4 * s2 * (6 * r2 + 1) * E
                               - s2 * (24 * r2 + 5) + s2 * E**2)
    mean_prev = p.v_mean(t - 1)
    second_prev = p.v_variance(t - 1) + mean_prev**2
    C33 = (q0 - a3**2) + (q1 - 2 * a3 * A31) * mean_prev + (q2 - A31**2) * second_prev
    return np.array([[C11, C12, C13], [C12, C22, C23], [C13, C23, C33]])


def heston_gaussian_equivalent(p: HestonParams, n_steps: int, dt: float = 1.0) -> LinearGaussianSSM:
    """Closed-form Gaussian equivalent of ``(v, dY, dY^2)`` for unit spacing and ``mu = 0``.

    ``C`` is stored per step for ``t = 1..n_steps`` and collapses to a
    constant matrix when ``v`` starts in its stationary mean and variance.
    Other spacings or a nonzero drift are rejected: use
    ``gaussian_equivalent(heston_ssm(p, dt), n_steps)`` instead.
    """
    if dt != 1.0:
        raise ValueError("the closed form holds for unit spacing only; use heston_ssm(p, dt)")
    if p.mu != 0:
        raise ValueError("the closed form assumes mu = 0; use heston_ssm(p, dt)")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    k, m = p.kappa, p.m
    E = math.exp(-k)
    a = m * np.array([1 - E, 0.0, 1 - (1 - E) / k])
    A = np.zeros((3, 3))
    A[0, 0] = E
    A[2, 0] = (1 - E) / k
    C = np.array([heston_noise_covariance(p, t) for t in range(1, n_steps + 1)])
    if np.max(np.abs(C - C[0])) <= 1e-14 * max(1.0, float(np.max(np.abs(C)))):
        C = C[0]
    mu0 = np.array([p.mu_v, 0.0, 0.0])
    Sigma0 = np.diag([p.sigma_v, 0.0, 0.0])
    return LinearGaussianSSM(a, A, C, mu0, Sigma0)


def heston_equivalent(p: HestonParams, n_steps: int, dt: float = 1.0) -> LinearGaussianSSM:
    """Gaussian equivalent of ``(v, dY, dY^2)`` through the generic moment route (any ``dt``, ``mu``)."""
    return gaussian_equivalent(heston_ssm(p, dt), n_steps)


# ---------------------------------------------------------------------------
# microstructure noise


def noisy_price_matrix(Bbar: np.ndarray, basis3: IndexBasis, q: NoiseParams) -> tuple[IndexBasis, np.ndarray]:
    """Coefficients of ``(v, Y, Y^2, Yt, Yt^2)`` with ``Yt = Y + eps`` from those of ``(v, Y, Y^2)``.

    Conditionally on ``(v(t), Y(t))`` the noisy power ``Yt^p`` has mean
    ``sum_k binom(p, k) Y^k m_{p-k}``; only even ``p - k`` contribute.  Even
    powers of ``Y`` are read off the ``Y^2`` coordinate.
    """
    n = basis3.n
    basis5 = IndexBasis(5, n)
    out = np.zeros((len(basis5), len(basis5)))
    col = [basis5.rank(mu + (0, 0)) for mu in basis3]
    for i, lam in enumerate(basis5):
        head, (l1, l2) = lam[:3], lam[3:]
        p = l1 + 2 * l2
        odd = p % 2
        for ell in range((p - odd) // 2 + 1):
            k = 2 * ell + odd
            w = math.comb(p, k) * q.moment(p - k)
            if w == 0:
                continue
            row = mi.add(head, (0, odd, ell))
            out[i, col] += w * Bbar[basis3.rank(row)]
    return basis5, out


def noisy_price_model(p: HestonParams, q: NoiseParams, dt: float = 1.0, n: int = 2,
                      y0: float = 0.0) -> PolySSM:
    """Polynomial state space model of ``(v, Y, Y^2, Yt, Yt^2)`` with noisy prices ``Yt = Y + eps``.

    ``Y(0) = y0`` is deterministic; ``eps(0)`` is drawn like the later noise.
    """
    gen = heston_generator(p, n)
    basis5, B = noisy_price_matrix(matrix_exponential(gen.values * dt), gen.basis, q)
    vm = p.v0_moments(n)
    m0 = np.zeros(len(basis5))
    for i, lam in enumerate(basis5):
        # E v^a Y^b Yt^c with Y = y0 fixed and Yt = y0 + eps
        a, b, c = lam[0], lam[1] + 2 * lam[2], lam[3] + 2 * lam[4]
        noisy = sum(math.comb(c, j) * y0 ** (c - j) * q.moment(j) for j in range(c + 1))
        m0[i] = vm[a] * y0**b * noisy
    return PolySSM(CoefficientMatrix.from_array(basis5, B), m0)


def squared_noisy_increment_row(
    Btilde: np.ndarray, basis5: IndexBasis, power: int = 1
) -> dict[tuple[int, ...], float]:
    """``E[(dYt(t))^(2 power) | F_{t-1}]`` as coefficients on monomials of ``X~(t-1)``.

    Expands ``(Yt(t) - Yt(t-1))^(2 power)`` binomially (odd terms carry a
    minus sign) and applies the noisy-price model to the ``Yt(t)`` factors;
    the ``Yt(t-1)`` factors shift the column index.  Monomials are keyed by
    their exponent in ``N^5`` and may exceed the degree of the row.
    """
    out: dict[tuple[int, ...], float] = {}
    total = 2 * power
    for k in range(total + 1):
        w = math.comb(total, k) * (-1) ** (total - k)
        cur = (0, 0, 0, k % 2, k // 2)
        lag = total - k
        shift = (0, 0, 0, lag % 2, lag // 2)
        row = Btilde[basis5.rank(cur)]
        for j in np.nonzero(row)[0]:
            mu = mi.add(basis5[j], shift)
            out[mu] = out.get(mu, 0.0) + w * row[j]
    return out


def microstructure_model(p: HestonParams, q: NoiseParams, dt: float = 1.0, n: int = 2) -> PolySSM:
    """Model of ``(v, Y, Y^2, Yt, Yt^2, dYt^2)``; raises because it is not polynomial.

    The conditional mean of ``dYt(t)^2`` involves ``Y(t-1) Yt(t-1)`` and
    ``Yt(t-1)^2``, monomials of degree two in the first five coordinates,
    while ``dYt^2`` itself has degree one.  Use :func:`noisy_price_model`
    and observe ``(Yt, Yt^2)`` instead.
    """
    base = noisy_price_model(p, q, dt, n)
    row = squared_noisy_increment_row(base.B.values, base.basis)
    offending = sorted(mu for mu, val in row.items() if sum(mu) > 1 and abs(val) > 1e-14)
    if offending:
        raise NotPolynomialError(
            f"E[dYt^2 | past] needs monomials {offending} of degree > 1; "
            "the six-dimensional noisy model is not a polynomial state space model")
    raise AssertionError("unreachable: the squared noisy increment always couples to Yt(t-1)^2")


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class HestonPaths:
    """Simulated paths on the output grid; arrays have shape ``(n_paths, n_steps + 1)``."""

    t: np.ndarray
    v: np.ndarray
    Y: np.ndarray
    Ytilde: np.ndarray
    columns: tuple[str, ...] = field(default=("t", "v", "Y", "dY", "dY2", "Ytilde", "dYtilde2"))

    @property
    def dY(self) -> np.ndarray:
        return np.diff(self.Y, axis=-1, prepend=self.Y[..., :1])

    @property
    def dY2(self) -> np.ndarray:
        return self.dY**2

    @property
    def dYtilde2(self) -> np.ndarray:
        return np.diff(self.Ytilde, axis=-1, prepend=self.Ytilde[..., :1]) ** 2

    def states(self) -> np.ndarray:
        """``(v, dY, dY^2)`` per path and time, shape ``(n_paths, n_steps + 1, 3)``."""
        return np.stack([self.v, self.dY, self.dY2], axis=-1)

    def table(self, path: int = 0) -> np.ndarray:
        """One path as rows ``(t, v, Y, dY, dY2, Ytilde, dYtilde2)``."""
        return np.column_stack([self.t, self.v[path], self.Y[path], self.dY[path], self.dY2[path],
                                self.Ytilde[path], self.dYtilde2[path]])


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Independent stream for one path, derived from ``(seed, path)`` only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path,)))


def simulate_heston(
    p: HestonParams,
    dt: float,
    n_steps: int,
    substeps: int = 20,
    seed: int = 0,
    n_paths: int = 1,
    noise: NoiseParams | None = None,
    y0: float = 0.0,
    chunk: int = 4096,
) -> HestonPaths:
    """Full-truncation Euler paths of ``(v, Y)`` with ``substeps`` sub-intervals per step.

    ``v(0)`` is Gamma distributed with mean ``mu_v`` and variance
    ``sigma_v`` (fixed at ``mu_v`` when ``sigma_v = 0``).  Every path uses
    its own random stream, so results do not depend on ``chunk``.
    """
    if substeps < 1 or n_steps < 0 or n_paths < 1 or dt <= 0:
        raise ValueError("need substeps >= 1, n_steps >= 0, n_paths >= 1 and dt > 0")
    noise = noise or NoiseParams()
    h = dt / substeps
    sq_h = math.sqrt(h)
    rbar = math.sqrt(max(0.0, 1.0 - p.rho**2))
    n_sub = n_steps * substeps
    v_out = np.empty((n_paths, n_steps + 1))
    y_out = np.empty((n_paths, n_steps + 1))
    eps = np.zeros((n_paths, n_steps + 1))
    for lo in range(0, n_paths, chunk):
        hi = min(n_paths, lo + chunk)
        z = np.empty((hi - lo, n_sub, 2))
        v = np.empty(hi - lo)
        for i in range(lo, hi):
            rng = path_rng(seed, i)
            z[i - lo] = rng.standard_normal((n_sub, 2))
            if p.sigma_v > 0 and p.mu_v > 0:
                v[i - lo] = rng.gamma(p.mu_v**2 / p.sigma_v, p.sigma_v / p.mu_v)
            else:
                v[i - lo] = p.mu_v
            if noise.tau > 0:
                eps[i] = noise.tau * rng.standard_normal(n_steps + 1)
        y = np.full(hi - lo, float(y0))
        v_out[lo:hi, 0] = v
        y_out[lo:hi, 0] = y
        for step in range(n_steps):
            for sub in range(substeps):
                z1, z2 = z[:, step * substeps + sub, 0], z[:, step * substeps + sub, 1]
                vp = np.maximum(v, 0.0)
                root = np.sqrt(vp)
                y = y + p.mu * h + root * sq_h * (p.rho * z1 + rbar * z2)
                v = v + p.kappa * (p.m - vp) * h + p.sigma * root * sq_h * z1
            v_out[lo:hi, step + 1] = np.maximum(v, 0.0)
            y_out[lo:hi, step + 1] = y
    t = dt * np.arange(n_steps + 1)
    return HestonPaths(t, v_out, y_out, y_out + eps)
