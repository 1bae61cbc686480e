"""Discrete-time polynomial state space models and their Gaussian equivalents.

A model of order ``n`` is described by the coefficient matrix ``B(t)`` with

    E[X(t)^lam | F_{t-1}] = sum_mu b_{lam,mu}(t) X(t-1)^mu,   |lam| <= n,

where ``b_{lam,mu} = 0`` whenever ``|mu| > |lam|``.  Stacking the monomials
of the state in graded order, all conditional and unconditional moments
follow from products of ``B``.  For order two this is enough to write down
a linear Gaussian model sharing the first two moments of ``X``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Literal, Mapping, Sequence

import numpy as np

from . import multiindex as mi
from ._linalg import clamp_psd, symmetrize
from .errors import NonContractiveError, NotPolynomialError
from .multiindex import IndexBasis, MultiIndex


def _at(arr: np.ndarray, t: int, ndim: int) -> np.ndarray:
    """Value at step ``t >= 1`` of a constant or per-step stored array."""
    if arr.ndim == ndim:
        return arr
    if not 1 <= t <= arr.shape[0]:
        raise ValueError(f"step {t} outside the stored horizon 1..{arr.shape[0]}")
    return arr[t - 1]


def _horizon(*arrays: tuple[np.ndarray, int]) -> int | None:
    steps = [arr.shape[0] for arr, ndim in arrays if arr.ndim == ndim + 1]
    return min(steps) if steps else None


def structural_mask(basis: IndexBasis) -> np.ndarray:
    """Boolean mask of entries allowed to be nonzero (``|mu| <= |lam|``, constant row fixed)."""
    deg = np.array([sum(lam) for lam in basis])
    mask = deg[None, :] <= deg[:, None]
    if basis.include_zero:
        mask[0, :] = False
    return mask


@dataclass(frozen=True)
class CoefficientMatrix:
    """Matrix ``B = (b_{lam,mu})`` on a graded basis with the zero index.

    ``values`` has shape ``(N, N)`` for a time-homogeneous model or
    ``(T, N, N)`` holding ``B(1), ..., B(T)``.
    """

    basis: IndexBasis
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.basis.include_zero:
            raise ValueError("coefficient matrices live on a basis that includes 0")
        v = np.asarray(self.values)
        if v.dtype != object:
            v = v.astype(float)
        object.__setattr__(self, "values", v)
        size = len(self.basis)
        if v.ndim not in (2, 3) or v.shape[-2:] != (size, size):
            raise ValueError(f"expected shape (..., {size}, {size}), got {v.shape}")
        mats = v if v.ndim == 3 else v[None]
        forbidden = ~structural_mask(self.basis)
        forbidden[0, 0] = False
        for t, b in enumerate(mats, start=1):
            if b[0, 0] != 1:
                raise NotPolynomialError(f"b_(0,0)({t}) must be 1")
            bad = np.argwhere(forbidden & (b != 0))
            if len(bad):
                i, j = bad[0]
                raise NotPolynomialError(
                    f"b_{self.basis[i]},{self.basis[j]}({t}) = {b[i, j]} violates the degree bound")

    @classmethod
    def from_array(cls, basis: IndexBasis, values: np.ndarray, atol: float = 1e-9) -> CoefficientMatrix:
        """Build from a numerically computed array, zeroing structurally-zero entries.

        Entries that should vanish but exceed ``atol`` in magnitude raise instead.
        """
        v = np.array(values, dtype=float, copy=True)
        mats = v if v.ndim == 3 else v[None]
        mask = structural_mask(basis)
        leak = np.max(np.abs(np.where(mask, 0.0, mats - _e0(len(basis)))), initial=0.0)
        if leak > atol:
            raise NotPolynomialError(f"structurally-zero coefficient of size {leak:.3e}")
        mats[:, ~mask] = 0.0
        mats[:, 0, 0] = 1.0
        return cls(basis, v)

    @property
    def n_steps(self) -> int | None:
        """Number of stored steps, ``None`` when time-homogeneous."""
        return self.values.shape[0] if self.values.ndim == 3 else None

    def at(self, t: int) -> np.ndarray:
        return _at(self.values, t, 2)

    def entry(self, lam: Sequence[int], mu: Sequence[int], t: int = 1):
        return self.at(t)[self.basis.rank(lam), self.basis.rank(mu)]


def _e0(size: int) -> np.ndarray:
    e = np.zeros((size, size))
    e[0, 0] = 1.0
    return e


@dataclass(frozen=True)
class PolySSM:
    """Polynomial state space model of order ``n`` with its initial moments."""

    B: CoefficientMatrix
    initial_moments: np.ndarray

    def __post_init__(self) -> None:
        m0 = np.asarray(self.initial_moments, dtype=float)
        object.__setattr__(self, "initial_moments", m0)
        if m0.shape != (len(self.B.basis),):
            raise ValueError(f"initial moments must have length {len(self.B.basis)}")
        if abs(m0[0] - 1.0) > 1e-12:
            raise ValueError("initial moment of the zero index must be 1")
        if self.n >= 2:
            mu, P = _state_block(self.basis, m0)
            clamp_psd(P - np.outer(mu, mu), rtol=1e-8)

    @property
    def basis(self) -> IndexBasis:
        return self.B.basis

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def n(self) -> int:
        return self.basis.n


@dataclass(frozen=True)
class LinearRecursion:
    """``X(t) = a(t) + A(t) X(t-1) + N(t)`` with ``N`` a martingale difference sequence."""

    a: np.ndarray
    A: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "A", A)
        k = a.shape[-1]
        if A.shape[-2:] != (k, k):
            raise ValueError(f"A must be {k}x{k}, got {A.shape}")

    @property
    def dim(self) -> int:
        return self.a.shape[-1]

    @property
    def homogeneous(self) -> bool:
        return self.a.ndim == 1 and self.A.ndim == 2

    def a_at(self, t: int) -> np.ndarray:
        return _at(self.a, t, 1)

    def A_at(self, t: int) -> np.ndarray:
        return _at(self.A, t, 2)


@dataclass(frozen=True)
class LinearGaussianSSM:
    """``X(t) = a(t) + A(t) X(t-1) + B(t) W(t)`` with ``C(t) = B(t) B(t)^T``.

    ``a``, ``A`` and ``C`` are either constant or stored per step ``t = 1..T``.
    """

    a: np.ndarray
    A: np.ndarray
    C: np.ndarray
    mu0: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self) -> None:
        for name, ndim in (("a", 1), ("A", 2), ("C", 2), ("mu0", 1), ("Sigma0", 2)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if name in ("mu0", "Sigma0") and arr.ndim != ndim:
                raise ValueError(f"{name} must be {ndim}-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        d = self.mu0.shape[0]
        for name, tail in (("a", (d,)), ("A", (d, d)), ("C", (d, d)), ("Sigma0", (d, d))):
            if getattr(self, name).shape[-len(tail):] != tail:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected (..., {tail})")
        cs = self.C if self.C.ndim == 3 else self.C[None]
        object.__setattr__(self, "C", np.array([clamp_psd(c) for c in cs]).reshape(self.C.shape))
        object.__setattr__(self, "Sigma0", clamp_psd(self.Sigma0))

    @property
    def d(self) -> int:
        return self.mu0.shape[0]

    @property
    def n_steps(self) -> int | None:
        return _horizon((self.a, 1), (self.A, 2), (self.C, 2))

    def a_at(self, t: int) -> np.ndarray:
        return _at(self.a, t, 1)

    def A_at(self, t: int) -> np.ndarray:
        return _at(self.A, t, 2)

    def C_at(self, t: int) -> np.ndarray:
        return _at(self.C, t, 2)

    def noise_factor(self, t: int) -> np.ndarray:
        """Symmetric ``B(t)`` with ``B B^T = C(t)``."""
        from ._linalg import sqrt_psd

        return sqrt_psd(self.C_at(t))

    @property
    def recursion(self) -> LinearRecursion:
        return LinearRecursion(self.a, self.A)


# ---------------------------------------------------------------------------
# moments


def _state_block(basis: IndexBasis, moments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First moments and raw second-moment matrix of the state from a moment vector."""
    u = basis.units()
    pairs = np.array(basis.pairs())
    return moments[..., u], moments[..., pairs]


def conditional_moments(model: PolySSM | CoefficientMatrix, x: np.ndarray, s: int, t: int) -> np.ndarray:
    """``E[(X(t)^lam)_lam | F_s]`` from the monomial vector ``x`` of ``X(s)``."""
    B = model.B if isinstance(model, PolySSM) else model
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(B.basis):
        raise ValueError(f"monomial vector must have length {len(B.basis)}")
    if np.any(np.abs(x[..., 0] - 1.0) > 1e-12):
        raise ValueError("monomial vector must start with the constant 1")
    out = x
    for r in range(s + 1, t + 1):
        out = out @ B.at(r).T
    return out


def moments(model: PolySSM, T: int) -> np.ndarray:
    """Unconditional moment vectors ``E[X(t)^lam]`` for ``t = 0..T`` (shape ``(T+1, N)``)."""
    out = np.empty((T + 1, len(model.basis)))
    out[0] = model.initial_moments
    for t in range(1, T + 1):
        out[t] = model.B.at(t) @ out[t - 1]
    return out


def state_moments(model: PolySSM, T: int) -> tuple[np.ndarray, np.ndarray]:
    """``mu(t) = E X(t)`` and ``P(t) = E X(t) X(t)^T`` for ``t = 0..T`` from the exact moment formula."""
    if model.n < 2:
        raise ValueError("second moments need a model of order >= 2")
    mus, Ps = _state_block(model.basis, moments(model, T))
    return mus, symmetrize(Ps)


def extract_linear(B: CoefficientMatrix, order: int | None = None) -> LinearRecursion:
    """``a_j = b_{lam_j,0}`` and ``A_ij = b_{lam_i,lam_j}`` over the nonzero basis of ``order``."""
    order = B.basis.n if order is None else order
    if not 1 <= order <= B.basis.n:
        raise ValueError(f"order must lie in 1..{B.basis.n}")
    sub = [B.basis.rank(lam) for lam in IndexBasis(B.basis.d, order, include_zero=False)]
    mats = B.values if B.values.ndim == 3 else B.values[None]
    a = mats[:, sub, 0].astype(float)
    A = mats[:, sub][:, :, sub].astype(float)
    if B.values.ndim == 2:
        a, A = a[0], A[0]
    return LinearRecursion(a, A)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def stationary_mean(rec: LinearRecursion, tol: float = 1e-8) -> np.ndarray:
    """Limit ``(I - A)^{-1} a`` of the first moments of a homogeneous contractive recursion."""
    if not rec.homogeneous:
        raise ValueError("stationary mean needs a time-homogeneous recursion")
    rho = spectral_radius(rec.A)
    if rho > 1.0 - tol:
        raise NonContractiveError(f"spectral radius {rho:.6g} is not below 1")
    return np.linalg.solve(np.eye(rec.dim) - rec.A, rec.a)


def second_moments(
    model: LinearGaussianSSM | LinearRecursion,
    T: int,
    C: np.ndarray | None = None,
    mu0: np.ndarray | None = None,
    P0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """First moments and raw second moments ``P(t) = E X(t) X(t)^T`` for ``t = 0..T``.

    Runs the Lyapunov recursion

        P(t) = a a^T + a mu(t-1)^T A^T + A mu(t-1) a^T + A P(t-1) A^T + C(t).

    For a :class:`LinearGaussianSSM` the noise covariance and initial law come
    from the model; for a bare recursion pass ``C``, ``mu0`` and ``P0``.
    """
    if isinstance(model, LinearGaussianSSM):
        rec = model.recursion
        C = model.C
        mu0 = model.mu0
        P0 = model.Sigma0 + np.outer(model.mu0, model.mu0)
    else:
        rec = model
        if C is None or mu0 is None or P0 is None:
            raise ValueError("a bare recursion needs C, mu0 and P0")
        C = np.asarray(C, dtype=float)
    k = rec.dim
    mus = np.empty((T + 1, k))
    Ps = np.empty((T + 1, k, k))
    mus[0] = mu0
    Ps[0] = symmetrize(np.asarray(P0, dtype=float))
    for t in range(1, T + 1):
        a, A, c = rec.a_at(t), rec.A_at(t), _at(C, t, 2)
        Am = A @ mus[t - 1]
        mus[t] = a + Am
        P = np.outer(a, a) + np.outer(a, Am) + np.outer(Am, a) + A @ Ps[t - 1] @ A.T + c
        Ps[t] = symmetrize(P)
    return mus, Ps


def cross_moment(rec: LinearRecursion, P_s: np.ndarray, mu_s: np.ndarray, s: int, t: int) -> np.ndarray:
    """``P(s, t) = E X(t) X(s)^T`` for ``s <= t`` given ``P(s)`` and ``mu(s)``."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    out = np.array(P_s, dtype=float)
    mu_s = np.asarray(mu_s, dtype=float)
    for r in range(s + 1, t + 1):
        out = rec.A_at(r) @ out + np.outer(rec.a_at(r), mu_s)
    return out


def noise_covariance(model: PolySSM, T: int) -> np.ndarray:
    """``C(t) = Cov N(t)`` for ``t = 1..T`` (row ``t-1``) by subtraction from exact moments."""
    if model.n < 2:
        raise ValueError("the noise covariance needs a model of order >= 2")
    rec = extract_linear(model.B, order=1)
    mus, Ps = state_moments(model, T)
    out = np.empty((T, model.d, model.d))
    for t in range(1, T + 1):
        a, A = rec.a_at(t), rec.A_at(t)
        Am = A @ mus[t - 1]
        c = Ps[t] - np.outer(a, a) - np.outer(a, Am) - np.outer(Am, a) - A @ Ps[t - 1] @ A.T
        out[t - 1] = clamp_psd(c)
    return out


def gaussian_equivalent(model: PolySSM, T: int) -> LinearGaussianSSM:
    """Linear Gaussian model with the same first and second moments up to step ``T``.

    ``a`` and ``A`` are the degree-one block of ``B``; ``C`` is stored per
    step unless ``B`` is homogeneous and the computed covariances do not
    change with ``t`` (to 1e-14 relative), in which case it is constant.
    """
    rec = extract_linear(model.B, order=1)
    C = noise_covariance(model, T)
    scale = max(1.0, float(np.max(np.abs(C)))) if T else 1.0
    if rec.homogeneous and T and np.max(np.abs(C - C[0])) <= 1e-14 * scale:
        C = C[0]
    mus, Ps = state_moments(model, 0)
    return LinearGaussianSSM(rec.a, rec.A, C, mus[0], Ps[0] - np.outer(mus[0], mus[0]))


def ssm_from_gaussian(model: LinearGaussianSSM) -> PolySSM:
    """Order-two polynomial model of a linear Gaussian model (for round trips)."""
    d = model.d
    basis = IndexBasis(d, 2)
    u = basis.units()
    pairs = basis.pairs()
    steps = model.n_steps
    T = steps if steps is not None else 1

    def step_matrix(t: int) -> np.ndarray:
        a, A, C = model.a_at(t), model.A_at(t), model.C_at(t)
        b = np.zeros((len(basis), len(basis)))
        b[0, 0] = 1.0
        for i in range(d):
            b[u[i], 0] = a[i]
            b[u[i], u] = A[i]
        # E[X_i X_j | x] = (a + A x)_i (a + A x)_j + C_ij
        for i in range(d):
            for j in range(i, d):
                r = pairs[i][j]
                b[r, 0] = a[i] * a[j] + C[i, j]
                for p in range(d):
                    b[r, u[p]] += a[i] * A[j, p] + a[j] * A[i, p]
                    for q in range(d):
                        b[r, pairs[p][q]] += A[i, p] * A[j, q]
        return b

    vals = np.array([step_matrix(t) for t in range(1, T + 1)])
    if steps is None:
        vals = vals[0]
    m0 = np.zeros(len(basis))
    m0[0] = 1.0
    m0[u] = model.mu0
    P0 = model.Sigma0 + np.outer(model.mu0, model.mu0)
    for i in range(d):
        for j in range(d):
            m0[pairs[i][j]] = P0[i, j]
    return PolySSM(CoefficientMatrix(basis, vals), m0)


# ---------------------------------------------------------------------------
# lifting and augmentation


def lift(model: PolySSM, m: int) -> PolySSM:
    """Order-two model for the monomial vector ``W = (X^lam)_{0 < |lam| <= m}``.

    Needs a model of order at least ``2m``.  A monomial ``X^mu`` with
    ``m < |mu| <= 2m`` is written as the product of the components for a
    greedy split of ``mu`` into a degree-``m`` head and the remainder.
    """
    if m < 1 or model.n < 2 * m:
        raise ValueError(f"lifting to degree {m} needs order >= {2 * m}, model has {model.n}")
    inner = IndexBasis(model.d, m, include_zero=False)
    D = len(inner)
    outer = IndexBasis(D, 2)

    def expand(kappa: MultiIndex) -> MultiIndex:
        out = (0,) * model.d
        for i, k in enumerate(kappa):
            for _ in range(k):
                out = mi.add(out, inner[i])
        return out

    def represent(mu: MultiIndex) -> MultiIndex:
        if sum(mu) == 0:
            return (0,) * D
        if sum(mu) <= m:
            return mi.unit(D, inner.rank(mu))
        head, need = [], m
        for x in mu:
            take = min(x, need)
            head.append(take)
            need -= take
        tail = mi.sub(mu, head)
        return mi.unit(D, inner.rank(head), inner.rank(tail))

    rows = [model.basis.rank(expand(kappa)) for kappa in outer]
    cols = [outer.rank(represent(mu)) for mu in model.basis]
    mats = model.B.values if model.B.values.ndim == 3 else model.B.values[None]
    out = np.zeros((mats.shape[0], len(outer), len(outer)))
    for t, b in enumerate(mats):
        for i, r in enumerate(rows):
            np.add.at(out[t, i], cols, b[r])
    vals = out if model.B.values.ndim == 3 else out[0]
    m0 = model.initial_moments[rows]
    return PolySSM(CoefficientMatrix(outer, vals), m0)


def deterministic_y_moment(Y: np.ndarray) -> Callable[[tuple[tuple[int, ...], ...]], object]:
    """Moment function for a deterministic multiplier matrix ``Y``."""
    rows = [list(r) for r in (Y.tolist() if isinstance(Y, np.ndarray) else Y)]

    def moment(alpha: tuple[tuple[int, ...], ...]):
        out = 1
        for j, row in enumerate(alpha):
            for l, e in enumerate(row):
                if e:
                    out = out * rows[j][l] ** e
        return out

    return moment


def _compositions(total: int, parts: int):
    yield from mi._grade(parts, total) if parts else iter([()])


def _matrices_with_row_sums(rows: Sequence[int], ncols: int):
    """All nonnegative integer matrices with the given row sums."""
    return itertools.product(*[list(_compositions(r, ncols)) for r in rows])


def augment(
    B: CoefficientMatrix,
    c: Sequence,
    C: Sequence[Sequence],
    Y: Sequence[Sequence] | None = None,
    *,
    y_moment: Callable[[tuple[tuple[int, ...], ...]], object] | Mapping | None = None,
    variant: Literal["current", "lagged"] = "current",
    exact: bool = False,
) -> CoefficientMatrix:
    """Coefficient matrix of ``(X, Z)`` where ``Z(t) = Y(t) Z(t-1) + c + C X(t)``.

    ``variant="lagged"`` uses ``C X(t-1)`` instead of ``C X(t)``.  ``Y(t)`` is
    independent of the past; its mixed moments ``E prod_{j,l} Y_jl^alpha_jl``
    come from ``y_moment`` (a callable or mapping keyed by the exponent matrix
    as a tuple of row tuples), or from ``Y`` itself when it is deterministic.
    With ``exact=True`` all arithmetic stays in Python numbers so
    :class:`fractions.Fraction` inputs give exact coefficients.
    """
    if B.values.ndim == 3:
        mats = [B.at(t) for t in range(1, B.values.shape[0] + 1)]
        out = [augment(CoefficientMatrix(B.basis, b), c, C, Y, y_moment=y_moment,
                       variant=variant, exact=exact).values for b in mats]
        return CoefficientMatrix(_augmented_basis(B.basis, len(c)), np.array(out))
    c = list(c)
    C = [list(row) for row in C]
    k, d, n = len(c), B.basis.d, B.basis.n
    if any(len(row) != d for row in C) or len(C) != k:
        raise ValueError(f"C must be {k}x{d}")
    if y_moment is None:
        if Y is None:
            raise ValueError("need Y or y_moment")
        Yl = Y.tolist() if isinstance(Y, np.ndarray) else Y
        if len(Yl) != k or any(len(r) != k for r in Yl):
            raise ValueError(f"Y must be {k}x{k}")
        y_moment = deterministic_y_moment(Yl)
    elif isinstance(y_moment, Mapping):
        table = y_moment

        def y_moment(alpha, _t=table):  # noqa: F811
            if not any(any(r) for r in alpha):
                return 1
            return _t[alpha]

    b = B.values.tolist()
    rank = B.basis.rank
    new_basis = _augmented_basis(B.basis, k)
    zero_d = (0,) * d

    # S[eta][nu]: coefficient of X^nu in (C x)^eta
    S: dict[MultiIndex, dict[MultiIndex, object]] = {}
    # St[eta][nu]: coefficient of Z(t-1)^nu in E (Y Z + c)^eta
    St: dict[MultiIndex, dict[MultiIndex, object]] = {}
    for eta in IndexBasis(k, n):
        acc: dict[MultiIndex, object] = {}
        for alpha in _matrices_with_row_sums(eta, d):
            val = 1
            for j, row in enumerate(alpha):
                val = val * mi.multinomial(eta[j], row)
                for l, e in enumerate(row):
                    if e:
                        val = val * C[j][l] ** e
            nu = tuple(sum(row[l] for row in alpha) for l in range(d)) if k else zero_d
            acc[nu] = acc.get(nu, 0) + val
        S[eta] = acc
        acc = {}
        for used in itertools.product(*[range(e + 1) for e in eta]):
            for alpha in _matrices_with_row_sums(used, k):
                coef = 1
                for j, row in enumerate(alpha):
                    coef = coef * mi.multinomial(eta[j], tuple(row) + (eta[j] - used[j],))
                    if eta[j] - used[j]:
                        coef = coef * c[j] ** (eta[j] - used[j])
                if coef == 0:
                    continue
                nu = tuple(sum(row[l] for row in alpha) for l in range(k))
                acc[nu] = acc.get(nu, 0) + coef * y_moment(tuple(tuple(r) for r in alpha))
        St[eta] = acc

    size = len(new_basis)
    out = [[0] * size for _ in range(size)]
    for lam in new_basis:
        lam1, lam2 = lam[:d], lam[d:]
        row = out[new_basis.rank(lam)]
        for eta in itertools.product(*[range(e + 1) for e in lam2]):
            rest = tuple(a - e for a, e in zip(lam2, eta))
            w = mi.multi_binomial(lam2, eta)
            for nu, s_val in S[eta].items():
                if s_val == 0:
                    continue
                for mu2, st_val in St[rest].items():
                    if st_val == 0:
                        continue
                    f = w * s_val * st_val
                    if variant == "current":
                        src = b[rank(mi.add(lam1, nu))]
                        for j, bv in enumerate(src):
                            if bv != 0:
                                col = new_basis.rank(B.basis[j] + mu2)
                                row[col] = row[col] + f * bv
                    elif variant == "lagged":
                        src = b[rank(lam1)]
                        for j, bv in enumerate(src):
                            if bv != 0:
                                col = new_basis.rank(mi.add(B.basis[j], nu) + mu2)
                                row[col] = row[col] + f * bv
                    else:
                        raise ValueError(f"unknown variant {variant!r}")
    arr = np.array(out, dtype=object)
    if not exact:
        arr = arr.astype(float)
    return CoefficientMatrix(new_basis, arr)


def _augmented_basis(basis: IndexBasis, k: int) -> IndexBasis:
    return IndexBasis(basis.d + k, basis.n)


def exact(values) -> np.ndarray:
    """Object array of :class:`Fraction` for exact coefficient arithmetic."""
    return np.vectorize(Fraction, otypes=[object])(np.asarray(values))
