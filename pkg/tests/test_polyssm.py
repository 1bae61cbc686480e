import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from polyfilt.errors import NonContractiveError, NotPolynomialError
from polyfilt.heston import HestonParams, heston_ssm
from polyfilt.multiindex import IndexBasis
from polyfilt.polyssm import (
    CoefficientMatrix,
    LinearGaussianSSM,
    LinearRecursion,
    PolySSM,
    augment,
    conditional_moments,
    cross_moment,
    exact,
    extract_linear,
    gaussian_equivalent,
    lift,
    moments,
    noise_covariance,
    second_moments,
    ssm_from_gaussian,
    state_moments,
    stationary_mean,
    structural_mask,
)


def scalar_ar(a, rho, c, mu0=0.0, var0=0.0):
    return ssm_from_gaussian(LinearGaussianSSM(np.array([a]), np.array([[rho]]), np.array([[c]]),
                                               np.array([mu0]), np.array([[var0]])))


def random_gaussian(rng, d, steps=None):
    A = rng.normal(size=(d, d))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    L = rng.normal(size=(d, d))
    S = rng.normal(size=(d, d))
    C = L @ L.T
    a = rng.normal(size=d)
    if steps:
        a = rng.normal(size=(steps, d))
        C = np.array([C * (1 + 0.1 * t) for t in range(steps)])
    return LinearGaussianSSM(a, A, C, rng.normal(size=d), S @ S.T)


class TestCoefficientMatrix:
    def test_rejects_upper_entries(self):
        b = IndexBasis(1, 2)
        B = np.eye(3)
        B[1, 2] = 0.1
        with pytest.raises(NotPolynomialError):
            CoefficientMatrix(b, B)

    def test_rejects_bad_constant_row(self):
        B = np.eye(3)
        B[0, 0] = 2.0
        with pytest.raises(NotPolynomialError):
            CoefficientMatrix(IndexBasis(1, 2), B)

    def test_shape(self):
        with pytest.raises(ValueError):
            CoefficientMatrix(IndexBasis(1, 2), np.eye(4))

    def test_from_array_zeroes_roundoff(self):
        B = np.eye(3)
        B[1, 2] = 1e-15
        out = CoefficientMatrix.from_array(IndexBasis(1, 2), B)
        assert out.values[1, 2] == 0.0
        B[1, 2] = 1e-3
        with pytest.raises(NotPolynomialError):
            CoefficientMatrix.from_array(IndexBasis(1, 2), B)

    def test_per_step(self):
        vals = np.array([np.eye(3), 2 * np.eye(3) - np.diag([1, 0, 0])])
        B = CoefficientMatrix(IndexBasis(1, 2), vals)
        assert B.n_steps == 2
        assert B.at(2)[1, 1] == 2
        with pytest.raises(ValueError):
            B.at(3)

    def test_model_initial_moments(self):
        B = CoefficientMatrix(IndexBasis(1, 2), np.eye(3))
        with pytest.raises(ValueError):
            PolySSM(B, np.array([0.5, 0, 0]))
        with pytest.raises(Exception):
            PolySSM(B, np.array([1.0, 2.0, 1.0]))  # variance -3


class TestExtractLinear:
    def test_identity(self):
        rec = extract_linear(CoefficientMatrix(IndexBasis(1, 2), np.eye(3)))
        np.testing.assert_array_equal(rec.a, [0, 0])
        np.testing.assert_array_equal(rec.A, np.eye(2))

    def test_heston_v_block(self, desk):
        rec = extract_linear(heston_ssm(desk).B, order=1)
        k, m = desk.kappa, desk.m
        assert rec.a[0] == pytest.approx(m * (1 - math.exp(-k)), abs=1e-14)
        assert rec.A[0, 0] == pytest.approx(math.exp(-k), abs=1e-14)

    def test_degree_one_rows_triangular(self, desk):
        model = heston_ssm(desk, n=3)
        rec = extract_linear(model.B)
        nz = IndexBasis(3, 3, include_zero=False)
        for i, lam in enumerate(nz):
            if sum(lam) == 1:
                assert all(rec.A[i, j] == 0 for j, mu in enumerate(nz) if sum(mu) >= 2)


class TestConditionalMoments:
    def test_same_time(self, desk):
        model = heston_ssm(desk)
        x = np.concatenate([[1.0], np.arange(1, len(model.basis))])
        np.testing.assert_array_equal(conditional_moments(model, x, 2, 2), x)

    def test_geometric_sum(self):
        a, rho, x0 = 0.3, 0.7, 2.0
        model = scalar_ar(a, rho, 0.1)
        out = conditional_moments(model, np.array([1.0, x0, x0**2]), 0, 6)
        assert out[1] == pytest.approx(rho**6 * x0 + a * (1 - rho**6) / (1 - rho), rel=1e-14)

    def test_heston_mean_fixed_point(self, desk):
        model = heston_ssm(desk)
        x = np.zeros(len(model.basis))
        x[0] = 1.0
        x[model.basis.rank((1, 0, 0))] = desk.m
        x[model.basis.rank((2, 0, 0))] = desk.m**2
        out = conditional_moments(model, x, 0, 3)
        assert out[model.basis.rank((1, 0, 0))] == pytest.approx(desk.m, rel=1e-13)

    def test_order(self, desk):
        with pytest.raises(ValueError):
            conditional_moments(heston_ssm(desk), np.eye(10)[0], 3, 2)

    def test_leading_one(self, desk):
        with pytest.raises(ValueError):
            conditional_moments(heston_ssm(desk), np.zeros(10), 0, 1)


class TestStationaryMean:
    def test_zero(self):
        assert np.all(stationary_mean(LinearRecursion(np.zeros(2), 0.5 * np.eye(2))) == 0)

    def test_heston(self, desk):
        rec = extract_linear(heston_ssm(desk).B, order=1)
        assert stationary_mean(LinearRecursion(rec.a[:1], rec.A[:1, :1]))[0] == pytest.approx(desk.m)

    def test_iterate_oracle(self, rng):
        A = rng.normal(size=(3, 3))
        A *= 0.8 / max(abs(np.linalg.eigvals(A)))
        a = rng.normal(size=3)
        x = np.zeros(3)
        for _ in range(200):
            x = a + A @ x
        np.testing.assert_allclose(stationary_mean(LinearRecursion(a, A)), x, atol=1e-10)

    def test_non_contractive(self):
        with pytest.raises(NonContractiveError):
            stationary_mean(LinearRecursion(np.ones(1), np.eye(1)))


class TestSecondMoments:
    def test_deterministic(self):
        a = np.array([1.0, -2.0])
        model = LinearGaussianSSM(a, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(2), np.eye(2))
        _, Ps = second_moments(model, 3)
        for t in (1, 2, 3):
            np.testing.assert_array_equal(Ps[t], np.outer(a, a))

    def test_scalar_geometric(self):
        rho, c, p = 0.6, 0.5, 2.0
        rec = LinearRecursion(np.zeros(1), np.array([[rho]]))
        _, Ps = second_moments(rec, 10, C=np.array([[c]]), mu0=np.zeros(1), P0=np.array([[p]]))
        for t in range(11):
            ref = rho ** (2 * t) * p + c * (1 - rho ** (2 * t)) / (1 - rho**2)
            assert Ps[t, 0, 0] == pytest.approx(ref, rel=1e-13)

    def test_exact_symmetry(self, rng):
        _, Ps = second_moments(random_gaussian(rng, 4), 20)
        assert np.all(Ps == np.swapaxes(Ps, 1, 2))

    def test_bare_recursion_needs_noise(self):
        with pytest.raises(ValueError):
            second_moments(LinearRecursion(np.zeros(1), np.eye(1)), 2)


class TestCrossMoment:
    def test_same_time(self, rng):
        P = np.eye(2)
        rec = LinearRecursion(np.ones(2), 0.5 * np.eye(2))
        np.testing.assert_array_equal(cross_moment(rec, P, np.ones(2), 3, 3), P)

    def test_zero_drift(self, rng):
        A = rng.normal(size=(2, 2))
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        out = cross_moment(LinearRecursion(np.zeros(2), A), P, np.zeros(2), 1, 4)
        np.testing.assert_allclose(out, np.linalg.matrix_power(A, 3) @ P, rtol=1e-13)

    def test_order(self):
        with pytest.raises(ValueError):
            cross_moment(LinearRecursion(np.zeros(1), np.eye(1)), np.eye(1), np.zeros(1), 2, 1)

    def test_monte_carlo(self):
        a, rho, c = 0.2, 0.7, 0.3
        n = 100_000
        rng = np.random.default_rng(5)
        x = rng.normal(1.0, 0.5, n)
        path = [x]
        for _ in range(4):
            x = a + rho * x + math.sqrt(c) * rng.standard_normal(n)
            path.append(x)
        prod = path[4] * path[1]
        model = LinearGaussianSSM(np.array([a]), np.array([[rho]]), np.array([[c]]), np.array([1.0]),
                                  np.array([[0.25]]))
        mus, Ps = second_moments(model, 1)
        exact_val = cross_moment(model.recursion, Ps[1], mus[1], 1, 4)[0, 0]
        se = prod.std() / math.sqrt(n)
        assert abs(prod.mean() - exact_val) < 3 * se


class TestNoiseCovariance:
    def test_deterministic(self):
        model = ssm_from_gaussian(LinearGaussianSSM(np.array([0.5]), np.zeros((1, 1)), np.zeros((1, 1)),
                                                    np.zeros(1), np.zeros((1, 1))))
        assert np.all(noise_covariance(model, 4) == 0)

    def test_heston_stationary_constant(self, desk):
        C = noise_covariance(heston_ssm(desk), 6)
        np.testing.assert_allclose(C[0], C[5], atol=1e-14)

    def test_heston_c22(self, desk):
        C = noise_covariance(heston_ssm(desk), 3)
        assert C[2, 1, 1] == pytest.approx(desk.m, abs=1e-14)

    def test_order_one(self):
        B = CoefficientMatrix(IndexBasis(1, 1), np.eye(2))
        with pytest.raises(ValueError):
            noise_covariance(PolySSM(B, np.array([1.0, 0.0])), 2)


class TestGaussianEquivalent:
    def test_round_trip(self, rng):
        g = random_gaussian(rng, 3)
        back = gaussian_equivalent(ssm_from_gaussian(g), 5)
        np.testing.assert_allclose(back.a, g.a, atol=1e-10)
        np.testing.assert_allclose(back.A, g.A, atol=1e-10)
        np.testing.assert_allclose(back.C, g.C, atol=1e-10)
        np.testing.assert_allclose(back.Sigma0, g.Sigma0, atol=1e-10)

    def test_round_trip_time_varying(self, rng):
        g = random_gaussian(rng, 2, steps=4)
        back = gaussian_equivalent(ssm_from_gaussian(g), 4)
        np.testing.assert_allclose(back.C, g.C, atol=1e-10)
        np.testing.assert_allclose(back.a, g.a, atol=1e-10)

    def test_heston(self, desk):
        g = gaussian_equivalent(heston_ssm(desk), 3)
        E = math.exp(-desk.kappa)
        np.testing.assert_allclose(g.a, desk.m * np.array([1 - E, 0, 1 - (1 - E) / desk.kappa]), atol=1e-14)
        assert g.C.shape == (3, 3)

    def test_diagonal_factor(self):
        g = LinearGaussianSSM(np.zeros(2), np.zeros((2, 2)), np.diag([4.0, 9.0]), np.zeros(2), np.eye(2))
        np.testing.assert_allclose(g.noise_factor(1), np.diag([2.0, 3.0]), atol=1e-15)

    def test_rejects_indefinite(self):
        with pytest.raises(Exception):
            LinearGaussianSSM(np.zeros(1), np.eye(1), -np.eye(1), np.zeros(1), np.eye(1))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_moment_consistency(self, seed, d):
        g = random_gaussian(np.random.default_rng(seed), d)
        model = ssm_from_gaussian(g)
        ge = gaussian_equivalent(model, 20)
        m1, P1 = second_moments(ge, 20)
        m2, P2 = state_moments(model, 20)
        scale = max(1.0, np.max(np.abs(P2)))
        assert np.max(np.abs(P1 - P2)) <= 1e-9 * scale
        assert np.max(np.abs(m1 - m2)) <= 1e-9 * max(1.0, np.max(np.abs(m2)))
        for t in range(21):
            cov = P1[t] - np.outer(m1[t], m1[t])
            assert np.linalg.eigvalsh(cov)[0] >= -1e-8 * max(np.trace(cov), 1e-300)


# --- augmentation -------------------------------------------------------


def symbolic_augment(b_rows, lam1, lam2, variant, c, C, y_moments):
    """Brute-force E[X(t)^lam1 Z(t)^lam2 | x, z] for d = k = 1 as a polynomial in (x, z)."""
    x, z, y, xt = sp.symbols("x z y xt")
    lead = xt if variant == "current" else x
    expr = sp.expand((y * z + c + C * lead) ** lam2 * xt**lam1)
    poly = sp.Poly(expr, y, xt)
    out = 0
    for (py, px), coef in poly.terms():
        out += coef * y_moments[py] * sum(b_rows[px][i] * x**i for i in range(len(b_rows[px])))
    return sp.Poly(sp.expand(out), x, z)


def base_rows():
    # E[X(t) | x] = 1/3 + x/2, E[X(t)^2 | x] = 1/5 + x/7 + x^2/4
    return {0: [1], 1: [Fraction(1, 3), Fraction(1, 2)], 2: [Fraction(1, 5), Fraction(1, 7), Fraction(1, 4)]}


def base_matrix():
    rows = base_rows()
    B = np.zeros((3, 3), dtype=object)
    B[:] = Fraction(0)
    for r, vals in rows.items():
        for j, v in enumerate(vals):
            B[r, j] = Fraction(v)
    return CoefficientMatrix(IndexBasis(1, 2), B)


class TestAugment:
    def test_lam2_zero(self, desk):
        B = heston_ssm(desk).B
        out = augment(B, c=[0.1], C=[[1.0, 0.0, 0.0]], Y=[[0.5]])
        d = 3
        for lam in out.basis:
            if lam[d:] != (0,):
                continue
            for mu in out.basis:
                val = out.entry(lam, mu)
                if mu[d:] != (0,):
                    assert val == 0
                else:
                    assert val == pytest.approx(B.entry(lam[:d], mu[:d]), abs=1e-15)

    @pytest.mark.parametrize("variant", ["current", "lagged"])
    @pytest.mark.parametrize("lam", [(0, 1), (1, 1), (0, 2), (2, 0)])
    def test_symbolic_deterministic(self, variant, lam):
        y, c, C = Fraction(2, 3), Fraction(1, 4), Fraction(3, 2)
        out = augment(base_matrix(), c=[c], C=[[C]], Y=[[y]], variant=variant, exact=True)
        ref = symbolic_augment(base_rows(), lam[0], lam[1], variant, sp.Rational(1, 4), sp.Rational(3, 2),
                               {k: sp.Rational(2, 3) ** k for k in range(3)})
        for mu in out.basis:
            coef = ref.coeff_monomial(sp.Symbol("x") ** mu[0] * sp.Symbol("z") ** mu[1])
            assert out.entry(lam, mu) == Fraction(int(coef.p), int(coef.q))

    @pytest.mark.parametrize("variant", ["current", "lagged"])
    def test_symbolic_stochastic(self, variant):
        moms = {0: Fraction(1), 1: Fraction(1, 2), 2: Fraction(3, 8)}
        out = augment(base_matrix(), c=[Fraction(1, 5)], C=[[Fraction(-1, 2)]], variant=variant, exact=True,
                      y_moment={((k,),): v for k, v in moms.items()})
        ref = symbolic_augment(base_rows(), 0, 2, variant, sp.Rational(1, 5), sp.Rational(-1, 2),
                               {k: sp.Rational(v.numerator, v.denominator) for k, v in moms.items()})
        for mu in out.basis:
            coef = ref.coeff_monomial(sp.Symbol("x") ** mu[0] * sp.Symbol("z") ** mu[1])
            assert out.entry((0, 2), mu) == Fraction(int(coef.p), int(coef.q))

    def test_float_matches_exact(self):
        ex = augment(base_matrix(), c=[Fraction(1, 4)], C=[[Fraction(3, 2)]], Y=[[Fraction(2, 3)]], exact=True)
        fl = augment(CoefficientMatrix(IndexBasis(1, 2), base_matrix().values.astype(float)),
                     c=[0.25], C=[[1.5]], Y=[[2 / 3]])
        np.testing.assert_allclose(fl.values, ex.values.astype(float), rtol=1e-14, atol=1e-15)

    def test_triangular(self, desk):
        out = augment(heston_ssm(desk).B, c=[0.0, 1.0], C=[[0, 1, 0], [1, 0, 0]], Y=[[0.5, 0.1], [0.0, 0.9]])
        mask = structural_mask(out.basis)
        mask[0, 0] = True
        assert np.all(out.values[~mask] == 0)

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            augment(base_matrix(), c=[1], C=[[1, 2]], Y=[[1]])
        with pytest.raises(ValueError):
            augment(base_matrix(), c=[1], C=[[1]])

    def test_exact_helper(self):
        arr = exact([[1, 0.5]])
        assert arr[0, 1] == Fraction(1, 2)

    @pytest.mark.parametrize("variant", ["current", "lagged"])
    def test_monte_carlo_mean(self, variant):
        # X: AR(1); Z(t) = Y(t) Z(t-1) + c + C X(t or t-1) with Y ~ N(0.5, 0.1^2)
        a, rho, c_x = 0.1, 0.5, 0.2
        base = ssm_from_gaussian(LinearGaussianSSM(np.array([a]), np.array([[rho]]), np.array([[c_x]]),
                                                   np.array([0.3]), np.array([[0.1]])))
        ey, vy = 0.5, 0.01
        moms = {((0,),): 1.0, ((1,),): ey, ((2,),): vy + ey**2}
        c, C = 0.2, 0.7
        B = augment(base.B, c=[c], C=[[C]], y_moment=moms, variant=variant)
        m0 = np.zeros(len(B.basis))
        m0[0] = 1
        # Z(0) = 1 deterministic and independent of X(0)
        for i, lam in enumerate(B.basis):
            m0[i] = base.initial_moments[base.basis.rank(lam[:1])] * 1.0 ** lam[1]
        model = PolySSM(B, m0)
        T = 5
        mus, Ps = second_moments(gaussian_equivalent(model, T), T)
        n = 100_000
        rng = np.random.default_rng(11)
        x = rng.normal(0.3, math.sqrt(0.1), n)
        z = np.ones(n)
        for _ in range(T):
            x_new = a + rho * x + math.sqrt(c_x) * rng.standard_normal(n)
            lead = x_new if variant == "current" else x
            z = rng.normal(ey, math.sqrt(vy), n) * z + c + C * lead
            x = x_new
        assert abs(z.mean() - mus[T, 1]) < 3 * z.std() / math.sqrt(n)
        assert abs((z**2).mean() - Ps[T, 1, 1]) < 3 * (z**2).std() / math.sqrt(n)


class TestLift:
    def test_d1_m2(self):
        # order-4 model of a Gaussian AR(1): E[X(t)^k | x] from the normal moments of a + rho x + N(0, c)
        a, rho, c = 0.2, 0.6, 0.3
        x, w = sp.symbols("x w")
        basis = IndexBasis(1, 4)
        B = np.zeros((5, 5))
        normal = {0: 1, 1: 0, 2: c, 3: 0, 4: 3 * c**2}
        for k in range(5):
            poly = sp.Poly(sp.expand((a + rho * x + w) ** k), w)
            expr = sum(coef * normal[pw[0]] for pw, coef in poly.terms())
            p = sp.Poly(sp.expand(expr), x)
            for (e,), coef in p.terms():
                B[k, e] = float(coef)
        mu0, var0 = 0.5, 0.2
        m0 = np.array([1, mu0, var0 + mu0**2, mu0**3 + 3 * mu0 * var0, mu0**4 + 6 * mu0**2 * var0 + 3 * var0**2])
        model = PolySSM(CoefficientMatrix(basis, B), m0)
        lifted = lift(model, 2)
        assert lifted.basis.d == 2 and lifted.n == 2
        mask = structural_mask(lifted.basis)
        mask[0, 0] = True
        assert np.all(lifted.B.values[~mask] == 0)
        orig = moments(model, 8)
        mus, Ps = state_moments(lifted, 8)
        np.testing.assert_allclose(mus[:, 0], orig[:, 1], rtol=1e-12)
        np.testing.assert_allclose(mus[:, 1], orig[:, 2], rtol=1e-12)
        np.testing.assert_allclose(Ps[:, 1, 1], orig[:, 4], rtol=1e-12)
        np.testing.assert_allclose(Ps[:, 0, 1], orig[:, 3], rtol=1e-12)

    def test_needs_order(self, desk):
        with pytest.raises(ValueError):
            lift(heston_ssm(desk), 2)
