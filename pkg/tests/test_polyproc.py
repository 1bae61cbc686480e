import math

import numpy as np
import pytest

from polyfilt.errors import NotPolynomialError, NumericalError
from polyfilt.heston import HestonParams, heston_generator
from polyfilt.multiindex import IndexBasis
from polyfilt.polyproc import (
    GaussianOU,
    GeneratorMatrix,
    PolyProcess,
    coefficient_table,
    cross_moment_continuous,
    diffusion_covariance,
    discretize,
    drift_coefficients,
    gaussian_equivalent_continuous,
    generator_from_table,
    matrix_exponential,
    moment_ode,
    process_from_ou,
    state_moments_at,
)
from polyfilt.polyssm import state_moments


def scalar_ou(a=0.3, A=-0.8, c=0.5, mu0=1.0, s0=0.2):
    return GaussianOU(np.array([a]), np.array([[A]]), np.array([[c]]), np.array([mu0]), np.array([[s0]]))


def ou_mean_var(t, a=0.3, A=-0.8, c=0.5, mu0=1.0, s0=0.2):
    e = math.exp(A * t)
    mean = e * mu0 + a / A * (e - 1)
    var = e**2 * s0 + c / (2 * A) * (e**2 - 1)
    return mean, var


def heston_process(p: HestonParams, n: int = 2) -> PolyProcess:
    gen = heston_generator(p, n)
    vm = p.v0_moments(n)
    m0 = np.array([vm[lam[0]] if lam[1] == lam[2] == 0 else 0.0 for lam in gen.basis])
    return PolyProcess(gen, m0)


class TestMatrixExponential:
    def test_diagonal(self):
        np.testing.assert_allclose(matrix_exponential(np.diag([0.0, 1.0, -2.0])),
                                   np.diag(np.exp([0.0, 1.0, -2.0])), rtol=1e-15)

    def test_nilpotent(self):
        np.testing.assert_allclose(matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]])),
                                   [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)

    def test_rotation(self):
        th = 0.7
        out = matrix_exponential(np.array([[0.0, -th], [th, 0.0]]))
        np.testing.assert_allclose(out, [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]], atol=1e-15)

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            matrix_exponential(np.array([[np.nan]]))


class TestGenerator:
    def test_heston_entries(self, desk):
        p = HestonParams(1.5, 0.16, 0.3, -0.5, mu=0.07)
        gen = heston_generator(p)
        b = gen.basis
        assert gen.values[b.rank((1, 0, 0)), b.rank((1, 0, 0))] == -1.5
        assert gen.values[b.rank((0, 0, 1)), b.rank((0, 1, 0))] == pytest.approx(2 * 0.07)
        assert gen.values[b.rank((0, 0, 1)), b.rank((1, 0, 0))] == 1.0

    def test_table_round_trip(self, desk):
        gen = heston_generator(desk, 3)
        table = coefficient_table(gen)
        back = generator_from_table(3, 3, table)
        np.testing.assert_allclose(back.values, gen.values, atol=1e-14)

    def test_degree_bound(self):
        with pytest.raises(NotPolynomialError):
            generator_from_table(1, 2, {((1,), (2,)): 1.0})
        vals = np.zeros((3, 3))
        vals[1, 2] = 1.0
        with pytest.raises(NotPolynomialError):
            GeneratorMatrix(IndexBasis(1, 2), vals)

    def test_breakpoints_required(self):
        with pytest.raises(ValueError):
            GeneratorMatrix(IndexBasis(1, 2), np.zeros((2, 3, 3)))
        with pytest.raises(ValueError):
            GeneratorMatrix(IndexBasis(1, 2), np.zeros((2, 3, 3)), times=np.array([0.0, 2.0, 1.0]))

    def test_semigroup(self, desk):
        gen = heston_generator(desk, 3)
        E1 = gen.transition(0, 0.7)
        E2 = gen.transition(0, 1.4)
        assert np.max(np.abs(E1 @ E1 - E2)) <= 1e-12 * max(1.0, np.max(np.abs(E2)))

    def test_piecewise_transition(self):
        g1 = generator_from_table(1, 2, {((1,), (0,)): 1.0, ((1,), (1,)): -1.0, ((2,), (0,)): 0.3})
        g2 = generator_from_table(1, 2, {((1,), (0,)): 0.2, ((1,), (1,)): -2.0, ((2,), (0,)): 0.1})
        gen = GeneratorMatrix(g1.basis, np.array([g1.values, g2.values]), times=np.array([0.0, 1.0, 3.0]))
        ref = matrix_exponential(g2.values * 1.5) @ matrix_exponential(g1.values * 0.5)
        np.testing.assert_allclose(gen.transition(0.5, 2.5), ref, atol=1e-14)
        np.testing.assert_array_equal(gen.at(10.0), g2.values)

    def test_reverse_interval(self, desk):
        with pytest.raises(ValueError):
            heston_generator(desk).transition(1.0, 0.5)


class TestMoments:
    def test_scalar_ou_closed_form(self):
        proc = process_from_ou(scalar_ou())
        ts = np.array([0.0, 0.5, 1.0, 3.0])
        out = moment_ode(proc, ts)
        for k, t in enumerate(ts):
            mean, var = ou_mean_var(t)
            assert out[k, 1] == pytest.approx(mean, rel=1e-13)
            assert out[k, 2] == pytest.approx(var + mean**2, rel=1e-13)

    def test_routes_agree(self, desk):
        proc = heston_process(HestonParams(1.0, 0.16, 0.3, -0.5, mu_v=0.32), 3)
        ts = np.linspace(0.0, 4.0, 9)
        a = moment_ode(proc, ts, "expm")
        b = moment_ode(proc, ts, "ode")
        assert np.max(np.abs(a - b)) <= 1e-8

    def test_bad_method(self, desk):
        with pytest.raises(ValueError):
            moment_ode(heston_process(desk), [1.0], "euler")

    def test_decreasing_times(self, desk):
        with pytest.raises(ValueError):
            moment_ode(heston_process(desk), [1.0, 0.5])

    def test_cross_moment_scalar(self):
        ou = scalar_ou()
        proc = process_from_ou(ou)
        s, t = 0.5, 1.7
        out = cross_moment_continuous(proc, s, t)[0, 0]
        ms, vs = ou_mean_var(s)
        mt, _ = ou_mean_var(t)
        assert out == pytest.approx(math.exp(-0.8 * (t - s)) * vs + ms * mt, rel=1e-12)

    def test_state_moments_symmetric(self, desk):
        mu, P = state_moments_at(heston_process(desk), 1.3)
        assert np.all(P == P.T)
        assert mu[0] == pytest.approx(desk.m)


class TestDiffusionCovariance:
    def test_ou(self):
        C = diffusion_covariance(process_from_ou(scalar_ou()), 2.0)
        assert C[0, 0] == pytest.approx(0.5, rel=1e-14)

    def test_deterministic(self):
        proc = process_from_ou(scalar_ou(c=0.0, s0=0.0))
        assert np.all(diffusion_covariance(proc, 1.0) == 0)

    def test_heston_analytic(self):
        p = HestonParams(1.0, 0.16, 0.3, -0.5, mu_v=0.32)
        proc = heston_process(p)
        for t in (0.0, 0.5, 2.0):
            C = diffusion_covariance(proc, t)
            Ev = p.v_mean(t)
            assert C[0, 0] == pytest.approx(p.sigma**2 * Ev, rel=1e-12)
            assert C[0, 1] == pytest.approx(p.rho * p.sigma * Ev, rel=1e-12)
            assert C[1, 1] == pytest.approx(Ev, rel=1e-12)

    def test_drift_coefficients(self, desk):
        a, A = drift_coefficients(heston_generator(desk))
        np.testing.assert_allclose(a, [desk.kappa * desk.m, 0.0, 0.0])
        assert A[0, 0] == -desk.kappa and A[2, 0] == 1.0


class TestGaussianEquivalent:
    def test_ou_round_trip(self, rng):
        d = 2
        A = rng.normal(size=(d, d)) - 2 * np.eye(d)
        L = rng.normal(size=(d, d))
        ou = GaussianOU(rng.normal(size=d), A, L @ L.T, rng.normal(size=d), np.eye(d))
        back = gaussian_equivalent_continuous(process_from_ou(ou))
        np.testing.assert_allclose(back.a, ou.a, atol=1e-12)
        np.testing.assert_allclose(back.A, ou.A, atol=1e-12)
        for t in (0.0, 0.4, 2.0):
            np.testing.assert_allclose(back.C_at(t), ou.C, atol=1e-9)

    def test_moments_match(self, desk):
        proc = heston_process(HestonParams(1.0, 0.16, 0.3, -0.5, mu_v=0.32))
        ou = gaussian_equivalent_continuous(proc)
        ts = [0.5, 1.0, 2.0]
        means, covs = ou.moments(ts)
        for k, t in enumerate(ts):
            mu, P = state_moments_at(proc, t)
            np.testing.assert_allclose(means[k], mu, atol=1e-8)
            np.testing.assert_allclose(covs[k], P - np.outer(mu, mu), atol=1e-8)

    def test_piecewise(self):
        g1 = generator_from_table(1, 2, {((1,), (0,)): 1.0, ((1,), (1,)): -1.0, ((2,), (0,)): 0.3})
        g2 = generator_from_table(1, 2, {((1,), (0,)): 0.2, ((1,), (1,)): -2.0, ((2,), (0,)): 0.1})
        gen = GeneratorMatrix(g1.basis, np.array([g1.values, g2.values]), times=np.array([0.0, 1.0, 3.0]))
        ou = gaussian_equivalent_continuous(PolyProcess(gen, np.array([1.0, 0.5, 0.5])))
        assert ou.a_at(0.5)[0] == 1.0 and ou.a_at(2.0)[0] == 0.2
        assert ou.C_at(0.5)[0, 0] == pytest.approx(0.3) and ou.C_at(2.0)[0, 0] == pytest.approx(0.1)


class TestDiscretize:
    def test_uniform(self, desk):
        proc = heston_process(desk)
        model = discretize(proc, 0.5)
        np.testing.assert_allclose(model.B.values, matrix_exponential(proc.generator.values * 0.5), atol=1e-15)

    def test_moments_agree(self, desk):
        proc = heston_process(HestonParams(1.0, 0.16, 0.3, -0.5, mu_v=0.32))
        mus, _ = state_moments(discretize(proc, 0.25), 8)
        ref = moment_ode(proc, np.arange(9) * 0.25)
        np.testing.assert_allclose(mus, ref[:, proc.basis.units()], atol=1e-13)

    def test_times(self, desk):
        proc = heston_process(desk)
        grid = [0.0, 0.3, 1.0, 1.1]
        model = discretize(proc, times=grid)
        assert model.B.n_steps == 3
        np.testing.assert_allclose(model.B.at(2), proc.generator.transition(0.3, 1.0), atol=1e-15)

    def test_piecewise_needs_steps(self):
        g = generator_from_table(1, 2, {((1,), (1,)): -1.0})
        gen = GeneratorMatrix(g.basis, np.array([g.values, g.values]), times=np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            discretize(PolyProcess(gen, np.array([1.0, 0.0, 0.0])), 0.5)
        assert discretize(PolyProcess(gen, np.array([1.0, 0.0, 0.0])), 0.5, n_steps=4).B.n_steps == 4

    def test_bad_dt(self, desk):
        with pytest.raises(ValueError):
            discretize(heston_process(desk), 0.0)
