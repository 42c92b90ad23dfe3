"""Dense likelihood oracle, field simulation, and KL divergence."""

import math

import numpy as np
import pytest

from vecchiagp import exact, geo, kernels, vecchia
from vecchiagp.errors import NonPositiveDefiniteError
from vecchiagp.kernels import KernelParams, KernelSpec

MATERN_05 = KernelSpec("matern", KernelParams(1.0, 0.1, 0.5))


class TestExactLoglik:
    def test_standard_normal_at_zero(self):
        data = geo.Dataset(np.array([[0.0, 0.0]]), np.array([0.0]))
        spec = KernelSpec("matern", KernelParams(1.0, 1.0, 0.5))
        assert exact.exact_loglik(data, spec) == pytest.approx(
            -0.5 * math.log(2 * math.pi), rel=1e-15
        )

    def test_independent_pair_limit(self):
        # far enough apart that the correlation underflows to exactly zero
        data = geo.Dataset(np.array([[0.0, 0.0], [1000.0, 0.0]]), np.array([1.0, 1.0]))
        spec = KernelSpec("power_exponential", KernelParams(1.0, 1.0, 1.0))
        assert exact.exact_loglik(data, spec) == pytest.approx(
            -math.log(2 * math.pi) - 1.0, rel=1e-15
        )

    def test_bivariate_closed_form(self):
        d = 0.9
        y = np.array([0.3, -1.1])
        data = geo.Dataset(np.array([[0.0, 0.0], [0.0, d]]), y)
        spec = KernelSpec("matern", KernelParams(1.0, 1.0, 0.5))
        rho = math.exp(-d)
        det = 1.0 - rho**2
        quad = (y[0] ** 2 - 2 * rho * y[0] * y[1] + y[1] ** 2) / det
        expected = -math.log(2 * math.pi) - 0.5 * math.log(det) - 0.5 * quad
        assert exact.exact_loglik(data, spec) == pytest.approx(expected, rel=1e-14)

    def test_guard_limit(self):
        rng = np.random.default_rng(0)
        data = geo.Dataset(rng.random((50, 2)), rng.standard_normal(50))
        with pytest.raises(ValueError):
            exact.exact_loglik(data, MATERN_05, max_n=49)

    def test_non_pd_from_duplicates(self):
        locs = np.array([[0.2, 0.2], [0.2, 0.2]])
        data = geo.Dataset(locs, np.array([0.0, 0.0]))
        with pytest.raises(NonPositiveDefiniteError):
            exact.exact_loglik(data, MATERN_05)


class TestSimulate:
    def test_seed_determinism(self):
        rng = np.random.default_rng(1)
        locs = rng.random((30, 2))
        a = exact.simulate_grf(locs, MATERN_05, seed=42)
        b = exact.simulate_grf(locs, MATERN_05, seed=42)
        np.testing.assert_array_equal(a, b)
        c = exact.simulate_grf(locs, MATERN_05, seed=43)
        assert not np.array_equal(a, c)

    def test_sigma_scaling_linearity(self):
        rng = np.random.default_rng(2)
        locs = rng.random((25, 2))
        base = exact.simulate_grf(locs, KernelSpec("matern", KernelParams(1.0, 0.1, 0.5)), seed=7)
        scaled = exact.simulate_grf(locs, KernelSpec("matern", KernelParams(4.0, 0.1, 0.5)), seed=7)
        np.testing.assert_allclose(scaled, 2.0 * base, rtol=1e-12)

    def test_monte_carlo_covariance(self):
        # moderately correlated triangle so no entry is near zero
        locs = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, 0.25]])
        spec = KernelSpec("matern", KernelParams(1.0, 0.5, 0.5))
        sigma = kernels.cov_matrix(locs, locs, spec, geo.Euclidean())
        reps = 10000
        draws = np.empty((reps, 3))
        for r in range(reps):
            draws[r] = exact.simulate_grf(locs, spec, seed=r)
        sample_cov = draws.T @ draws / reps
        np.testing.assert_allclose(sample_cov, sigma, rtol=0.05)


class TestKLGaussian:
    def test_identical_inputs(self):
        rng = np.random.default_rng(3)
        b = rng.standard_normal((6, 6))
        sigma = b @ b.T + 6.0 * np.eye(6)
        assert abs(exact.kl_gaussian(sigma, sigma)) <= 1e-12

    def test_scalar_formula(self):
        got = exact.kl_gaussian(np.array([[1.0]]), np.array([[2.0]]))
        assert got == pytest.approx(0.5 * (0.5 - 1.0 + math.log(2.0)), rel=1e-12)
        assert got == pytest.approx(0.09657359, abs=1e-8)

    def test_against_spectral_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(4):
            b0 = rng.standard_normal((5, 5))
            b1 = rng.standard_normal((5, 5))
            s0 = b0 @ b0.T + 5.0 * np.eye(5)
            s1 = b1 @ b1.T + 5.0 * np.eye(5)
            # independent route: eigendecompositions for trace and log-dets
            w1, v1 = np.linalg.eigh(s1)
            inv1 = v1 @ np.diag(1.0 / w1) @ v1.T
            trace = float(np.trace(inv1 @ s0))
            logdet0 = float(np.sum(np.log(np.linalg.eigvalsh(s0))))
            logdet1 = float(np.sum(np.log(w1)))
            expected = 0.5 * (trace - 5 + logdet1 - logdet0)
            assert exact.kl_gaussian(s0, s1) == pytest.approx(expected, abs=1e-10)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            b0 = rng.standard_normal((4, 4))
            b1 = rng.standard_normal((4, 4))
            s0 = b0 @ b0.T + 4.0 * np.eye(4)
            s1 = b1 @ b1.T + 4.0 * np.eye(4)
            assert exact.kl_gaussian(s0, s1) >= -1e-10

    def test_shape_check(self):
        with pytest.raises(ValueError):
            exact.kl_gaussian(np.eye(3), np.eye(4))


class TestKLVecchia:
    def test_zero_at_full_conditioning(self):
        rng = np.random.default_rng(6)
        locs = rng.random((80, 2))
        data = geo.Dataset(locs, np.zeros(80))
        plan = vecchia.make_plan(data, m=79, ordering="random", seed=1)
        report = exact.kl_vecchia(locs, plan, MATERN_05)
        assert abs(report.kl) <= 1e-8

    def test_nonnegative_and_consistent(self):
        rng = np.random.default_rng(7)
        locs = rng.random((150, 2))
        data = geo.Dataset(locs, np.zeros(150))
        for m in (3, 8, 25):
            plan = vecchia.make_plan(data, m=m, ordering="random", seed=2)
            report = exact.kl_vecchia(locs, plan, MATERN_05)
            assert report.kl >= -1e-8
            assert report.kl == report.exact_ll0 - report.vecchia_ll0
            assert report.m == m
            assert report.ordering == "random"

    def test_more_neighbors_reduce_divergence(self):
        rng = np.random.default_rng(8)
        locs = rng.random((400, 2))
        data = geo.Dataset(locs, np.zeros(400))
        spec = KernelSpec("matern", KernelParams(1.0, 0.026270, 0.5))
        kls = {}
        for m in (5, 20, 60):
            plan = vecchia.make_plan(data, m=m, ordering="random", seed=3)
            kls[m] = exact.kl_vecchia(locs, plan, spec).kl
        assert kls[60] < kls[20] < kls[5]

    def test_guard_propagates(self):
        rng = np.random.default_rng(9)
        locs = rng.random((40, 2))
        data = geo.Dataset(locs, np.zeros(40))
        plan = vecchia.make_plan(data, m=5, ordering="random", seed=0)
        with pytest.raises(ValueError):
            exact.kl_vecchia(locs, plan, MATERN_05, max_n=10)
