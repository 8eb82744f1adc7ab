import math
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag
from scipy.linalg import LinAlgError
from scipy.stats import multivariate_normal, norm

from prognose.exceptions import FactorizationError
from prognose.gp import (
    PARAM_NAMES,
    GpConfig,
    RqKernelParams,
    factorize,
    fit_county_gp,
    fit_posterior,
    gp_predict_mean,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    optimize_hyperparams,
    write_hyperparams,
)


def _random_params(rng):
    return RqKernelParams(*np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=5)))


class KernelTests(SimpleTestCase):
    def test_worked_value(self):
        params = RqKernelParams(const_value=1.0, amplitude=2.0, length_scale=1.0, alpha_mix=1.0, noise=0.1)
        self.assertAlmostEqual(kernel_eval(params, 0.0, 1.0), 1.0 + 2.0 * 2.0 / 3.0)
        self.assertAlmostEqual(kernel_eval(params, 3.0, 3.0), 3.0)

    def test_symmetric_and_matches_matrix(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            params = _random_params(rng)
            a, b = rng.uniform(0, 50, size=2)
            self.assertAlmostEqual(kernel_eval(params, a, b), kernel_eval(params, b, a))
            self.assertAlmostEqual(kernel_matrix(params, [a], [b])[0, 0], kernel_eval(params, a, b))

    def test_gram_matrix_positive_semidefinite(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            params = _random_params(rng)
            xs = rng.uniform(0, 60, size=12)
            eig = np.linalg.eigvalsh(kernel_matrix(params, xs, xs))
            self.assertGreaterEqual(eig.min(), -1e-8 * eig.max())

    def test_large_mixture_approaches_squared_exponential(self):
        params = RqKernelParams(0.5, 2.0, 4.0, 1e6, 0.1)
        d = np.linspace(0.0, 12.0, 25)
        se = 0.5 + 2.0 * np.exp(-d ** 2 / (2.0 * 4.0 ** 2))
        np.testing.assert_allclose(kernel_matrix(params, d, [0.0])[:, 0], se, atol=1e-5)

    def test_non_positive_parameter_rejected(self):
        with self.assertRaises(ValueError):
            RqKernelParams(length_scale=0.0)

    def test_log_roundtrip(self):
        params = RqKernelParams(2.0, 3.0, 4.0, 5.0, 0.5)
        self.assertEqual(RqKernelParams.from_log(params.to_log()), RqKernelParams(
            *(float(v) for v in np.exp(np.log([2.0, 3.0, 4.0, 5.0, 0.5])))))


class LikelihoodTests(SimpleTestCase):
    def test_single_point(self):
        params = RqKernelParams(1.0, 1.0, 10.0, 1.0, 0.5)
        expected = norm.logpdf(0.0, scale=math.sqrt(2.5))
        self.assertAlmostEqual(log_marginal_likelihood(params, [0.0], [0.0]), expected)

    def test_matches_multivariate_normal(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            params = _random_params(rng)
            xs = np.sort(rng.uniform(0, 30, size=6))
            ys = rng.normal(size=6)
            cov = kernel_matrix(params, xs, xs) + params.noise * np.eye(6)
            expected = multivariate_normal(mean=np.zeros(6), cov=cov).logpdf(ys)
            self.assertAlmostEqual(log_marginal_likelihood(params, xs, ys), expected, places=6)

    def test_log_determinant_grows_with_noise(self):
        xs = np.arange(10.0)
        log_dets = []
        for noise in (1e-3, 1e-2, 0.1, 1.0, 10.0):
            factor = factorize(replace(RqKernelParams(1.0, 1.0, 3.0, 1.0, 0.1), noise=noise), xs)
            log_dets.append(2.0 * float(np.sum(np.log(np.diag(factor[0])))))
        self.assertTrue(np.all(np.diff(log_dets) > 0), log_dets)

    def test_empty_targets(self):
        with self.assertRaises(ValueError):
            log_marginal_likelihood(RqKernelParams(), [], [])

    def test_factorization_failure(self):
        with mock.patch("prognose.gp.cho_factor", side_effect=LinAlgError("nicht positiv definit")):
            with self.assertRaises(FactorizationError) as ctx:
                factorize(RqKernelParams(), [0.0, 1.0], fips="08001")
        self.assertIn("08001", str(ctx.exception))


class PosteriorTests(SimpleTestCase):
    def test_interpolates_training_points_with_small_noise(self):
        params = RqKernelParams(1.0, 1.0, 1.0, 1.0, 1e-6)
        xs = np.arange(10.0)
        ys = np.sin(xs / 3.0)
        posterior = fit_posterior(params, xs, ys)
        np.testing.assert_allclose(posterior.mean(xs), ys, atol=1e-3)
        self.assertLess(posterior.variance(xs).max(), 1e-3)

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(6)
        for n in range(1, 6):
            params = _random_params(rng)
            xs = np.sort(rng.uniform(0, 20, size=n))
            ys = rng.normal(size=n)
            x_new = rng.uniform(-5, 25, size=4)
            cov = kernel_matrix(params, xs, xs) + params.noise * np.eye(n)
            k_star = kernel_matrix(params, x_new, xs)
            mean = k_star @ np.linalg.solve(cov, ys)
            var = params.const_value + params.amplitude - np.sum(k_star * np.linalg.solve(cov, k_star.T).T, axis=1)
            posterior = fit_posterior(params, xs, ys)
            with self.subTest(n=n):
                np.testing.assert_allclose(posterior.mean(x_new), mean, rtol=0, atol=1e-8)
                np.testing.assert_allclose(posterior.variance(x_new), np.clip(var, 0.0, None), rtol=0, atol=1e-8)

    def test_variance_reverts_to_prior_far_away(self):
        params = RqKernelParams(1.0, 2.0, 1.0, 1.0, 0.1)
        posterior = fit_posterior(params, np.arange(5.0), np.ones(5))
        far = posterior.variance([1e6])[0]
        self.assertGreater(far, 0.0)
        self.assertLessEqual(far, 3.0 + 1e-9)
        self.assertTrue(np.all(posterior.variance(np.linspace(-5, 20, 50)) >= 0))

    def test_standardized_mean_in_target_units(self):
        posterior = fit_posterior(RqKernelParams(), np.arange(4.0), [10.0, 10.0, 10.0, 10.0], standardize=True)
        np.testing.assert_allclose(posterior.mean([1.0, 2.0]), [10.0, 10.0])

    def test_predict_mean_clipped(self):
        posterior = fit_posterior(RqKernelParams(1.0, 1.0, 3.0, 1.0, 0.01), np.arange(6.0), [5, 4, 3, 2, 1, 0])
        self.assertTrue(np.all(gp_predict_mean(posterior, np.arange(6.0, 30.0)) >= 0.0))


class OptimizationTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        self.xs = np.arange(40.0)
        self.ys = np.sin(self.xs / 6.0) + rng.normal(0, 0.1, size=40)

    def test_improves_on_start(self):
        result = optimize_hyperparams(self.xs, self.ys, cfg=GpConfig(restarts=3, seed=1, max_iter=50))
        self.assertGreaterEqual(result.log_ml, result.initial_log_ml)
        self.assertEqual(len(result.restarts), 3)
        for start, end in result.restarts:
            self.assertGreaterEqual(end, start)
        self.assertFalse(result.fallback)

    def test_recovers_length_scale(self):
        truth = RqKernelParams(1e-4, 1.0, 5.0, 100.0, 0.01)
        xs = np.arange(50.0)
        cov = kernel_matrix(truth, xs, xs) + truth.noise * np.eye(50)
        ys = np.linalg.cholesky(cov) @ np.random.default_rng(0).normal(size=50)
        init = RqKernelParams(0.1, 1.0, 10.0, 1.0, 0.1)
        result = optimize_hyperparams(xs, ys, init, GpConfig(restarts=1, max_iter=200))
        self.assertFalse(result.fallback)
        self.assertTrue(2.5 <= result.params.length_scale <= 10.0, result.params)

    def test_seeded_restarts_reproducible(self):
        cfg = GpConfig(restarts=2, seed=9, max_iter=30)
        a = optimize_hyperparams(self.xs, self.ys, cfg=cfg)
        b = optimize_hyperparams(self.xs, self.ys, cfg=cfg)
        self.assertEqual(a.params, b.params)

    def test_all_factorizations_fail(self):
        with mock.patch("prognose.gp.cho_factor", side_effect=LinAlgError("kaputt")):
            with self.assertLogs("prognose.gp", "WARNING"):
                result = optimize_hyperparams(self.xs, self.ys, cfg=GpConfig(restarts=2, max_iter=5), fips="08001")
        self.assertTrue(result.fallback)
        self.assertEqual(result.params, RqKernelParams())


@tag("slow")
class CountyGpTests(SimpleTestCase):
    def test_forecast_follows_smooth_trend(self):
        days = np.arange(60.0)
        deaths = 5.0 + 0.1 * days
        posterior = fit_county_gp("08001", deaths, GpConfig(restarts=2, seed=0, max_iter=100))
        forecast = gp_predict_mean(posterior, np.arange(60.0, 74.0))
        self.assertEqual(forecast.shape, (14,))
        self.assertTrue(np.all(forecast >= 0))
        self.assertLess(abs(forecast[0] - 11.0), 2.0)

    def test_window_and_too_short_series(self):
        posterior = fit_county_gp("08001", np.arange(30.0), GpConfig(restarts=1, max_iter=20, train_window=10))
        self.assertEqual(len(posterior.xs), 10)
        with self.assertRaises(ValueError):
            fit_county_gp("08001", [3.0])

    def test_write_hyperparams(self):
        posterior = fit_county_gp("08001", np.arange(20.0), GpConfig(restarts=1, max_iter=20))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_hyperparams(Path(tmp) / "gp_hyperparams.csv", [posterior])
            frame = pd.read_csv(path, dtype={"fips": str})
        self.assertEqual(list(frame.columns), ["fips", *PARAM_NAMES, "log_marginal_likelihood"])
        self.assertEqual(frame.loc[0, "fips"], "08001")
