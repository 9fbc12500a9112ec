import sys
import os
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from sklearn.neighbors import KernelDensity

# Add the parent directory to the path to import tools
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from tools.densities import (
    GaussianDensity,
    KernelDensityEstimate,
    gaussian,
    gaussian_mixture,
    kde,
    logistic_product,
    mixture_path,
    sample,
    unnormalized,
)
from tools.errors import DensityError
from tools.numerics import fd_gradient, fd_jacobian, relative_gap


class TestGaussianDensity(unittest.TestCase):
    def setUp(self):
        self.mean = np.array([0.5, -1.0])
        self.cov = np.array([[1.5, 0.4], [0.4, 0.7]])
        self.density = gaussian(self.mean, self.cov)
        self.points = np.array([[0.0, 0.0], [1.0, -2.0], [3.0, 1.5]])

    def test_log_density_matches_scipy(self):
        expected = stats.multivariate_normal(self.mean, self.cov).logpdf(self.points)
        np.testing.assert_allclose(self.density.log_density(self.points), expected, rtol=1e-12)

    def test_gradient_and_hessian(self):
        precision = np.linalg.inv(self.cov)
        for x in self.points:
            np.testing.assert_allclose(self.density.grad_log_density(x), -precision @ (x - self.mean), atol=1e-12)
            np.testing.assert_allclose(self.density.hess_log_density(x), -precision, atol=1e-12)
        self.assertAlmostEqual(self.density.laplacian_log_density(self.points[0]), -np.trace(precision), places=12)

    def test_jet_shapes(self):
        jet = self.density.jet(self.points)
        self.assertEqual(jet.log_density.shape, (3,))
        self.assertEqual(jet.grad.shape, (3, 2))
        self.assertEqual(jet.hess.shape, (3, 2, 2))
        single = self.density.jet(self.points[0])
        self.assertIsInstance(single.log_density, float)
        self.assertEqual(single.grad.shape, (2,))

    def test_scalar_covariance(self):
        density = gaussian([0.0, 0.0], 2.0)
        np.testing.assert_allclose(density.cov, 2.0 * np.eye(2))
        self.assertEqual(gaussian([1.0]).describe(), "N(1, 1I)")

    def test_invalid_covariance(self):
        with self.assertRaises(DensityError) as ctx:
            gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
        self.assertIn("positive definite", str(ctx.exception))
        with self.assertRaises(DensityError):
            gaussian([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
        with self.assertRaises(DensityError):
            GaussianDensity([0.0], np.eye(2))

    def test_immutable_parameters(self):
        with self.assertRaises(ValueError):
            self.density.mean[0] = 3.0


class TestLogisticProduct(unittest.TestCase):
    def test_log_density_matches_scipy(self):
        density = logistic_product([0.0, 1.0], [1.0, 0.5])
        x = np.array([[0.0, 0.0], [2.0, -1.0], [-30.0, 40.0]])
        expected = stats.logistic(0.0, 1.0).logpdf(x[:, 0]) + stats.logistic(1.0, 0.5).logpdf(x[:, 1])
        np.testing.assert_allclose(density.log_density(x), expected, rtol=1e-12)

    def test_value_at_location(self):
        self.assertAlmostEqual(logistic_product([0.0], [1.0]).log_density(0.0), -math.log(4.0), places=14)

    def test_tail_box(self):
        low, high = logistic_product([0.0], [1.0]).support_box()
        self.assertEqual(high[0], 40.0)
        self.assertEqual(low[0], -40.0)

    def test_invalid_scale(self):
        with self.assertRaises(DensityError):
            logistic_product([0.0], [0.0])


class TestMixtures(unittest.TestCase):
    def setUp(self):
        self.mixture = gaussian_mixture([0.3, 0.7], [[-1.0], [2.0]], [0.5, 1.5])

    def test_log_density_against_direct_sum(self):
        x = np.array([-3.0, 0.0, 1.0, 10.0])
        direct = np.log(0.3 * stats.norm(-1.0, math.sqrt(0.5)).pdf(x) + 0.7 * stats.norm(2.0, math.sqrt(1.5)).pdf(x))
        np.testing.assert_allclose(self.mixture.log_density(x), direct, rtol=1e-12)

    def test_derivatives_by_finite_differences(self):
        for x in (-2.5, -0.3, 0.8, 4.0):
            point = np.array([x])
            self.assertLess(relative_gap(fd_gradient(self.mixture.log_density, point),
                                         self.mixture.grad_log_density(point)), 1e-5)
            self.assertLess(relative_gap(fd_jacobian(self.mixture.grad_log_density, point),
                                         self.mixture.hess_log_density(point)), 1e-4)

    def test_far_tail_is_finite(self):
        jet = self.mixture.jet(np.array([[-200.0], [300.0]]))
        self.assertTrue(np.all(np.isfinite(jet.log_density)))
        self.assertTrue(np.all(np.isfinite(jet.grad)))
        self.assertTrue(np.all(np.isfinite(jet.hess)))

    def test_single_component_is_exact(self):
        component = gaussian([0.5, 0.5], [[1.0, 0.2], [0.2, 2.0]])
        single = gaussian_mixture([1.0], [[0.5, 0.5]], [[[1.0, 0.2], [0.2, 2.0]]])
        x = np.array([[0.1, -0.3], [2.0, 1.0]])
        np.testing.assert_array_equal(single.grad_log_density(x), component.grad_log_density(x))
        np.testing.assert_array_equal(single.hess_log_density(x), component.hess_log_density(x))

    def test_weight_validation(self):
        with self.assertRaises(DensityError):
            gaussian_mixture([0.5, 0.6], [[0.0], [1.0]], [1.0, 1.0])
        with self.assertRaises(DensityError):
            gaussian_mixture([1.5, -0.5], [[0.0], [1.0]], [1.0, 1.0])
        with self.assertRaises(DensityError):
            gaussian_mixture([1.0], [[0.0], [1.0]], [1.0, 1.0])

    def test_mixture_path(self):
        q, p = gaussian([0.0]), gaussian([2.0])
        np.testing.assert_allclose(mixture_path(q, p, 0.0).log_density([0.5, 1.5]), q.log_density([0.5, 1.5]))
        np.testing.assert_allclose(mixture_path(q, p, 1.0).log_density([0.5, 1.5]), p.log_density([0.5, 1.5]))
        with self.assertRaises(DensityError):
            mixture_path(q, p, 1.5)
        with self.assertRaises(DensityError):
            mixture_path(q, gaussian([0.0, 0.0]), 0.5)

    def test_support_box_covers_components(self):
        low, high = self.mixture.support_box()
        self.assertLessEqual(low[0], -1.0 - 12 * math.sqrt(1.5))
        self.assertGreaterEqual(high[0], 2.0 + 12 * math.sqrt(1.5))


class TestKernelDensityEstimate(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.points = rng.standard_normal((12, 2))
        self.bandwidth = 0.6
        self.kde = kde(self.points, self.bandwidth)

    def test_matches_sklearn(self):
        queries = np.random.default_rng(5).standard_normal((20, 2)) * 2
        oracle = KernelDensity(kernel="gaussian", bandwidth=self.bandwidth).fit(self.points)
        np.testing.assert_allclose(self.kde.log_density(queries), oracle.score_samples(queries), atol=1e-8)

    def test_leave_one_out_equals_rebuilt(self):
        queries = np.array([[0.0, 0.0], [1.0, -1.0]])
        for i in (0, 5, 11):
            rebuilt = kde(np.delete(self.points, i, axis=0), self.bandwidth)
            reweighted = self.kde.leave_one_out(i)
            np.testing.assert_allclose(reweighted.log_density(queries), rebuilt.log_density(queries), rtol=1e-12)
            np.testing.assert_allclose(reweighted.grad_log_density(queries), rebuilt.grad_log_density(queries),
                                       rtol=1e-10, atol=1e-12)

    def test_batched_leave_one_out_jets(self):
        jets = self.kde.leave_one_out_jets()
        for i in range(len(self.points)):
            single = self.kde.leave_one_out(i).jet(self.points[i])
            self.assertAlmostEqual(jets.log_density[i], single.log_density, places=12)
            np.testing.assert_allclose(jets.grad[i], single.grad, atol=1e-12)
            np.testing.assert_allclose(jets.hess[i], single.hess, atol=1e-12)

    def test_components_are_gaussians(self):
        self.assertEqual(len(self.kde.components), 12)
        self.assertIsInstance(self.kde.leave_one_out(0), KernelDensityEstimate)

    def test_invalid_inputs(self):
        with self.assertRaises(DensityError):
            kde(self.points, 0.0)
        with self.assertRaises(DensityError):
            kde(self.points[:1], 1.0).leave_one_out_jets()


class TestUnnormalizedAndSampling(unittest.TestCase):
    def test_unnormalized_shifts_log_density_only(self):
        base = gaussian_mixture([0.5, 0.5], [[-1.0], [1.0]], [1.0, 1.0])
        x = np.array([-0.5, 0.0, 2.0])
        for c in (0.1, 10.0):
            scaled = unnormalized(base, c)
            np.testing.assert_allclose(scaled.log_density(x), base.log_density(x) + math.log(c))
            np.testing.assert_array_equal(scaled.grad_log_density(x), base.grad_log_density(x))
            np.testing.assert_array_equal(scaled.hess_log_density(x), base.hess_log_density(x))
        with self.assertRaises(DensityError):
            unnormalized(base, 0.0)

    def test_sample_is_deterministic(self):
        q = gaussian_mixture([0.5, 0.5], [[-1.0], [1.0]], [1.0, 1.0])
        first = sample(q, 1000, seed=3)
        np.testing.assert_array_equal(first, sample(q, 1000, seed=3))
        self.assertEqual(first.shape, (1000, 1))
        self.assertFalse(np.array_equal(first, sample(q, 1000, seed=4)))

    def test_sample_moments(self):
        draws = sample(logistic_product([1.0], [0.5]), 50_000, seed=1)
        self.assertAlmostEqual(float(np.mean(draws)), 1.0, delta=5 * 0.5 * math.pi / math.sqrt(3) / math.sqrt(50_000))

    def test_mixture_component_frequencies(self):
        weights = np.array([0.2, 0.5, 0.3])
        means = np.array([-10.0, 10.0, 30.0])
        q = gaussian_mixture(weights.tolist(), [[m] for m in means], [1.0, 1.0, 1.0])
        n = 100_000
        draws = sample(q, n, seed=7)[:, 0]
        labels = np.argmin(np.abs(draws[:, None] - means[None, :]), axis=1)
        frequencies = np.bincount(labels, minlength=3) / n
        sd = np.sqrt(weights * (1 - weights) / n)
        np.testing.assert_array_less(np.abs(frequencies - weights), 5 * sd)

    def test_score_has_mean_zero_under_own_samples(self):
        """E_q grad log q = 0 for every sampler"""
        n = 100_000
        densities = [
            gaussian([0.5, -1.0], [[1.5, 0.4], [0.4, 0.7]]),
            gaussian_mixture([0.3, 0.7], [[-1.0], [2.0]], [0.5, 1.5]),
            logistic_product([0.0, 1.0], [1.0, 0.5]),
        ]
        for seed, density in enumerate(densities):
            grads = density.grad_log_density(sample(density, n, seed=seed))
            mean = grads.mean(axis=0)
            bound = 5 * np.linalg.norm(grads.std(axis=0, ddof=1)) / math.sqrt(n)
            self.assertLessEqual(np.linalg.norm(mean), bound, density.describe())


class TestDensityProperties(unittest.TestCase):
    @settings(max_examples=40, deadline=None)
    @given(mean=arrays(np.float64, 2, elements=st.floats(-3, 3)),
           x=arrays(np.float64, 2, elements=st.floats(-4, 4)),
           scale=st.floats(0.3, 3.0))
    def test_gaussian_gradient_matches_finite_differences(self, mean, x, scale):
        density = gaussian(mean, scale)
        self.assertLess(relative_gap(fd_gradient(density.log_density, x), density.grad_log_density(x)), 1e-5)

    @settings(max_examples=40, deadline=None)
    @given(x=arrays(np.float64, 2, elements=st.floats(-6, 6)))
    def test_logistic_hessian_matches_finite_differences(self, x):
        density = logistic_product([0.5, -0.5], [0.8, 1.6])
        self.assertLess(relative_gap(fd_jacobian(density.grad_log_density, x), density.hess_log_density(x)), 1e-4)


if __name__ == "__main__":
    unittest.main()
