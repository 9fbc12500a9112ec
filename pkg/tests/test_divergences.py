import sys
import os
import math
import unittest

import numpy as np

# Add the parent directory to the path to import tools
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from tools.densities import gaussian, gaussian_mixture, logistic_product
from tools.divergences import (
    DivergenceResult,
    bregman_divergence,
    divergence_integrand,
    divergence_via_integrand,
    expected_score,
    hyvarinen_divergence,
    rule_kernel,
    zero_mean_diagnostic,
)
from tools.errors import DensityError, ScoreError
from tools.kernels import kernel_by_name, radial_kernel, zero_profile
from tools.numerics import MonteCarloConfig, agree
from tools.scores import hyvarinen_rule, kernel_rule, log_rule, radial_rule


class TestExpectedScore(unittest.TestCase):
    def test_hyvarinen_at_truth(self):
        for d in (1, 2):
            q = gaussian(np.zeros(d))
            self.assertAlmostEqual(expected_score(hyvarinen_rule(), q, q).value, -float(d), delta=1e-8)

    def test_hyvarinen_shifted_model(self):
        for mu in (0.5, 1.0, 2.0):
            result = expected_score(hyvarinen_rule(), gaussian([mu]), gaussian([0.0]))
            self.assertAlmostEqual(result.value, mu * mu - 1.0, delta=1e-8)

    def test_zero_kernel(self):
        rule = kernel_rule(radial_kernel(zero_profile(), 1))
        self.assertEqual(expected_score(rule, gaussian([1.0]), gaussian([0.0])).value, 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(DensityError):
            expected_score(hyvarinen_rule(), gaussian([0.0, 0.0]), gaussian([0.0]))


class TestBregmanDivergence(unittest.TestCase):
    def test_shifted_normal(self):
        for mu in (0.5, 1.0):
            result = bregman_divergence(hyvarinen_rule(), gaussian([mu]), gaussian([0.0]))
            self.assertAlmostEqual(result.value, mu * mu, delta=1e-8)
            self.assertEqual(result.method, "expected-score")
            self.assertEqual(result.label, "hyvarinen")

    def test_scaled_normal(self):
        result = bregman_divergence(hyvarinen_rule(), gaussian([0.0], 2.0), gaussian([0.0]))
        self.assertAlmostEqual(result.value, 0.25, delta=1e-8)

    def test_identical_densities(self):
        q = gaussian_mixture([0.3, 0.7], [[-1.0], [1.0]], [1.0, 0.5])
        self.assertEqual(bregman_divergence(hyvarinen_rule(), q, q).value, 0.0)
        mc = bregman_divergence(radial_rule(kernel_by_name("logcosh", 1).profile), q, q, MonteCarloConfig(samples=20_000))
        self.assertEqual(mc.value, 0.0)
        self.assertEqual(mc.error, 0.0)

    def test_log_score_divergence_is_kl(self):
        """d_log(p, q) = KL(q || p) for Gaussians of equal variance: mu^2 / 2"""
        result = bregman_divergence(log_rule(), gaussian([1.0]), gaussian([0.0]))
        self.assertAlmostEqual(result.value, 0.5, delta=1e-8)

    def test_to_dict_columns(self):
        row = bregman_divergence(hyvarinen_rule(), gaussian([1.0]), gaussian([0.0])).to_dict()
        self.assertEqual(list(row)[:6], ["p", "q", "kernel", "route", "value", "error"])
        self.assertEqual(row["engine"], "quadrature")

    def test_expectation_round_trip(self):
        result = DivergenceResult(value=1.0, error=0.01, method="closed-form", engine="monte_carlo")
        self.assertAlmostEqual(result.tolerance(), 0.05)
        self.assertTrue(result.expectation.is_monte_carlo)


class TestIntegrand(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(2)
        self.points = rng.normal(size=(50, 2)) * 2
        self.p = gaussian_mixture([0.4, 0.6], [[-1.0, 0.5], [1.0, 0.0]], [0.8, 1.2])
        self.q = logistic_product([0.0, 0.3], [0.9, 1.1])

    def test_hyvarinen_integrand_is_squared_score_gap(self):
        values = divergence_integrand(kernel_by_name("hyvarinen", 2), self.p, self.q, self.points)
        gap = self.p.grad_log_density(self.points) - self.q.grad_log_density(self.points)
        np.testing.assert_allclose(values, np.sum(gap * gap, axis=1), rtol=1e-12, atol=1e-12)

    def test_identical_densities_give_zero(self):
        values = divergence_integrand(kernel_by_name("logcosh", 2), self.p, self.p, self.points)
        np.testing.assert_array_equal(values, 0.0)

    def test_logcosh_scalar_value(self):
        """sigma_p = 1, sigma_q = 0 gives tanh 1 - log cosh 1"""
        x = 0.5
        value = divergence_integrand(kernel_by_name("logcosh", 1), gaussian([x + 1.0]), gaussian([x]), x)
        self.assertAlmostEqual(value, math.tanh(1.0) - math.log(math.cosh(1.0)), places=12)

    def test_nonnegative_for_concave_kernels(self):
        for name in ("hyvarinen", "logcosh"):
            values = divergence_integrand(kernel_by_name(name, 2), self.p, self.q, self.points)
            self.assertGreaterEqual(float(np.min(values)), -1e-10, name)


class TestRouteAgreement(unittest.TestCase):
    def test_routes_agree_on_unit_shift(self):
        p, q = gaussian([1.0]), gaussian([0.0])
        via_scores = bregman_divergence(hyvarinen_rule(), p, q)
        via_integrand = divergence_via_integrand(kernel_by_name("hyvarinen", 1), p, q)
        closed = hyvarinen_divergence(p, q)
        for result in (via_scores, via_integrand, closed):
            self.assertAlmostEqual(result.value, 1.0, delta=1e-8)
        self.assertEqual(via_integrand.method, "integrand")
        self.assertEqual(closed.method, "closed-form")

    def test_routes_agree_for_logcosh(self):
        pairs = [
            (gaussian([0.7]), gaussian([0.0])),
            (gaussian_mixture([0.5, 0.5], [[-1.0], [1.0]], [0.5, 0.5]), gaussian([0.0], 2.0)),
            (gaussian([0.0, 0.5], 0.7), gaussian_mixture([0.3, 0.7], [[-1.0, 0.0], [1.0, 0.0]], [1.0, 0.6])),
        ]
        for p, q in pairs:
            kernel = kernel_by_name("logcosh", p.dim)
            a = bregman_divergence(radial_rule(kernel.profile), p, q)
            b = divergence_via_integrand(kernel, p, q)
            self.assertTrue(agree(a.expectation, b.value, extra=b.tolerance()), f"{a.value} vs {b.value}")
            self.assertGreaterEqual(b.value, -b.tolerance())

    def test_monte_carlo_routes(self):
        p, q = gaussian([0.0, 0.0], 2.0), gaussian([0.0, 0.0])
        engine = MonteCarloConfig(samples=100_000, seed=5)
        result = hyvarinen_divergence(p, q, engine)
        self.assertTrue(agree(result.expectation, 0.5))

    def test_rule_kernel(self):
        self.assertEqual(rule_kernel(hyvarinen_rule(), 2).dim, 2)
        with self.assertRaises(ScoreError):
            rule_kernel(log_rule(), 1)


class TestZeroMeanDiagnostic(unittest.TestCase):
    def test_vanishes_for_builtin_kernels(self):
        for q in (gaussian([0.3]), gaussian_mixture([0.5, 0.5], [[-1.0], [1.5]], [0.6, 1.0]),
                  logistic_product([0.0], [0.8])):
            for name in ("hyvarinen", "logcosh"):
                result = zero_mean_diagnostic(kernel_by_name(name, 1), q)
                self.assertTrue(agree(result, 0.0, extra=1e-9), f"{name} under {q.describe()}: {result.value}")


if __name__ == "__main__":
    unittest.main()
