import sys
import os
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

# Add the parent directory to the path to import tools
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from tools.densities import gaussian
from tools.errors import KernelError
from tools.kernels import (
    RADIAL_EPSILON,
    check_profile,
    concavity_probe,
    convex_quadratic_profile,
    growth_check,
    hyvarinen_profile,
    kernel_by_name,
    logcosh_profile,
    phi_functional,
    phi_path_concavity,
    profile_by_name,
    radial_kernel,
    zero_profile,
)
from tools.numerics import fd_gradient, fd_jacobian, relative_gap


class TestProfiles(unittest.TestCase):
    def test_builtin_profiles_vanish_at_origin(self):
        for name in ("hyvarinen", "logcosh", "convex_quadratic", "zero"):
            report = check_profile(profile_by_name(name))
            self.assertEqual(report["psi_at_zero"], 0.0, name)
            self.assertEqual(report["dpsi_at_zero"], 0.0, name)

    def test_concavity_on_grid(self):
        self.assertTrue(check_profile(hyvarinen_profile())["concave_on_grid"])
        self.assertTrue(check_profile(logcosh_profile())["concave_on_grid"])
        self.assertTrue(check_profile(zero_profile())["concave_on_grid"])
        report = check_profile(convex_quadratic_profile())
        self.assertFalse(report["concave_on_grid"])
        self.assertEqual(report["max_d2psi"], 2.0)

    def test_logcosh_values(self):
        profile = logcosh_profile()
        t = np.array([0.5, 1.0, 30.0])
        np.testing.assert_allclose(profile.psi(t), -np.log(np.cosh(t)), rtol=1e-12)
        np.testing.assert_allclose(profile.dpsi(t), -np.tanh(t), rtol=1e-12)
        np.testing.assert_allclose(profile.d2psi(t), -1.0 / np.cosh(t) ** 2, rtol=1e-10, atol=1e-300)
        self.assertEqual(profile.curvature_at_zero(), -1.0)

    def test_logcosh_does_not_overflow(self):
        value = logcosh_profile().psi(np.array([1000.0]))[0]
        self.assertAlmostEqual(value, -(1000.0 - math.log(2.0)), places=9)

    def test_logcosh_scale(self):
        profile = logcosh_profile(0.5)
        self.assertAlmostEqual(float(profile.psi(np.array([1.0]))[0]), -0.25 * math.log(math.cosh(2.0)), places=12)
        self.assertEqual(profile.params, {"scale": 0.5})
        with self.assertRaises(KernelError):
            logcosh_profile(0.0)

    def test_unknown_profile(self):
        with self.assertRaises(KernelError) as ctx:
            profile_by_name("gaussian")
        self.assertIn("logcosh", str(ctx.exception))


class TestRadialKernel(unittest.TestCase):
    def test_evaluation_shapes(self):
        kernel = kernel_by_name("logcosh", 2)
        jet = kernel.evaluate(None, [0.3, -0.4])
        self.assertIsInstance(jet.value, float)
        self.assertEqual(jet.grad_y.shape, (2,))
        self.assertEqual(jet.hess_y.shape, (2, 2))
        self.assertEqual(jet.mixed_trace, 0.0)
        batch = kernel.evaluate(None, np.ones((4, 2)))
        self.assertEqual(batch.value.shape, (4,))

    def test_hyvarinen_kernel_derivatives(self):
        kernel = kernel_by_name("hyvarinen", 3)
        y = np.array([1.0, -2.0, 0.5])
        self.assertAlmostEqual(kernel.value(None, y), -5.25, places=12)
        np.testing.assert_allclose(kernel.grad_y(None, y), -2 * y, atol=1e-12)
        np.testing.assert_allclose(kernel.hess_y(None, y), -2 * np.eye(3), atol=1e-12)

    def test_small_radius_limit(self):
        kernel = kernel_by_name("logcosh", 2)
        tiny = np.array([RADIAL_EPSILON / 4, 0.0])
        np.testing.assert_allclose(kernel.hess_y(None, tiny), -np.eye(2), atol=1e-12)
        np.testing.assert_allclose(kernel.grad_y(None, tiny), -tiny, atol=1e-18)
        np.testing.assert_allclose(kernel.hess_y(None, np.zeros(2)), -np.eye(2), atol=1e-12)

    def test_limit_is_continuous_across_cutoff(self):
        kernel = kernel_by_name("logcosh", 2)
        inside = kernel.hess_y(None, [0.5 * RADIAL_EPSILON, 0.0])
        outside = kernel.hess_y(None, [2.0 * RADIAL_EPSILON, 0.0])
        np.testing.assert_allclose(inside, outside, atol=1e-9)

    def test_invalid_dimension(self):
        with self.assertRaises(KernelError):
            radial_kernel(hyvarinen_profile(), 0)

    @settings(max_examples=50, deadline=None)
    @given(y=arrays(np.float64, 2, elements=st.floats(-4, 4)), scale=st.floats(0.3, 3.0))
    def test_logcosh_derivatives_match_finite_differences(self, y, scale):
        kernel = kernel_by_name("logcosh", 2, scale=scale)
        self.assertLess(relative_gap(fd_gradient(lambda v: kernel.value(None, v), y), kernel.grad_y(None, y)), 1e-5)
        self.assertLess(relative_gap(fd_jacobian(lambda v: kernel.grad_y(None, v), y), kernel.hess_y(None, y)), 1e-4)


class TestGrowthAndConcavity(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.grid = [(rng.normal(size=2), rng.normal(size=2) * 5) for _ in range(200)]

    def test_growth_within_declared_constants(self):
        for name in ("hyvarinen", "logcosh", "zero"):
            report = growth_check(kernel_by_name(name, 2), self.grid)
            self.assertTrue(report["passed"], name)

    def test_growth_fails_with_tight_constants(self):
        report = growth_check(kernel_by_name("hyvarinen", 2), self.grid, constants=(1e-3, 1.0))
        self.assertFalse(report["passed"])
        self.assertGreater(report["max_ratio"], 1.0)

    def test_concavity_probe(self):
        report = concavity_probe(kernel_by_name("hyvarinen", 2))
        self.assertTrue(report.concave)
        self.assertAlmostEqual(report.max_eigenvalue, -2.0, places=12)
        self.assertEqual(report.points_checked, 8 * 1001)
        self.assertTrue(concavity_probe(kernel_by_name("logcosh", 3)).concave)

    def test_concavity_probe_flags_convex_kernel(self):
        report = concavity_probe(kernel_by_name("convex_quadratic", 1))
        self.assertFalse(report.concave)
        self.assertAlmostEqual(report.max_eigenvalue, 2.0, places=12)
        self.assertEqual(len(report.worst_point), 1)

    def test_first_order_concavity_inequality(self):
        """k(y1) - k(y2) >= <y1 - y2, grad k(y1)> for concave kernels"""
        rng = np.random.default_rng(11)
        y1 = rng.normal(size=(1000, 3)) * 3
        y2 = rng.normal(size=(1000, 3)) * 3
        for name in ("hyvarinen", "logcosh"):
            kernel = kernel_by_name(name, 3)
            gap = kernel.value(None, y1) - kernel.value(None, y2) - np.sum((y1 - y2) * kernel.grad_y(None, y1), axis=1)
            self.assertGreaterEqual(float(gap.min()), -1e-10, name)
        convex = kernel_by_name("convex_quadratic", 3)
        gap = convex.value(None, y1) - convex.value(None, y2) - np.sum((y1 - y2) * convex.grad_y(None, y1), axis=1)
        self.assertLess(float(gap.min()), 0.0)


class TestPhiFunctional(unittest.TestCase):
    def test_hyvarinen_phi_of_standard_normal(self):
        """Phi(N(0,1)) = E[-x^2] = -1"""
        result = phi_functional(kernel_by_name("hyvarinen", 1), gaussian([0.0]))
        self.assertAlmostEqual(result.value, -1.0, delta=1e-10)

    def test_logcosh_phi_is_bounded_by_hyvarinen(self):
        # -log cosh t >= -t^2 / 2 pointwise
        q = gaussian([0.3])
        logcosh = phi_functional(kernel_by_name("logcosh", 1), q).value
        self.assertGreaterEqual(logcosh, -0.5)
        self.assertLess(logcosh, 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(KernelError):
            phi_functional(kernel_by_name("hyvarinen", 2), gaussian([0.0]))

    def test_path_concave_for_concave_kernels(self):
        q, p = gaussian([0.0]), gaussian([2.0])
        for name in ("hyvarinen", "logcosh"):
            report = phi_path_concavity(kernel_by_name(name, 1), q, p, [0.0, 0.25, 0.5, 0.75, 1.0])
            self.assertTrue(report.concave, name)
            self.assertEqual(len(report.second_differences), 3)
            self.assertEqual(len(report.rows()), 5)
            self.assertEqual(report.rows()[0]["second_difference"], "")

    def test_convex_kernel_breaks_path_concavity(self):
        q, p = gaussian([0.0]), gaussian([2.0])
        report = phi_path_concavity(kernel_by_name("convex_quadratic", 1), q, p, [0.0, 0.25, 0.5, 0.75, 1.0])
        self.assertFalse(report.concave)
        self.assertTrue(any(d > tol for d, tol in zip(report.second_differences, report.tolerances)))

    def test_grid_validation(self):
        kernel, q, p = kernel_by_name("hyvarinen", 1), gaussian([0.0]), gaussian([1.0])
        with self.assertRaises(KernelError):
            phi_path_concavity(kernel, q, p, [0.0, 1.0])
        with self.assertRaises(KernelError):
            phi_path_concavity(kernel, q, p, [0.0, 0.5, 0.5, 1.0])
        with self.assertRaises(KernelError):
            phi_path_concavity(kernel, q, p, [0.0, 0.5, 1.5])


if __name__ == "__main__":
    unittest.main()
