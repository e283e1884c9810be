#!/usr/bin/env python3
"""
Unit tests for the gradient check module.
"""

import os
import sys
import unittest

import numpy as np
import pytest

# Add parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.gradcheck import (CORRUPTIBLE_OPS, TOLERANCE, CheckResult, GradcheckReport, check_gradients,
                           relative_error, run_gradcheck)
from src.tensor import Tensor, relu, sum_all


class TestRelativeError(unittest.TestCase):
    """Test cases for the error measure."""

    def test_identical(self):
        """Test that equal vectors have zero error."""
        v = np.array([1.0, -2.0, 3.0])
        self.assertEqual(relative_error(v, v.copy()), 0.0)

    def test_floor(self):
        """Test that tiny gradients are measured against the floor."""
        self.assertAlmostEqual(relative_error(np.array([1e-9]), np.array([0.0])), 1e-5)

    def test_small_wrong_coordinate_is_not_hidden(self):
        """Test that a large correct coordinate does not mask a small wrong one."""
        error = relative_error(np.array([100.0, 0.001, 0.5]), np.array([100.0, 0.002, 0.5]))
        self.assertAlmostEqual(error, 0.5)
        self.assertGreater(error, TOLERANCE)


class TestKinkSkipping(unittest.TestCase):
    """Test cases for coordinates sitting on a ReLU kink."""

    def setUp(self):
        """Set up test fixtures."""
        values = np.array([0.0, 0.7, -0.4, 1.3]).reshape(1, 1, 2, 2)
        self.x = Tensor(values, requires_grad=True, dtype=np.float64)
        self.loss_fn = lambda: sum_all(relu(self.x))

    def test_kink_fails_without_skipping(self):
        """Test that the subgradient at zero disagrees with the central difference."""
        result = check_gradients("relu@0", self.loss_fn, [self.x], np.random.default_rng(0), max_coords=4)
        self.assertFalse(result.passed)

    def test_kink_is_skipped(self):
        """Test that the kink coordinate is dropped and the rest compared."""
        result = check_gradients("relu@0", self.loss_fn, [self.x], np.random.default_rng(0), max_coords=4,
                                 skip_kinks=True)
        self.assertTrue(result.passed)
        self.assertEqual(result.skipped, 1)
        self.assertEqual(result.coordinates, 3)


class TestOpChecks(unittest.TestCase):
    """Test cases for the per-op checks."""

    def setUp(self):
        """Set up test fixtures."""
        self.report = run_gradcheck(seed=0, include_network=False)

    def test_all_ops_pass(self):
        """Test that every backward rule matches finite differences."""
        self.assertTrue(self.report.passed, self.report.format())
        names = [r.name for r in self.report.results]
        for expected in ("add", "mul", "relu", "sum", "grouped_conv2d[3x3]", "factorized_grouped_conv",
                         "max_pool2", "global_avg_pool", "softmax_cross_entropy"):
            self.assertIn(expected, names)

    def test_deterministic(self):
        """Test that a seed fixes the whole report."""
        again = run_gradcheck(seed=0, include_network=False)
        self.assertEqual([r.worst_error for r in again.results], [r.worst_error for r in self.report.results])

    def test_format(self):
        """Test the printed table."""
        text = self.report.format()
        self.assertIn("all checks passed", text)
        self.assertIn("PASS", text)


class TestCorruption(unittest.TestCase):
    """Test cases for deliberately broken backward rules."""

    def test_corrupt_relu_is_detected(self):
        """Test that a scaled relu gradient fails the relu check."""
        report = run_gradcheck(seed=0, corrupt="relu", include_network=False)
        self.assertFalse(report.passed)
        failed = [r.name for r in report.failures()]
        self.assertIn("relu", failed)
        self.assertNotIn("add", failed)
        self.assertIn("FAILED", report.format())

    def test_every_op_is_corruptible(self):
        """Test that each corruptible op makes at least one check fail."""
        for op in CORRUPTIBLE_OPS:
            with self.subTest(op=op):
                self.assertFalse(run_gradcheck(seed=1, corrupt=op, include_network=False).passed)

    def test_unknown_op(self):
        """Test that an unknown op name is rejected."""
        with self.assertRaises(ValueError):
            run_gradcheck(corrupt="softmax")

    def test_report_failures(self):
        """Test the report helpers directly."""
        report = GradcheckReport([CheckResult("a", 0.0, 4, True), CheckResult("b", 0.5, 4, False)])
        self.assertFalse(report.passed)
        self.assertEqual([r.name for r in report.failures()], ["b"])


@pytest.mark.slow
class TestNetworkCheck(unittest.TestCase):
    """Full-network gradient check."""

    def test_network_passes(self):
        """Test the Logarithmic-8 network end to end."""
        report = run_gradcheck(seed=0)
        self.assertEqual(report.results[-1].name, "network[Logarithmic-8]")
        self.assertTrue(report.passed, report.format())


if __name__ == '__main__':
    unittest.main()
