#!/usr/bin/env python3
"""
Unit tests for the optimizer module.
"""

import os
import sys
import unittest

import numpy as np

# Add parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import NumericFailureError, ScheduleExhaustedError
from src.optim import Adam, AdamState, LrSchedule, adam_step, cifar_schedule, constant_schedule, fer_schedule
from src.tensor import ParamStore


class TestAdam(unittest.TestCase):
    """Test cases for the Adam update."""

    def setUp(self):
        """Set up test fixtures."""
        self.store = ParamStore(dtype=np.float64)
        self.param = self.store.add("p", np.array([0.5, -2.0]).reshape(1, 1, 1, 2))

    def test_zero_gradient_is_noop(self):
        """Test that zero gradients leave parameters unchanged."""
        before = self.param.data.copy()
        self.store.zero_grad()
        state = adam_step(self.store, AdamState(), lr=0.1)
        np.testing.assert_array_equal(self.param.data, before)
        self.assertEqual(state.step, 1)

    def test_first_step_magnitude(self):
        """Test that the first update has magnitude close to lr."""
        before = self.param.data.copy()
        self.param.grad = np.array([3.0, -0.01]).reshape(1, 1, 1, 2)
        adam_step(self.store, AdamState(), lr=1e-3)
        np.testing.assert_allclose(before - self.param.data, np.array([1e-3, -1e-3]).reshape(1, 1, 1, 2), rtol=1e-5)

    def test_quadratic_converges(self):
        """Test 50 steps on (p - 3)^2 from p = 0."""
        store = ParamStore(dtype=np.float64)
        p = store.add("p", np.zeros((1, 1, 1, 1)))
        optimizer = Adam(store)
        for _ in range(50):
            p.grad = 2.0 * (p.data - 3.0)
            optimizer.step(0.1)
        self.assertLess(abs(p.data.item() - 3.0), 0.5)

    def test_second_moment_nonnegative(self):
        """Test that v stays non-negative and the step counter advances."""
        state = AdamState()
        for step in range(3):
            self.param.grad = np.random.default_rng(step).standard_normal((1, 1, 1, 2))
            adam_step(self.store, state, lr=0.01)
        self.assertEqual(state.step, 3)
        self.assertTrue(np.all(state.v["p"] >= 0))

    def test_nan_gradient(self):
        """Test that a NaN gradient is a numeric failure."""
        self.param.grad = np.array([np.nan, 0.0]).reshape(1, 1, 1, 2)
        with self.assertRaises(NumericFailureError) as ctx:
            adam_step(self.store, AdamState(), lr=0.1)
        self.assertEqual(ctx.exception.node, "p")


class TestSchedules(unittest.TestCase):
    """Test cases for learning-rate schedules."""

    def test_cifar(self):
        """Test the staged CIFAR schedule."""
        schedule = cifar_schedule()
        self.assertEqual(schedule.rate(1), 1e-3)
        self.assertEqual(schedule.rate(50), 1e-3)
        self.assertEqual(schedule.rate(100), 1e-3)
        self.assertEqual(schedule.rate(101), 5e-4)
        self.assertEqual(schedule.rate(150), 1e-4)
        self.assertEqual(schedule.rate(161), 5e-5)
        self.assertEqual(schedule.total_epochs, 180)
        with self.assertRaises(ScheduleExhaustedError):
            schedule.rate(181)

    def test_fer(self):
        """Test the constant face-expression schedule."""
        schedule = fer_schedule()
        self.assertEqual(schedule(1), 1e-4)
        self.assertEqual(schedule(30), 1e-4)
        with self.assertRaises(ScheduleExhaustedError):
            schedule(31)
        with self.assertRaises(ScheduleExhaustedError):
            schedule(0)

    def test_validation(self):
        """Test threshold and rate checks."""
        with self.assertRaises(ValueError):
            LrSchedule(((10, 1e-3), (10, 1e-4)))
        with self.assertRaises(ValueError):
            LrSchedule(((10, 0.0),))
        with self.assertRaises(ValueError):
            LrSchedule(())

    def test_truncated_and_constant(self):
        """Test shortened and constant schedules."""
        short = cifar_schedule().truncated(120)
        self.assertEqual(short.stages, ((100, 1e-3), (120, 5e-4)))
        self.assertEqual(constant_schedule(0.01, 5).rate(5), 0.01)


if __name__ == '__main__':
    unittest.main()
