import unittest
import sys
import os

import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.controller_stages import (ControllerStage, ControllerStageParams, compose_cascade,
                                   controller_stage_law)
from src.exceptions import ModelError


class TestControllerStage(unittest.TestCase):
    """Test cases for one PI + feed-forward + feed-through stage."""

    def setUp(self):
        """Set up test fixtures."""
        self.params = ControllerStageParams(K_fb=2.0, T_fb=0.5, K_ft=1.0)
        self.ff = np.array([[0.0, -0.1], [0.1, 0.0]])
        self.stage = controller_stage_law(self.params, self.ff, "alpha")

    def test_initialization(self):
        """Gains and state after construction."""
        self.assertAlmostEqual(self.params.K_i, 4.0, places=12)
        np.testing.assert_array_equal(self.stage.integral, np.zeros(2))
        np.testing.assert_allclose(self.stage.reference_gain, 2.0 * np.eye(2) + self.ff)
        self.assertEqual(self.stage.name, "alpha")

    def test_invalid_parameters(self):
        """Non-positive integration times, unknown modes and bad FF shapes are rejected."""
        with self.assertRaises(ModelError):
            ControllerStageParams(K_fb=1.0, T_fb=0.0)
        with self.assertRaises(ModelError):
            ControllerStageParams(K_fb=1.0, T_fb=1.0, K_ff_mode="manual")
        with self.assertRaises(ModelError):
            ControllerStage(self.params, np.eye(3))

    def test_compute(self):
        """One step integrates the error and returns the stage law."""
        output = self.stage.compute([1.0, 0.0], [0.0, 0.0], [0.5, -0.5], dt=0.1)
        np.testing.assert_allclose(self.stage.integral, [0.1, 0.0])
        expected = 2.0 * np.array([1.0, 0.0]) + 4.0 * np.array([0.1, 0.0]) \
            + np.array([0.5, -0.5]) + self.ff @ np.array([1.0, 0.0])
        np.testing.assert_allclose(output, expected, atol=1e-12)

    def test_components_sum_to_output(self):
        """P, I, FT and FF parts add up to the output."""
        self.stage.compute([1.0, 0.5], [0.2, 0.1], [0.0, 0.3], dt=0.01)
        parts = self.stage.get_components([1.0, 0.5], [0.2, 0.1], [0.0, 0.3])
        np.testing.assert_allclose(sum(parts), self.stage.output([1.0, 0.5], [0.2, 0.1], [0.0, 0.3]),
                                   atol=1e-12)

    def test_reset_and_invalid_step(self):
        """reset() clears the integrator; dt <= 0 is rejected."""
        self.stage.compute([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], dt=0.1)
        self.stage.reset()
        np.testing.assert_array_equal(self.stage.integral, np.zeros(2))
        with self.assertRaises(ModelError):
            self.stage.compute([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], dt=0.0)


class TestComposeCascade(unittest.TestCase):
    """Test cases for the composition of stages into one controller."""

    def setUp(self):
        """Set up test fixtures."""
        rng = np.random.default_rng(11)
        self.rng = rng
        self.stages = [
            ControllerStage(ControllerStageParams(15.0, 0.03, 1.0), rng.normal(size=(2, 2)), "alpha"),
            ControllerStage(ControllerStageParams(0.05, 2.5e-4, 0.0), rng.normal(size=(2, 2)), "phi"),
            ControllerStage(ControllerStageParams(0.2, 0.1, 1.0), rng.normal(size=(2, 2)), "gamma"),
        ]

    def _preload(self, stage, xi):
        stage.reset()
        stage.compute(xi, [0.0, 0.0], [0.0, 0.0], dt=1.0)

    def test_shapes(self):
        """n stages give 2n states, 2(n+1) measurements and one DQ reference."""
        k = compose_cascade(self.stages)
        self.assertEqual(k.A.shape, (6, 6))
        self.assertEqual(k.B.shape, (6, 8))
        self.assertEqual(k.E.shape, (6, 2))
        self.assertEqual(k.C.shape, (2, 6))
        self.assertEqual(k.D.shape, (2, 8))
        self.assertEqual(k.F.shape, (2, 2))
        self.assertEqual(k.stage_names, ("alpha", "phi", "gamma"))

    def test_matches_stage_by_stage_evaluation(self):
        """The composed output and state derivative equal the chained stage laws."""
        k = compose_cascade(self.stages)
        xi = self.rng.normal(size=6)
        u = self.rng.normal(size=8)
        w = self.rng.normal(size=2)
        for s, stage in enumerate(self.stages):
            self._preload(stage, xi[2 * s:2 * s + 2])

        pair = lambda i: u[2 * i:2 * i + 2]
        ref_gamma = w
        ref_phi = self.stages[2].output(ref_gamma, pair(2), pair(3))
        ref_alpha = self.stages[1].output(ref_phi, pair(1), pair(2))
        y = self.stages[0].output(ref_alpha, pair(0), pair(1))

        np.testing.assert_allclose(k.C @ xi + k.D @ u + k.F @ w, y, atol=1e-9)
        dxi = np.concatenate([ref_alpha - pair(0), ref_phi - pair(1), ref_gamma - pair(2)])
        np.testing.assert_allclose(k.A @ xi + k.B @ u + k.E @ w, dxi, atol=1e-9)

    def test_empty_cascade(self):
        """A cascade needs at least one stage."""
        with self.assertRaises(ModelError):
            compose_cascade([])


if __name__ == '__main__':
    unittest.main()
