import unittest
import sys
import os

import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.exceptions import ModelError
from src.filter_stages import (CAPACITIVE, FOUR_LEG, INDUCTIVE, THREE_LEG, FilterStage,
                               FilterStageParams, FrameCoupling, capacitive_stage_ode,
                               dq_restated_params, inductive_stage_ode)
from src.harmonic_core import SpectralParams, dq_transform


class TestFilterStageParams(unittest.TestCase):
    """Test cases for filter stage parameters."""

    def test_constructors(self):
        """inductive() and capacitive() set kind and values."""
        l = FilterStageParams.inductive(L=0.2e-3, R=0.61e-3)
        c = FilterStageParams.capacitive(C=150e-6)
        self.assertEqual(l.kind, INDUCTIVE)
        self.assertTrue(l.is_inductive)
        self.assertEqual(c.kind, CAPACITIVE)
        self.assertEqual(c.loss_value, 0.0)

    def test_invalid_parameters(self):
        """Non-positive series values, negative losses and unknown kinds are rejected."""
        with self.assertRaises(ModelError):
            FilterStageParams.inductive(L=0.0)
        with self.assertRaises(ModelError):
            FilterStageParams.capacitive(C=1e-6, G=-1.0)
        with self.assertRaises(ModelError):
            FilterStageParams("resistive", 1.0)

    def test_immittance(self):
        """Z = R + jhwL at order h."""
        p = FilterStageParams.inductive(L=1e-3, R=0.5)
        z = p.immittance(5, 50.0)
        self.assertAlmostEqual(z.real, 0.5, places=12)
        self.assertAlmostEqual(z.imag, 5 * 2 * np.pi * 50.0 * 1e-3, places=12)


class TestFilterStage(unittest.TestCase):
    """Test cases for the continuous-time stage blocks."""

    def test_stage_kind_checks(self):
        """The ODE builders only accept their own stage kind."""
        with self.assertRaises(ModelError):
            inductive_stage_ode(FilterStageParams.capacitive(C=1e-6))
        with self.assertRaises(ModelError):
            capacitive_stage_ode(FilterStageParams.inductive(L=1e-3))

    def test_inductive_step_response(self):
        """RL stage follows V/R (1 - exp(-t R/L))."""
        stage = inductive_stage_ode(FilterStageParams.inductive(L=1e-3, R=0.1))
        self.assertAlmostEqual(stage.time_constant, 0.01, places=12)
        for _ in range(100):
            current = stage.update(1.0, 0.0, 1e-4)
        expected = 10.0 * (1.0 - np.exp(-1.0))
        np.testing.assert_allclose(current, np.full(3, expected), atol=1e-6)

    def test_capacitive_integrates_current(self):
        """A lossless capacitor integrates the net current."""
        stage = capacitive_stage_ode(FilterStageParams.capacitive(C=1e-3))
        self.assertEqual(stage.time_constant, np.inf)
        for _ in range(10):
            voltage = stage.update([1.0, 2.0, 3.0], [0.0, 0.0, 1.0], 1e-3)
        np.testing.assert_allclose(voltage, [10.0, 20.0, 20.0], atol=1e-9)

    def test_reset(self):
        """reset() returns to the initial state."""
        stage = FilterStage(FilterStageParams.inductive(L=1e-3, R=0.1), initial_state=[1.0, 0.0, -1.0])
        stage.update(1.0, 0.0, 1e-4)
        stage.reset()
        np.testing.assert_array_equal(stage.state, [1.0, 0.0, -1.0])

    def test_state_space_shapes(self):
        """The scipy state-space has three states and six inputs."""
        stage = FilterStage(FilterStageParams.inductive(L=1e-3))
        self.assertEqual(stage.system.A.shape, (3, 3))
        self.assertEqual(stage.system.B.shape, (3, 6))


class TestDqRestatedParams(unittest.TestCase):
    """Test cases for parameters restated in the rotating frame."""

    def test_time_invariance(self):
        """T^T (R T + L dT/dt) is the constant R_DQ for every angle."""
        sp = SpectralParams(f1=50.0, h_max=5)
        p = FilterStageParams.inductive(L=325e-6, R=1.02e-3)
        loss, series = dq_restated_params(p, sp)
        np.testing.assert_allclose(series, 325e-6 * np.eye(2))
        for theta in np.linspace(0.0, 2 * np.pi, 9):
            T = dq_transform(theta)
            dT = sp.omega1 * dq_transform(theta + np.pi / 2)
            restated = T.T @ (p.loss_value * T + p.series_value * dT)
            np.testing.assert_allclose(restated, loss, atol=1e-10)

    def test_decoupling_terms(self):
        """Off-diagonal terms are -+w1*C for a capacitive stage."""
        sp = SpectralParams(f1=50.0, h_max=5)
        loss, _ = dq_restated_params(FilterStageParams.capacitive(C=90.3e-6, G=0.0), sp)
        self.assertAlmostEqual(loss[0, 1], -sp.omega1 * 90.3e-6, places=12)
        self.assertAlmostEqual(loss[1, 0], sp.omega1 * 90.3e-6, places=12)
        self.assertEqual(loss[0, 0], 0.0)


class TestFrameCoupling(unittest.TestCase):
    """Test cases for the converter frame coupling."""

    def test_four_leg_is_identity(self):
        """A four-leg converter passes all sequences."""
        coupling = FrameCoupling(FOUR_LEG)
        np.testing.assert_array_equal(coupling.matrix, np.eye(3))
        self.assertFalse(coupling.blocks_homopolar)

    def test_three_leg_blocks_homopolar(self):
        """A three-leg converter removes the homopolar component."""
        coupling = FrameCoupling(THREE_LEG)
        self.assertTrue(coupling.blocks_homopolar)
        np.testing.assert_allclose(coupling.matrix @ np.ones(3), np.zeros(3), atol=1e-15)
        balanced = np.cos(np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3]))
        np.testing.assert_allclose(coupling.matrix @ balanced, balanced, atol=1e-15)

    def test_unknown_topology(self):
        """Unknown topologies are rejected."""
        with self.assertRaises(ModelError):
            FrameCoupling("two_leg")


if __name__ == '__main__':
    unittest.main()
