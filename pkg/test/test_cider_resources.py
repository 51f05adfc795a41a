import unittest
import sys
import os
from dataclasses import replace

import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cider_resources import (FOLLOWING, LtpStateSpace, Setpoint, build_following_statespace,
                                 build_forming_statespace, following_reference,
                                 build_statespace, check_stability, example_following_cider,
                                 example_forming_cider, forming_reference, harmonic_response,
                                 psi_coefficients)
from src.controller_stages import ControllerStageParams
from src.exceptions import ModelError, SingularOperatingPointError, UnstableResourceError
from src.filter_stages import FOUR_LEG
from src.harmonic_core import (HarmonicSpectrum, PolyphaseSpectrum, SpectralParams,
                               sequence_decompose)


class TestSetpointAndSpec(unittest.TestCase):
    """Test cases for resource descriptions."""

    def test_apparent_power_setpoint(self):
        """S and pf give P = S pf and Q = S sin(acos pf)."""
        setpoint = Setpoint.from_apparent_power(100e3, 0.95)
        self.assertAlmostEqual(setpoint.P_sigma, 95e3, places=6)
        self.assertAlmostEqual(setpoint.Q_sigma, 100e3 * np.sqrt(1 - 0.95 ** 2), places=6)
        with self.assertRaises(ModelError):
            Setpoint.from_apparent_power(100e3, 1.2)

    def test_defaults_by_kind(self):
        """Forming resources are four-leg, following resources three-leg."""
        self.assertEqual(example_forming_cider().legs, FOUR_LEG)
        self.assertTrue(example_following_cider().coupling.blocks_homopolar)
        self.assertEqual(example_following_cider().stage_names, ("alpha", "phi", "gamma"))

    def test_invalid_descriptions(self):
        """Stage patterns, leg counts, setpoints and f_sigma are validated."""
        forming = example_forming_cider()
        with self.assertRaises(ModelError):
            replace(forming, filters=forming.filters[::-1])
        with self.assertRaises(ModelError):
            replace(forming, controllers=forming.controllers[:1])
        with self.assertRaises(ModelError):
            replace(forming, legs="three_leg")
        with self.assertRaises(ModelError):
            replace(forming, setpoint=Setpoint.forming(230.0, 60.0))
        with self.assertRaises(ModelError):
            replace(forming, kind=FOLLOWING)
        with self.assertRaises(ModelError):
            replace(forming, kind="droop")

    def test_statespace_shapes(self):
        """Hardware blocks carry three phases per filter state."""
        pi, kappa = build_statespace(example_following_cider())
        self.assertEqual((pi.n_x, pi.n_u, pi.n_w, pi.n_y), (9, 3, 3, 12))
        self.assertEqual((kappa.n_x, kappa.n_u, kappa.n_w, kappa.n_y), (6, 8, 2, 2))
        self.assertTrue(pi.is_lti)
        with self.assertRaises(ModelError):
            LtpStateSpace.from_arrays(np.eye(2), np.eye(3), np.eye(2), np.eye(2), np.eye(2), np.eye(2))

    def test_kind_specific_builders(self):
        """Each builder accepts only its own resource kind."""
        pi, kappa = build_forming_statespace(example_forming_cider())
        self.assertEqual((pi.n_x, pi.n_u, pi.n_w, pi.n_y), (6, 3, 3, 9))
        self.assertEqual((kappa.n_x, kappa.n_w, kappa.n_y), (4, 2, 2))
        with self.assertRaises(ModelError):
            build_forming_statespace(example_following_cider())
        with self.assertRaises(ModelError):
            build_following_statespace(example_forming_cider())


class TestStability(unittest.TestCase):
    """Test cases for the closed-loop stability check."""

    def test_example_resources_are_stable(self):
        """Both example resources have a Hurwitz DQ closed loop."""
        for spec in (example_forming_cider(), example_following_cider()):
            eigenvalues = check_stability(spec)
            self.assertTrue(np.all(eigenvalues.real < 0.0))

    def test_positive_feedback_is_unstable(self):
        """A negative inner gain destabilises the current loop."""
        spec = example_forming_cider()
        bad = replace(spec, controllers=(ControllerStageParams(K_fb=-15.0, T_fb=0.03, K_ft=1.0),
                                         spec.controllers[1]))
        with self.assertRaises(UnstableResourceError) as ctx:
            check_stability(bad)
        self.assertTrue(len(ctx.exception.eigenvalues) > 0)


class TestReferences(unittest.TestCase):
    """Test cases for DQ references."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=5)

    def test_forming_reference(self):
        """The D reference is sqrt(3) times the RMS setpoint."""
        ref = forming_reference(Setpoint.forming(230.0), self.sp)
        self.assertAlmostEqual(ref.coeff(0)[0].real, np.sqrt(3.0) * 230.0, places=9)
        self.assertEqual(np.count_nonzero(ref.coeffs), 1)

    def test_psi_of_constant(self):
        """A constant v_D gives the exact reciprocal."""
        vd = HarmonicSpectrum.from_positive(self.sp, np.zeros(5), dc=400.0)
        np.testing.assert_allclose(psi_coefficients(vd).coeffs[self.sp.h_max], 1.0 / 400.0)

    def test_psi_approximates_reciprocal(self):
        """For a small ripple the series matches 1/v_D to third order."""
        positive = np.zeros(5, dtype=complex)
        positive[1] = 0.5 * np.exp(0.3j)
        vd = HarmonicSpectrum.from_positive(self.sp, positive, dc=100.0)
        t = np.linspace(0.0, self.sp.period, 200)
        np.testing.assert_allclose(psi_coefficients(vd).to_time(t), 1.0 / vd.to_time(t), atol=1e-7)

    def test_following_reference_scales_psi(self):
        """D and Q references are the setpoint powers over a constant v_D."""
        vd = HarmonicSpectrum.from_positive(self.sp, np.zeros(5), dc=400.0)
        ref = following_reference(psi_coefficients(vd), Setpoint.following(50e3, 16.4e3))
        dc = ref.coeff(0)
        self.assertAlmostEqual(dc[0].real, 125.0, places=9)
        self.assertAlmostEqual(dc[1].real, 41.0, places=9)

    def test_psi_singular(self):
        """Zero DC has no reciprocal expansion."""
        with self.assertRaises(SingularOperatingPointError):
            psi_coefficients(HarmonicSpectrum.zeros(self.sp))


class TestHarmonicResponse(unittest.TestCase):
    """Test cases for lifted closed-loop responses."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=5)

    def test_forming_open_terminals(self):
        """Without load the forming resource holds its voltage setpoint."""
        response = harmonic_response(example_forming_cider(V_sigma=241.5), self.sp)
        self.assertEqual((response.input_quantity, response.output_quantity), ("current", "voltage"))
        voltage = response.evaluate(PolyphaseSpectrum.zeros(self.sp))
        pos, neg, zero = sequence_decompose(voltage, 1)
        self.assertAlmostEqual(abs(pos), 241.5 / np.sqrt(2.0), places=4)
        self.assertLess(abs(neg) + abs(zero), 1e-6)
        for h in range(2, 6):
            self.assertLess(np.max(np.abs(voltage.coeff(h))), 1e-6)

    def test_following_tracks_active_power(self):
        """Under a clean voltage the following resource exchanges P_sigma."""
        spec = example_following_cider(P_sigma=50e3, Q_sigma=16.4e3)
        response = harmonic_response(spec, self.sp)
        voltage = PolyphaseSpectrum.from_sequences(self.sp, {1: (230.0 / np.sqrt(2.0), 0.0, 0.0)})
        current = response.evaluate(voltage)
        power = 6.0 * np.sum(voltage.coeff(1) * np.conj(current.coeff(1)))
        self.assertAlmostEqual(abs(power.real), 50e3, delta=1.0)
        self.assertAlmostEqual(abs(power), np.hypot(50e3, 16.4e3), delta=1.0)
        self.assertLess(abs(sequence_decompose(current, 1)[2]), 1e-9)

    def test_following_without_voltage(self):
        """A dead terminal has no phase to lock on."""
        response = harmonic_response(example_following_cider(), self.sp)
        with self.assertRaises(SingularOperatingPointError):
            response.evaluate(PolyphaseSpectrum.zeros(self.sp))

    def test_mismatched_fundamental(self):
        """Resource and study must share f1."""
        with self.assertRaises(ModelError):
            harmonic_response(example_forming_cider(f1=60.0), self.sp)
        other = SpectralParams(f1=50.0, h_max=3)
        response = harmonic_response(example_forming_cider(), self.sp, check_stability_first=False)
        with self.assertRaises(ModelError):
            response.evaluate(PolyphaseSpectrum.zeros(other))

    def test_internal_spectra(self):
        """Internal spectra expose every filter state and the actuator voltage."""
        response = harmonic_response(example_forming_cider(), self.sp)
        parts = response.internal_spectra(PolyphaseSpectrum.zeros(self.sp))
        for key in ("I_alpha", "V_phi", "V_alpha", "reference_dq", "controller_state"):
            self.assertIn(key, parts)
        np.testing.assert_allclose(parts["V_phi"].coeffs,
                                   response.evaluate(PolyphaseSpectrum.zeros(self.sp)).coeffs, atol=1e-9)


if __name__ == '__main__':
    unittest.main()
