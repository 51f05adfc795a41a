import unittest
import sys
import os

import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.exceptions import ModelError
from src.harmonic_core import (HarmonicSpectrum, LtpMatrix, PolyphaseSpectrum, SpectralParams,
                               VectorSpectrum, dq_rotation, dq_transform, dq_transform_coefficients,
                               fortescue_to_phase, harmonic_derivative, sequence_compose,
                               sequence_decompose, toeplitz_lift)


def random_order_one(rng, shape):
    """Real LTP matrix with Fourier orders -1, 0, 1."""
    m1 = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return LtpMatrix(shape, {0: rng.normal(size=shape), 1: m1, -1: np.conj(m1)})


class TestSpectralParams(unittest.TestCase):
    """Test cases for the harmonic set."""

    def test_harmonic_set(self):
        """H runs from -h_max to h_max."""
        sp = SpectralParams(f1=50.0, h_max=3)
        np.testing.assert_array_equal(sp.H, [-3, -2, -1, 0, 1, 2, 3])
        self.assertEqual(sp.n_orders, 7)
        self.assertEqual(sp.index(-3), 0)
        self.assertAlmostEqual(sp.period, 0.02, places=12)

    def test_invalid_parameters(self):
        """Non-positive f1 or h_max are rejected."""
        with self.assertRaises(ModelError):
            SpectralParams(f1=0.0)
        with self.assertRaises(ModelError):
            SpectralParams(h_max=0)
        with self.assertRaises(ModelError):
            SpectralParams(h_max=3).index(4)


class TestSpectra(unittest.TestCase):
    """Test cases for scalar, vector and polyphase spectra."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=5)
        self.t = np.linspace(0.0, 0.02, 101)

    def test_cosine_synthesis(self):
        """X_1 = 0.5 synthesises a unit cosine."""
        positive = np.zeros(5, dtype=complex)
        positive[0] = 0.5
        spectrum = HarmonicSpectrum.from_positive(self.sp, positive)
        np.testing.assert_allclose(spectrum.to_time(self.t), np.cos(self.sp.omega1 * self.t), atol=1e-12)

    def test_hermitian_symmetry_enforced(self):
        """A non-Hermitian spectrum of a real signal is rejected."""
        coeffs = np.zeros(self.sp.n_orders, dtype=complex)
        coeffs[self.sp.index(2)] = 1.0
        with self.assertRaises(ModelError):
            HarmonicSpectrum(self.sp, coeffs)
        complex_signal = HarmonicSpectrum(self.sp, coeffs, real_signal=False)
        self.assertEqual(complex_signal.coeff(2), 1.0)

    def test_arithmetic_preserves_symmetry(self):
        """Sums and scalings stay Hermitian."""
        rng = np.random.default_rng(1)
        a = HarmonicSpectrum.from_positive(self.sp, rng.normal(size=5) + 1j * rng.normal(size=5), dc=0.3)
        b = HarmonicSpectrum.from_positive(self.sp, rng.normal(size=5) + 1j * rng.normal(size=5))
        total = 2.0 * (a + b) - b
        np.testing.assert_allclose(total.coeffs, np.conj(total.coeffs[::-1]), atol=1e-15)
        self.assertAlmostEqual(total.dc.real, 0.6, places=12)

    def test_lifted_round_trip(self):
        """lifted() and from_lifted() are inverse."""
        rng = np.random.default_rng(2)
        spectrum = VectorSpectrum.from_positive(self.sp, rng.normal(size=(2, 5)) + 1j * rng.normal(size=(2, 5)))
        vector = spectrum.lifted()
        self.assertEqual(vector.shape, (2 * self.sp.n_orders,))
        np.testing.assert_array_equal(vector[2 * self.sp.index(1):2 * self.sp.index(1) + 2], spectrum.coeff(1))
        back = VectorSpectrum.from_lifted(self.sp, vector, 2)
        np.testing.assert_allclose(back.coeffs, spectrum.coeffs)

    def test_polyphase_needs_three_phases(self):
        """A polyphase spectrum has exactly three channels."""
        with self.assertRaises(ModelError):
            PolyphaseSpectrum(self.sp, np.zeros((2, self.sp.n_orders)))

    def test_per_unit(self):
        """A 230 V RMS fundamental is 1 p.u. on a 230 V base."""
        spectrum = PolyphaseSpectrum.from_sequences(self.sp, {1: (np.sqrt(2) * 230.0 / 2, 0.0, 0.0)})
        np.testing.assert_allclose(np.abs(spectrum.to_pu(230.0).coeff(1)), np.ones(3), atol=1e-12)


class TestLtpAndLifting(unittest.TestCase):
    """Test cases for LTP matrices and their Toeplitz lift."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=6)
        self.rng = np.random.default_rng(7)

    def test_shape_mismatch(self):
        """Fourier coefficients must share one shape."""
        with self.assertRaises(ModelError):
            LtpMatrix((2, 2), {0: np.eye(3)})

    def test_product_matches_time_domain(self):
        """The convolution product evaluates to the pointwise product."""
        a = random_order_one(self.rng, (2, 3))
        b = random_order_one(self.rng, (3, 2))
        product = a @ b
        for t in (0.0, 0.0031, 0.0127):
            np.testing.assert_allclose(product.evaluate(t, 50.0), a.evaluate(t, 50.0) @ b.evaluate(t, 50.0),
                                       atol=1e-10)

    def test_lift_of_product_on_interior_orders(self):
        """lift(A B) equals lift(A) lift(B) away from the truncation edge."""
        a = random_order_one(self.rng, (2, 2))
        b = random_order_one(self.rng, (2, 2))
        exact = toeplitz_lift(a @ b, self.sp)
        lifted = toeplitz_lift(a, self.sp) @ toeplitz_lift(b, self.sp)
        interior = range(-self.sp.h_max + 1, self.sp.h_max)
        for h_i in interior:
            for h_j in interior:
                np.testing.assert_allclose(lifted.block(h_i, h_j), exact.block(h_i, h_j), atol=1e-8)

    def test_lift_block_structure(self):
        """Block (h_i, h_j) holds the coefficient of order h_i - h_j."""
        a = random_order_one(self.rng, (2, 2))
        op = toeplitz_lift(a, self.sp)
        np.testing.assert_array_equal(op.block(3, 2), a.coefficient(1))
        np.testing.assert_array_equal(op.block(2, 3), a.coefficient(-1))
        np.testing.assert_array_equal(op.block(4, 1), np.zeros((2, 2)))
        self.assertEqual(op.bandwidth, 1)

    def test_lift_truncates_out_of_band_orders(self):
        """Orders beyond 2*h_max are dropped with a warning."""
        m = LtpMatrix((1, 1), {0: [[1.0]], 13: [[0.5]], -13: [[0.5]]})
        with self.assertLogs("src.harmonic_core", level="WARNING"):
            op = toeplitz_lift(m, self.sp)
        np.testing.assert_allclose(op.matrix, np.eye(self.sp.n_orders))

    def test_lifted_product_with_signal(self):
        """lift(M) X is the spectrum of M(t) x(t) for band-limited x."""
        m = random_order_one(self.rng, (1, 1))
        positive = np.zeros(self.sp.h_max, dtype=complex)
        positive[:3] = self.rng.normal(size=3) + 1j * self.rng.normal(size=3)
        x = HarmonicSpectrum.from_positive(self.sp, positive, dc=0.2)
        y = HarmonicSpectrum(self.sp, toeplitz_lift(m, self.sp).apply(x.coeffs))
        t = np.linspace(0.0, 0.02, 37)
        expected = np.array([m.evaluate(tk, 50.0)[0, 0] for tk in t]) * x.to_time(t)
        np.testing.assert_allclose(y.to_time(t), expected, atol=1e-10)

    def test_harmonic_derivative(self):
        """The derivative operator matches d/dt of the synthesised waveform."""
        positive = np.zeros(self.sp.h_max, dtype=complex)
        positive[2] = 0.5j
        x = HarmonicSpectrum.from_positive(self.sp, positive)
        dx = HarmonicSpectrum(self.sp, harmonic_derivative(self.sp, 1).apply(x.coeffs))
        t = np.linspace(0.0, 0.02, 11)
        w3 = 3 * self.sp.omega1
        np.testing.assert_allclose(dx.to_time(t), -w3 * np.cos(w3 * t), atol=1e-9)
        with self.assertRaises(ModelError):
            harmonic_derivative(self.sp, 0)


class TestSequencesAndDq(unittest.TestCase):
    """Test cases for Fortescue and DQ transformations."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=3)

    def test_fortescue_round_trip(self):
        """compose then decompose returns the sequence components."""
        rng = np.random.default_rng(3)
        seq = rng.normal(size=3) + 1j * rng.normal(size=3)
        spectrum = PolyphaseSpectrum.from_sequences(self.sp, {2: tuple(seq)})
        decomposed = np.array(sequence_decompose(spectrum, 2))
        np.testing.assert_allclose(decomposed, seq, atol=1e-12)

    def test_positive_sequence_rotation(self):
        """Phase B lags phase A by 120 degrees in a positive sequence set."""
        phases = sequence_compose(1.0, 0.0, 0.0)
        self.assertAlmostEqual(np.degrees(np.angle(phases[1] / phases[0])), -120.0, places=10)

    def test_fortescue_to_phase(self):
        """Equal sequence values give a diagonal matrix; the result is symmetric."""
        np.testing.assert_allclose(fortescue_to_phase((2.0, 2.0, 2.0)), 2.0 * np.eye(3), atol=1e-14)
        z = fortescue_to_phase((0.1 + 0.2j, 0.1 + 0.2j, 0.5 + 0.4j))
        np.testing.assert_allclose(z, z.T, atol=1e-14)
        np.testing.assert_allclose(np.diag(z), np.full(3, (0.7 + 0.8j) / 3.0), atol=1e-14)

    def test_dq_coefficients_match_time_domain(self):
        """Fourier coefficients of T(wt + theta0) evaluate to dq_transform."""
        theta0 = 0.4
        coefficients = dq_transform_coefficients(theta0)
        self.assertTrue(coefficients.is_real())
        for t in (0.0, 0.004, 0.0133):
            np.testing.assert_allclose(coefficients.evaluate(t, 50.0),
                                       dq_transform(self.sp.omega1 * t + theta0), atol=1e-12)

    def test_dq_rotation(self):
        """T(theta + theta0) = T(theta) Rot(theta0)."""
        np.testing.assert_allclose(dq_transform(0.3 + 1.1), dq_transform(0.3) @ dq_rotation(1.1), atol=1e-14)

    def test_dq_of_balanced_set(self):
        """A balanced set of RMS V maps to v_D = sqrt(3) V."""
        theta = 0.7
        v_rms = 230.0
        abc = np.sqrt(2) * v_rms * np.cos(theta + np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3]))
        vdq = dq_transform(theta).T @ abc
        self.assertAlmostEqual(vdq[0], np.sqrt(3) * v_rms, places=9)
        self.assertAlmostEqual(vdq[1], 0.0, places=9)


if __name__ == '__main__':
    unittest.main()
