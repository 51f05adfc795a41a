import unittest
import sys
import os

import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.exceptions import ModelError, SamplingError
from src.harmonic_core import PolyphaseSpectrum, SpectralParams
from src.spectral_analysis import (compute_kpis, dft_extract, dft_extract_polyphase, kpi_table,
                                   samples_per_period)


class TestDftExtraction(unittest.TestCase):
    """Test cases for spectrum extraction from sampled waveforms."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=7)
        self.dt = 1e-4
        self.t = 0.1 + self.dt * np.arange(2000)
        w = self.sp.omega1
        self.signal = 1.0 + 2.0 * np.cos(w * self.t + 0.3) + 0.5 * np.cos(5 * w * self.t - 1.0)

    def test_samples_per_period(self):
        """The period must hold an integer number of samples."""
        self.assertEqual(samples_per_period(self.sp, 1e-4), 200)
        with self.assertRaises(SamplingError):
            samples_per_period(self.sp, 3e-4)

    def test_known_cosines(self):
        """Amplitude A at phase phi gives X_h = A/2 exp(j phi)."""
        window = 5
        t_start = self.t[-window * 200]
        spectrum = dft_extract(self.signal, self.sp, self.dt, window, t_start=t_start)
        self.assertAlmostEqual(spectrum.dc.real, 1.0, places=10)
        self.assertAlmostEqual(spectrum.coeff(1), np.exp(0.3j), places=10)
        self.assertAlmostEqual(spectrum.coeff(5), 0.25 * np.exp(-1.0j), places=10)
        self.assertAlmostEqual(spectrum.coeff(-5), np.conj(spectrum.coeff(5)), places=12)
        self.assertAlmostEqual(abs(spectrum.coeff(3)), 0.0, places=10)

    def test_parseval(self):
        """Mean square over the window equals the sum of squared coefficients."""
        spectrum = dft_extract(self.signal, self.sp, self.dt, 5)
        mean_square = np.mean(self.signal[-1000:] ** 2)
        self.assertAlmostEqual(np.sum(np.abs(spectrum.coeffs) ** 2), mean_square, places=10)

    def test_polyphase(self):
        """Each column is one phase."""
        w = self.sp.omega1
        shifts = np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])
        waveforms = np.cos(w * self.t[:, None] + shifts[None, :])
        spectrum = dft_extract_polyphase(waveforms, self.sp, self.dt, 5, t_start=self.t[-1000])
        np.testing.assert_allclose(spectrum.coeff(1), 0.5 * np.exp(1j * shifts), atol=1e-10)
        with self.assertRaises(SamplingError):
            dft_extract_polyphase(waveforms[:, :2], self.sp, self.dt)

    def test_window_errors(self):
        """Short records and coarse sampling are rejected."""
        with self.assertRaises(SamplingError):
            dft_extract(self.signal[:500], self.sp, self.dt, 5)
        coarse = SpectralParams(f1=50.0, h_max=25)
        with self.assertRaises(SamplingError):
            dft_extract(np.zeros(400), coarse, 5e-4, 5)


class TestKpis(unittest.TestCase):
    """Test cases for the comparison metrics."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=3)

    def test_identical_spectra(self):
        """Identical spectra have zero errors; empty orders have no phase error."""
        a = PolyphaseSpectrum.from_sequences(self.sp, {1: (100.0, 0.0, 0.0), 3: (2.0, 0.0, 0.0)})
        report = compute_kpis(a, a, scale=np.sqrt(2.0) / 230.0, quantity="voltage", node="N1")
        np.testing.assert_allclose(report.e_abs, np.zeros(3), atol=1e-15)
        self.assertEqual(report.e_arg[0], 0.0)
        self.assertTrue(np.isnan(report.e_arg[1]))
        self.assertEqual(report.worst_arg(), (1, 0.0))

    def test_phase_wrapping(self):
        """Phase differences are wrapped to [0, 180] degrees."""
        a = PolyphaseSpectrum.from_sequences(self.sp, {1: (np.exp(1j * np.radians(179.0)), 0.0, 0.0)})
        b = PolyphaseSpectrum.from_sequences(self.sp, {1: (np.exp(-1j * np.radians(179.0)), 0.0, 0.0)})
        report = compute_kpis(a, b)
        self.assertAlmostEqual(report.e_arg[0], 2.0, places=9)
        self.assertAlmostEqual(report.e_abs[0], 0.0, places=12)

    def test_magnitude_error(self):
        """The magnitude error is the worst phase difference in p.u."""
        a = PolyphaseSpectrum.from_sequences(self.sp, {2: (1.0, 0.0, 0.0)})
        b = PolyphaseSpectrum.from_sequences(self.sp, {2: (1.1, 0.0, 0.0)})
        report = compute_kpis(a, b, scale=2.0)
        self.assertAlmostEqual(report.worst_abs()[1], 0.2, places=12)
        self.assertEqual(report.worst_abs()[0], 2)
        table = kpi_table([report])
        self.assertEqual(list(table.columns), ["quantity", "node", "h", "e_abs_pu", "e_arg_deg"])
        self.assertEqual(len(table), 3)

    def test_mismatched_sets(self):
        """Spectra on different harmonic sets cannot be compared."""
        with self.assertRaises(ModelError):
            compute_kpis(PolyphaseSpectrum.zeros(self.sp),
                         PolyphaseSpectrum.zeros(SpectralParams(f1=50.0, h_max=5)))


if __name__ == '__main__':
    unittest.main()
