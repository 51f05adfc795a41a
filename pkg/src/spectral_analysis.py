"""
Spectrum extraction from sampled waveforms and comparison metrics.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exceptions import ModelError, SamplingError
from .harmonic_core import HarmonicSpectrum, PolyphaseSpectrum, SpectralParams

logger = logging.getLogger(__name__)

PHASE_FLOOR_PU = 1e-9


def samples_per_period(sp: SpectralParams, dt: float) -> int:
    """Integer number of samples per fundamental period, or SamplingError."""
    ratio = sp.period / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise SamplingError(f"period {sp.period:g} s is not an integer multiple of dt = {dt:g} s")
    return n


def _window_fft(samples: np.ndarray, sp: SpectralParams, dt: float, window_periods: int,
                t_start: Optional[float]) -> np.ndarray:
    n_period = samples_per_period(sp, dt)
    n = n_period * window_periods
    if samples.shape[0] < n:
        raise SamplingError(f"need {n} samples for {window_periods} periods, got {samples.shape[0]}")
    if window_periods * sp.h_max >= n // 2:
        raise SamplingError(f"sampling too coarse to resolve h_max = {sp.h_max}")
    window = samples[-n:]
    spectrum = np.fft.rfft(window, axis=0) / n
    bins = window_periods * np.arange(sp.h_max + 1)
    coeffs = spectrum[bins]
    if t_start is not None:
        orders = np.arange(sp.h_max + 1)
        shift = np.exp(-1j * orders * sp.omega1 * t_start)
        coeffs = coeffs * (shift if coeffs.ndim == 1 else shift[:, None])
    return coeffs


def dft_extract(waveform: Sequence[float], sp: SpectralParams, dt: float,
                window_periods: int = 5, t_start: Optional[float] = None) -> HarmonicSpectrum:
    """
    Two-sided spectrum of the last ``window_periods`` periods of a waveform.

    A cosine of amplitude 1 yields X_{+-1} = 0.5. Phases refer to the first
    sample of the window unless ``t_start`` (its absolute time) is given.

    Args:
        waveform: Uniformly sampled signal
        sp (SpectralParams): Fundamental and h_max
        dt (float): Sample time; the period must be an integer number of samples
        window_periods (int): Window length in fundamental periods
        t_start (float): Absolute time of the first window sample

    Returns:
        HarmonicSpectrum: Coefficients for orders -h_max..h_max

    Raises:
        SamplingError: If the window cannot be formed without resampling
    """
    coeffs = _window_fft(np.asarray(waveform, dtype=float), sp, dt, window_periods, t_start)
    return HarmonicSpectrum.from_positive(sp, coeffs[1:], dc=coeffs[0].real)


def dft_extract_polyphase(waveforms: np.ndarray, sp: SpectralParams, dt: float,
                          window_periods: int = 5, t_start: Optional[float] = None) -> PolyphaseSpectrum:
    """Per-phase spectra of an (n_samples, 3) waveform array."""
    samples = np.asarray(waveforms, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise SamplingError(f"expected (n_samples, 3) waveforms, got {samples.shape}")
    coeffs = _window_fft(samples, sp, dt, window_periods, t_start)
    return PolyphaseSpectrum.from_positive(sp, coeffs[1:].T, dc=coeffs[0].real)


@dataclass
class KpiReport:
    """
    Magnitude and phase errors per order between two spectra (p.u., deg).

    e_arg is NaN where no phase carries a magnitude above the floor in both spectra.
    """
    quantity: str
    node: str
    orders: np.ndarray
    e_abs: np.ndarray
    e_arg: np.ndarray

    def worst_abs(self) -> Tuple[int, float]:
        k = int(np.argmax(self.e_abs))
        return int(self.orders[k]), float(self.e_abs[k])

    def worst_arg(self) -> Tuple[int, float]:
        if np.all(np.isnan(self.e_arg)):
            return int(self.orders[0]), 0.0
        k = int(np.nanargmax(self.e_arg))
        return int(self.orders[k]), float(self.e_arg[k])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"quantity": self.quantity, "node": self.node, "h": self.orders,
                             "e_abs_pu": self.e_abs, "e_arg_deg": self.e_arg})


def compute_kpis(hpf: PolyphaseSpectrum, tds: PolyphaseSpectrum, scale: float = 1.0,
                 quantity: str = "", node: str = "",
                 phase_floor: float = PHASE_FLOOR_PU) -> KpiReport:
    """
    Compare two spectra order by order (orders 1..h_max).

    Args:
        hpf, tds: Spectra on the same harmonic set
        scale (float): Factor to p.u. applied to both spectra (e.g. sqrt(2)/V_b)
        quantity, node (str): Labels carried into the report
        phase_floor (float): Minimum p.u. magnitude in both spectra for a phase comparison

    Raises:
        ModelError: If the harmonic sets differ
    """
    if hpf.sp != tds.sp:
        raise ModelError("KPIs need spectra on the same harmonic set")
    a = hpf.positive() * scale
    b = tds.positive() * scale
    e_abs = np.max(np.abs(np.abs(a) - np.abs(b)), axis=0)
    diff = np.degrees(np.angle(a) - np.angle(b))
    wrapped = np.abs((diff + 180.0) % 360.0 - 180.0)
    valid = (np.abs(a) > phase_floor) & (np.abs(b) > phase_floor)
    e_arg = np.where(valid, wrapped, -np.inf).max(axis=0)
    e_arg = np.where(np.isfinite(e_arg), e_arg, np.nan)
    return KpiReport(quantity, node, hpf.sp.positive_orders(), e_abs, e_arg)


def kpi_table(reports: List[KpiReport]) -> pd.DataFrame:
    if not reports:
        return pd.DataFrame(columns=["quantity", "node", "h", "e_abs_pu", "e_arg_deg"])
    return pd.concat([r.to_frame() for r in reports], ignore_index=True)
