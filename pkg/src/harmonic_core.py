"""
Spectral primitives for harmonic-domain modelling.

Signals are represented by two-sided Fourier coefficients over the harmonic
set H = {-h_max, ..., +h_max}, using the convention

    x(t) = sum_h X_h * exp(j * h * 2*pi*f1 * t)

Vectors of several channels are "lifted" harmonic-major: the block of order
h_i holds all channels of that order. Linear time-periodic (LTP) matrices are
stored by their Fourier coefficients and lifted to block-Toeplitz operators
acting on such vectors.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ModelError

logger = logging.getLogger(__name__)

ALPHA = np.exp(2j * np.pi / 3)

# Fortescue matrix, columns: homopolar, positive, negative
FORTESCUE = np.array([[1.0, 1.0, 1.0],
                      [1.0, ALPHA ** 2, ALPHA],
                      [1.0, ALPHA, ALPHA ** 2]], dtype=complex)
FORTESCUE_INV = FORTESCUE.conj().T / 3.0

HERMITIAN_RTOL = 1e-8

ArrayLike = Union[np.ndarray, Sequence[complex]]


@dataclass(frozen=True)
class SpectralParams:
    """
    Fundamental frequency and harmonic index set of a study.

    Attributes:
        f1 (float): Fundamental frequency in Hz
        h_max (int): Highest harmonic order considered
    """
    f1: float = 50.0
    h_max: int = 25

    def __post_init__(self):
        if not self.f1 > 0:
            raise ModelError(f"fundamental frequency must be positive, got {self.f1}")
        if int(self.h_max) != self.h_max or self.h_max < 1:
            raise ModelError(f"h_max must be a positive integer, got {self.h_max}")
        object.__setattr__(self, "h_max", int(self.h_max))

    @property
    def H(self) -> np.ndarray:
        """Ordered harmonic index set {-h_max, ..., h_max}."""
        return np.arange(-self.h_max, self.h_max + 1)

    @property
    def n_orders(self) -> int:
        return 2 * self.h_max + 1

    @property
    def omega1(self) -> float:
        return 2.0 * np.pi * self.f1

    @property
    def period(self) -> float:
        return 1.0 / self.f1

    def positive_orders(self) -> np.ndarray:
        return np.arange(1, self.h_max + 1)

    def index(self, h: int) -> int:
        """Position of order h inside H."""
        if abs(h) > self.h_max:
            raise ModelError(f"harmonic order {h} outside H (h_max={self.h_max})")
        return int(h) + self.h_max


def _hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    """Check X_{-h} = conj(X_h) along the last axis and return the exact symmetric part."""
    mirror = np.conj(coeffs[..., ::-1])
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    error = float(np.max(np.abs(coeffs - mirror))) if coeffs.size else 0.0
    if error > HERMITIAN_RTOL * max(scale, 1e-300):
        raise ModelError(
            f"spectrum of a real signal must be Hermitian (asymmetry {error:.3e})")
    return 0.5 * (coeffs + mirror)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class HarmonicSpectrum:
    """Two-sided Fourier coefficients of a real scalar signal."""

    def __init__(self, sp: SpectralParams, coeffs: ArrayLike, real_signal: bool = True):
        values = np.array(coeffs, dtype=complex).reshape(-1)
        if values.shape[0] != sp.n_orders:
            raise ModelError(
                f"expected {sp.n_orders} coefficients for h_max={sp.h_max}, got {values.shape[0]}")
        if real_signal:
            values = _hermitian_part(values)
        self.sp = sp
        self.coeffs = _frozen(values)

    @classmethod
    def zeros(cls, sp: SpectralParams) -> "HarmonicSpectrum":
        return cls(sp, np.zeros(sp.n_orders))

    @classmethod
    def from_positive(cls, sp: SpectralParams, positive: ArrayLike,
                      dc: float = 0.0) -> "HarmonicSpectrum":
        """Build a real-signal spectrum from its orders 1..h_max and DC value."""
        pos = np.asarray(positive, dtype=complex).reshape(-1)
        if pos.shape[0] != sp.h_max:
            raise ModelError(f"expected {sp.h_max} positive-order coefficients")
        full = np.concatenate([np.conj(pos[::-1]), [complex(np.real(dc))], pos])
        return cls(sp, full)

    def coeff(self, h: int) -> complex:
        return complex(self.coeffs[self.sp.index(h)])

    @property
    def dc(self) -> complex:
        return complex(self.coeffs[self.sp.h_max])

    def positive(self) -> np.ndarray:
        return self.coeffs[self.sp.h_max + 1:]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.coeffs)

    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.coeffs))

    def to_time(self, t: ArrayLike) -> np.ndarray:
        """Synthesise the waveform at the time instants t."""
        t = np.asarray(t, dtype=float)
        kernel = np.exp(1j * self.sp.omega1 * np.outer(self.sp.H, t))
        return np.real(self.coeffs @ kernel)

    def scaled(self, factor: float) -> "HarmonicSpectrum":
        return HarmonicSpectrum(self.sp, self.coeffs * factor)

    def __add__(self, other: "HarmonicSpectrum") -> "HarmonicSpectrum":
        _check_same_params(self.sp, other.sp)
        return HarmonicSpectrum(self.sp, self.coeffs + other.coeffs)

    def __sub__(self, other: "HarmonicSpectrum") -> "HarmonicSpectrum":
        _check_same_params(self.sp, other.sp)
        return HarmonicSpectrum(self.sp, self.coeffs - other.coeffs)

    def __mul__(self, factor: float) -> "HarmonicSpectrum":
        return self.scaled(factor)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HarmonicSpectrum(h_max={self.sp.h_max}, dc={self.dc:.4g})"


class VectorSpectrum:
    """
    Spectra of an n-channel real signal (e.g. a DQ pair).

    Coefficients are stored as an array of shape (n_channels, |H|).
    """

    def __init__(self, sp: SpectralParams, coeffs: ArrayLike, real_signal: bool = True):
        values = np.array(coeffs, dtype=complex)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2 or values.shape[1] != sp.n_orders:
            raise ModelError(
                f"expected coefficients of shape (n_channels, {sp.n_orders}), got {values.shape}")
        if real_signal:
            values = _hermitian_part(values)
        self.sp = sp
        self.coeffs = _frozen(values)

    @property
    def n_channels(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, sp: SpectralParams, n_channels: int) -> "VectorSpectrum":
        return cls(sp, np.zeros((n_channels, sp.n_orders)))

    @classmethod
    def from_lifted(cls, sp: SpectralParams, vector: ArrayLike, n_channels: Optional[int] = None,
                    real_signal: bool = True):
        """Inverse of lifted(): harmonic-major vector -> spectrum."""
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        if n_channels is None:
            n_channels = vec.shape[0] // sp.n_orders
        if vec.shape[0] != n_channels * sp.n_orders:
            raise ModelError("lifted vector length does not match the harmonic set")
        return cls._make(sp, vec.reshape(sp.n_orders, n_channels).T, real_signal)

    @classmethod
    def from_positive(cls, sp: SpectralParams, positive: ArrayLike, dc: Optional[ArrayLike] = None):
        """Build from orders 1..h_max, shape (n_channels, h_max); DC defaults to 0."""
        pos = np.asarray(positive, dtype=complex)
        if pos.ndim == 1:
            pos = pos[None, :]
        if pos.shape[1] != sp.h_max:
            raise ModelError(f"expected {sp.h_max} positive orders per channel")
        dc_col = np.zeros((pos.shape[0], 1), dtype=complex)
        if dc is not None:
            dc_col[:, 0] = np.real(np.asarray(dc, dtype=complex))
        full = np.concatenate([np.conj(pos[:, ::-1]), dc_col, pos], axis=1)
        return cls._make(sp, full, True)

    @classmethod
    def _make(cls, sp, coeffs, real_signal):
        return cls(sp, coeffs, real_signal=real_signal)

    def coeff(self, h: int) -> np.ndarray:
        return self.coeffs[:, self.sp.index(h)]

    def positive(self) -> np.ndarray:
        return self.coeffs[:, self.sp.h_max + 1:]

    def channel(self, c: int) -> HarmonicSpectrum:
        return HarmonicSpectrum(self.sp, self.coeffs[c])

    def lifted(self) -> np.ndarray:
        """Harmonic-major stacking: index = k * n_channels + c."""
        return self.coeffs.T.reshape(-1).copy()

    def to_time(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        kernel = np.exp(1j * self.sp.omega1 * np.outer(self.sp.H, t))
        return np.real(self.coeffs @ kernel)

    def scaled(self, factor: float):
        return self._make(self.sp, self.coeffs * factor, True)

    def to_pu(self, base: float):
        """RMS-per-harmonic normalisation: sqrt(2)*|X_h| / base."""
        return self.scaled(np.sqrt(2.0) / base)

    def __add__(self, other):
        _check_same_params(self.sp, other.sp)
        return self._make(self.sp, self.coeffs + other.coeffs, True)

    def __sub__(self, other):
        _check_same_params(self.sp, other.sp)
        return self._make(self.sp, self.coeffs - other.coeffs, True)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(channels={self.n_channels}, h_max={self.sp.h_max})"


class PolyphaseSpectrum(VectorSpectrum):
    """Per-phase spectra (A, B, C) of a three-phase voltage or current."""

    def __init__(self, sp: SpectralParams, coeffs: ArrayLike, real_signal: bool = True):
        super().__init__(sp, coeffs, real_signal=real_signal)
        if self.n_channels != 3:
            raise ModelError(f"a polyphase spectrum has exactly 3 phases, got {self.n_channels}")

    @classmethod
    def zeros(cls, sp: SpectralParams, n_channels: int = 3) -> "PolyphaseSpectrum":
        return cls(sp, np.zeros((3, sp.n_orders)))

    @classmethod
    def from_lifted(cls, sp: SpectralParams, vector: ArrayLike, n_channels: Optional[int] = 3,
                    real_signal: bool = True) -> "PolyphaseSpectrum":
        return super().from_lifted(sp, vector, 3, real_signal)

    @classmethod
    def from_sequences(cls, sp: SpectralParams,
                       sequences: Mapping[int, Tuple[complex, complex, complex]]) -> "PolyphaseSpectrum":
        """
        Build a spectrum from sequence components.

        Args:
            sp (SpectralParams): Harmonic set
            sequences: Map order h >= 1 -> (positive, negative, homopolar)

        Returns:
            PolyphaseSpectrum: Hermitian spectrum with zero DC
        """
        positive = np.zeros((3, sp.h_max), dtype=complex)
        for h, (pos, neg, zero) in sequences.items():
            if not 1 <= h <= sp.h_max:
                raise ModelError(f"sequence order {h} outside 1..{sp.h_max}")
            positive[:, h - 1] = sequence_compose(pos, neg, zero)
        return cls.from_positive(sp, positive)

    @property
    def phases(self) -> List[HarmonicSpectrum]:
        return [self.channel(p) for p in range(3)]


def _check_same_params(a: SpectralParams, b: SpectralParams) -> None:
    if a != b:
        raise ModelError(f"spectral parameters differ: {a} vs {b}")


class LtpMatrix:
    """
    Fourier coefficients {h: M_h} of a linear time-periodic matrix M(t).

    Only nonzero orders are stored. An LTI matrix stores order 0 only.
    """

    def __init__(self, shape: Tuple[int, int], fourier: Mapping[int, ArrayLike]):
        rows, cols = int(shape[0]), int(shape[1])
        coefficients: Dict[int, np.ndarray] = {}
        for h, value in fourier.items():
            block = np.array(value, dtype=complex)
            if block.ndim == 0 and rows == cols == 1:
                block = block.reshape(1, 1)
            if block.shape != (rows, cols):
                raise ModelError(
                    f"Fourier coefficient of order {h} has shape {block.shape}, expected {(rows, cols)}")
            coefficients[int(h)] = _frozen(block)
        self.shape = (rows, cols)
        self.fourier = coefficients

    @classmethod
    def constant(cls, matrix: ArrayLike) -> "LtpMatrix":
        m = np.atleast_2d(np.asarray(matrix))
        return cls(m.shape, {0: m})

    @classmethod
    def zeros(cls, shape: Tuple[int, int]) -> "LtpMatrix":
        return cls(shape, {})

    @property
    def orders(self) -> List[int]:
        return sorted(self.fourier)

    @property
    def max_order(self) -> int:
        return max((abs(h) for h in self.fourier), default=0)

    @property
    def is_lti(self) -> bool:
        return all(h == 0 or not np.any(m) for h, m in self.fourier.items())

    def coefficient(self, h: int) -> np.ndarray:
        if h in self.fourier:
            return self.fourier[h]
        return np.zeros(self.shape, dtype=complex)

    def is_real(self, tol: float = 1e-12) -> bool:
        """M_{-h} = conj(M_h) for every stored order."""
        for h in set(self.fourier) | {-h for h in self.fourier}:
            if np.max(np.abs(self.coefficient(-h) - np.conj(self.coefficient(h))), initial=0.0) > tol:
                return False
        return True

    def evaluate(self, t: float, f1: float) -> np.ndarray:
        """M(t) = sum_h M_h exp(j h 2 pi f1 t)."""
        total = np.zeros(self.shape, dtype=complex)
        for h, block in self.fourier.items():
            total += block * np.exp(1j * h * 2.0 * np.pi * f1 * t)
        return np.real(total) if self.is_real() else total

    def transpose(self) -> "LtpMatrix":
        return LtpMatrix((self.shape[1], self.shape[0]), {h: m.T for h, m in self.fourier.items()})

    @property
    def T(self) -> "LtpMatrix":
        return self.transpose()

    def __add__(self, other: "LtpMatrix") -> "LtpMatrix":
        if self.shape != other.shape:
            raise ModelError(f"cannot add LTP matrices of shapes {self.shape} and {other.shape}")
        orders = set(self.fourier) | set(other.fourier)
        return LtpMatrix(self.shape, {h: self.coefficient(h) + other.coefficient(h) for h in orders})

    def __mul__(self, scalar: complex) -> "LtpMatrix":
        return LtpMatrix(self.shape, {h: scalar * m for h, m in self.fourier.items()})

    __rmul__ = __mul__

    def __matmul__(self, other: "LtpMatrix") -> "LtpMatrix":
        """Product of the time-domain matrices (convolution of coefficients)."""
        if self.shape[1] != other.shape[0]:
            raise ModelError(f"cannot multiply LTP matrices {self.shape} @ {other.shape}")
        product: Dict[int, np.ndarray] = {}
        for h1, m1 in self.fourier.items():
            for h2, m2 in other.fourier.items():
                block = m1 @ m2
                product[h1 + h2] = product.get(h1 + h2, 0) + block
        return LtpMatrix((self.shape[0], other.shape[1]), product)

    def __repr__(self) -> str:
        return f"LtpMatrix(shape={self.shape}, orders={self.orders})"


class ToeplitzOperator:
    """Block-Toeplitz matrix over H x H; block (i, j) = M_{h_i - h_j}."""

    def __init__(self, sp: SpectralParams, block_shape: Tuple[int, int], matrix: np.ndarray,
                 bandwidth: int):
        expected = (sp.n_orders * block_shape[0], sp.n_orders * block_shape[1])
        if matrix.shape != expected:
            raise ModelError(f"operator matrix has shape {matrix.shape}, expected {expected}")
        self.sp = sp
        self.block_shape = (int(block_shape[0]), int(block_shape[1]))
        self.matrix = matrix
        self.bandwidth = int(bandwidth)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def block(self, h_i: int, h_j: int) -> np.ndarray:
        r, c = self.block_shape
        i, j = self.sp.index(h_i), self.sp.index(h_j)
        return self.matrix[i * r:(i + 1) * r, j * c:(j + 1) * c]

    def apply(self, vector: ArrayLike) -> np.ndarray:
        return self.matrix @ np.asarray(vector, dtype=complex)

    def __matmul__(self, other):
        if isinstance(other, ToeplitzOperator):
            if self.block_shape[1] != other.block_shape[0]:
                raise ModelError("inner block dimensions of lifted operators do not match")
            band = min(self.bandwidth + other.bandwidth, 2 * self.sp.h_max)
            return ToeplitzOperator(self.sp, (self.block_shape[0], other.block_shape[1]),
                                    self.matrix @ other.matrix, band)
        return self.apply(other)

    def __add__(self, other: "ToeplitzOperator") -> "ToeplitzOperator":
        if self.block_shape != other.block_shape:
            raise ModelError("cannot add lifted operators with different block shapes")
        return ToeplitzOperator(self.sp, self.block_shape, self.matrix + other.matrix,
                                max(self.bandwidth, other.bandwidth))

    def __sub__(self, other: "ToeplitzOperator") -> "ToeplitzOperator":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "ToeplitzOperator":
        return ToeplitzOperator(self.sp, self.block_shape, scalar * self.matrix, self.bandwidth)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return (f"ToeplitzOperator(block_shape={self.block_shape}, "
                f"bandwidth={self.bandwidth}, h_max={self.sp.h_max})")


def toeplitz_lift(m: LtpMatrix, sp: SpectralParams) -> ToeplitzOperator:
    """
    Lift an LTP matrix to its block-Toeplitz operator over H.

    Orders with |h| > 2*h_max cannot appear inside the band and are dropped
    with a warning.

    Args:
        m (LtpMatrix): Fourier coefficients of M(t)
        sp (SpectralParams): Harmonic set

    Returns:
        ToeplitzOperator: Operator with block (i, j) = M_{h_i - h_j}
    """
    n = sp.n_orders
    rows, cols = m.shape
    matrix = np.zeros((n * rows, n * cols), dtype=complex)
    limit = 2 * sp.h_max
    bandwidth = 0
    for h, block in m.fourier.items():
        if abs(h) > limit:
            logger.warning("Fourier order %d exceeds the lifting band |h| <= %d and is truncated",
                           h, limit)
            continue
        if not np.any(block):
            continue
        matrix += np.kron(np.eye(n, k=-h), block)
        bandwidth = max(bandwidth, abs(h))
    return ToeplitzOperator(sp, (rows, cols), matrix, bandwidth)


def harmonic_derivative(sp: SpectralParams, block_dim: int) -> ToeplitzOperator:
    """Block-diagonal operator with block h = j*h*2*pi*f1 * I_n."""
    if block_dim < 1:
        raise ModelError(f"block dimension must be >= 1, got {block_dim}")
    diagonal = np.diag(1j * sp.omega1 * sp.H.astype(float))
    return ToeplitzOperator(sp, (block_dim, block_dim),
                            np.kron(diagonal, np.eye(block_dim)), 0)


def fortescue_to_phase(seq_values: Tuple[complex, complex, complex]) -> np.ndarray:
    """
    Compound phase-domain matrix from sequence values (z_pos, z_neg, z_zero).

    Returns A * diag(z_zero, z_pos, z_neg) * A^-1 with the Fortescue matrix A.
    """
    z_pos, z_neg, z_zero = seq_values
    return FORTESCUE @ np.diag([z_zero, z_pos, z_neg]) @ FORTESCUE_INV


def sequence_decompose(ps: PolyphaseSpectrum, h: int) -> Tuple[complex, complex, complex]:
    """Positive, negative and homopolar components of the order-h phase coefficients."""
    zero, pos, neg = FORTESCUE_INV @ ps.coeff(h)
    return complex(pos), complex(neg), complex(zero)


def sequence_compose(pos: complex, neg: complex, zero: complex) -> np.ndarray:
    """Phase values (A, B, C) of a set of sequence components."""
    return FORTESCUE @ np.array([zero, pos, neg], dtype=complex)


def dq_transform(theta: float) -> np.ndarray:
    """Time-domain DQ -> ABC matrix at reference angle theta."""
    shifts = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
    return np.sqrt(2.0 / 3.0) * np.column_stack([np.cos(theta + shifts), -np.sin(theta + shifts)])


def dq_transform_coefficients(theta0: float) -> LtpMatrix:
    """
    Fourier coefficients of the DQ -> ABC matrix for theta = 2*pi*f1*t + theta0.

    Only orders +1 and -1 are nonzero; order -1 is the conjugate of order +1.
    Use ``.transpose()`` for the ABC -> DQ direction.
    """
    row = np.array([0.5, -1.0 / 2j])
    plus = np.sqrt(2.0 / 3.0) * np.exp(1j * theta0) * np.vstack(
        [row, np.conj(ALPHA) * row, ALPHA * row])
    return LtpMatrix((3, 2), {1: plus, -1: np.conj(plus)})


def dq_rotation(theta0: float) -> np.ndarray:
    """Rotation with dq_transform(wt + theta0) = dq_transform(wt) @ dq_rotation(theta0)."""
    c, s = np.cos(theta0), np.sin(theta0)
    return np.array([[c, -s], [s, c]])
