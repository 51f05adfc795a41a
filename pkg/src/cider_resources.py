"""
Grid-forming and grid-following resource models.

A resource is split into its power hardware (actuator plus filter, modelled
in phase coordinates) and its controller (cascaded DQ stages). Both are LTI
in their own frame; they are coupled through the DQ transforms, which makes
the interconnection time-periodic. The harmonic response solves the lifted
interconnection once and maps the grid-side input spectrum to the grid-side
output spectrum:

    forming:   injected current  -> terminal voltage
    following: terminal voltage  -> injected current (nonlinear reference)
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .controller_stages import (ComposedController, ControllerStageParams,
                                compose_cascade, controller_stage_law)
from .exceptions import (ModelError, ResonanceError, SingularOperatingPointError,
                         UnstableResourceError)
from .filter_stages import (CAPACITIVE, FOUR_LEG, INDUCTIVE, J2, THREE_LEG,
                            FilterStageParams, FrameCoupling, dq_restated_params)
from .harmonic_core import (HarmonicSpectrum, LtpMatrix, PolyphaseSpectrum,
                            SpectralParams, VectorSpectrum, dq_rotation,
                            dq_transform_coefficients, harmonic_derivative,
                            sequence_decompose, toeplitz_lift)

logger = logging.getLogger(__name__)

FORMING = "forming"
FOLLOWING = "following"

STAGE_NAMES = ("alpha", "phi", "gamma")
STAGE_PATTERN = {
    FORMING: (INDUCTIVE, CAPACITIVE),
    FOLLOWING: (INDUCTIVE, CAPACITIVE, INDUCTIVE),
}
DEFAULT_LEGS = {FORMING: FOUR_LEG, FOLLOWING: THREE_LEG}

# Filter state group that faces the grid: V_phi (forming) or I_gamma (following)
GRID_STATE_GROUP = {FORMING: 1, FOLLOWING: 2}

PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class Setpoint:
    """
    Setpoint of a resource.

    Forming resources use V_sigma (phase RMS) and f_sigma; following
    resources use P_sigma and Q_sigma.
    """
    V_sigma: Optional[float] = None
    f_sigma: Optional[float] = None
    P_sigma: Optional[float] = None
    Q_sigma: Optional[float] = None

    @classmethod
    def forming(cls, V_sigma: float, f_sigma: float = 50.0) -> "Setpoint":
        return cls(V_sigma=V_sigma, f_sigma=f_sigma)

    @classmethod
    def following(cls, P_sigma: float, Q_sigma: float = 0.0) -> "Setpoint":
        return cls(P_sigma=P_sigma, Q_sigma=Q_sigma)

    @classmethod
    def from_apparent_power(cls, S: float, pf: float) -> "Setpoint":
        """Following setpoint for apparent power S at an inductive power factor."""
        if not 0.0 < pf <= 1.0:
            raise ModelError(f"power factor must be in (0, 1], got {pf}")
        return cls.following(float(S * pf), float(S * np.sin(np.arccos(pf))))


@dataclass(frozen=True)
class CiderSpec:
    """
    Complete description of one resource.

    Attributes:
        name (str): Identifier used in logs and result tables
        kind (str): "forming" or "following"
        filters: Filter stages, innermost (actuator side) first
        controllers: One controller stage per filter stage, same order
        setpoint (Setpoint): Voltage or power setpoint
        legs (str): "four_leg" or "three_leg"; defaults by kind
        rated_power (float): Rated apparent power in VA (informational)
        theta0 (float): Reference angle of a forming resource in rad
        f1 (float): Fundamental frequency in Hz
    """
    name: str
    kind: str
    filters: Tuple[FilterStageParams, ...]
    controllers: Tuple[ControllerStageParams, ...]
    setpoint: Setpoint
    legs: Optional[str] = None
    rated_power: float = 0.0
    theta0: float = 0.0
    f1: float = 50.0

    def __post_init__(self):
        if self.kind not in STAGE_PATTERN:
            raise ModelError(f"{self.name}: unknown resource kind '{self.kind}'")
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "controllers", tuple(self.controllers))
        if self.legs is None:
            object.__setattr__(self, "legs", DEFAULT_LEGS[self.kind])
        if self.legs != DEFAULT_LEGS[self.kind]:
            raise ModelError(
                f"{self.name}: a {self.kind} resource uses a {DEFAULT_LEGS[self.kind]} converter")

        pattern = STAGE_PATTERN[self.kind]
        if tuple(f.kind for f in self.filters) != pattern:
            raise ModelError(f"{self.name}: a {self.kind} resource needs filter stages {pattern}")
        if len(self.controllers) != len(self.filters):
            raise ModelError(f"{self.name}: one controller stage per filter stage is required")

        sp_set = self.setpoint
        if self.kind == FORMING:
            if sp_set.V_sigma is None or sp_set.V_sigma < 0:
                raise ModelError(f"{self.name}: forming setpoint needs V_sigma >= 0")
            f_sigma = self.f1 if sp_set.f_sigma is None else sp_set.f_sigma
            if not np.isclose(f_sigma, self.f1):
                raise ModelError(
                    f"{self.name}: frequency setpoint {f_sigma} Hz differs from f1 = {self.f1} Hz")
        elif sp_set.P_sigma is None or sp_set.Q_sigma is None:
            raise ModelError(f"{self.name}: following setpoint needs P_sigma and Q_sigma")

    @property
    def stage_names(self) -> Tuple[str, ...]:
        return STAGE_NAMES[:len(self.filters)]

    @property
    def coupling(self) -> FrameCoupling:
        return FrameCoupling(self.legs)

    @property
    def n_stages(self) -> int:
        return len(self.filters)


@dataclass(frozen=True)
class LtpStateSpace:
    """dx/dt = A x + B u + E w,  y = C x + D u + F w  with LTP matrices."""
    A: LtpMatrix
    B: LtpMatrix
    C: LtpMatrix
    D: LtpMatrix
    E: LtpMatrix
    F: LtpMatrix

    def __post_init__(self):
        n_x, n_u, n_w, n_y = self.n_x, self.n_u, self.n_w, self.n_y
        expected = {"A": (n_x, n_x), "B": (n_x, n_u), "E": (n_x, n_w),
                    "C": (n_y, n_x), "D": (n_y, n_u), "F": (n_y, n_w)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ModelError(
                    f"state-space matrix {name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def from_arrays(cls, A, B, C, D, E, F) -> "LtpStateSpace":
        return cls(*(LtpMatrix.constant(m) for m in (A, B, C, D, E, F)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_w(self) -> int:
        return self.E.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def is_lti(self) -> bool:
        return all(getattr(self, m).is_lti for m in "ABCDEF")

    def lift(self, sp: SpectralParams) -> Dict[str, np.ndarray]:
        return {m: toeplitz_lift(getattr(self, m), sp).matrix for m in "ABCDEF"}


def _check_kind(spec: CiderSpec, kind: str) -> None:
    if spec.kind != kind:
        raise ModelError(f"{spec.name}: expected a {kind} resource, got {spec.kind}")


def _hardware_matrices(spec: CiderSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-phase (A, B, E) of the filter; phases are decoupled and identical."""
    f = spec.filters
    L_a, R_a = f[0].series_value, f[0].loss_value
    C_p, G_p = f[1].series_value, f[1].loss_value
    if spec.kind == FORMING:
        A = np.array([[-R_a / L_a, -1.0 / L_a],
                      [1.0 / C_p, -G_p / C_p]])
        B = np.array([[1.0 / L_a], [0.0]])
        E = np.array([[0.0], [-1.0 / C_p]])
    else:
        L_g, R_g = f[2].series_value, f[2].loss_value
        A = np.array([[-R_a / L_a, -1.0 / L_a, 0.0],
                      [1.0 / C_p, -G_p / C_p, -1.0 / C_p],
                      [0.0, 1.0 / L_g, -R_g / L_g]])
        B = np.array([[1.0 / L_a], [0.0], [0.0]])
        E = np.array([[0.0], [0.0], [-1.0 / L_g]])
    return A, B, E


def _hardware_statespace(spec: CiderSpec) -> LtpStateSpace:
    A_s, B_s, E_s = _hardware_matrices(spec)
    n = A_s.shape[0]
    eye3 = np.eye(3)
    C = np.vstack([np.eye(3 * n), np.zeros((3, 3 * n))])
    D = np.zeros((3 * n + 3, 3))
    F = np.vstack([np.zeros((3 * n, 3)), eye3])
    return LtpStateSpace.from_arrays(np.kron(A_s, eye3), np.kron(B_s, eye3), C, D,
                                     np.kron(E_s, eye3), F)


def compose_controller(spec: CiderSpec) -> ComposedController:
    """Series composition of the controller stages with feed-forward taken from the filters."""
    sp = SpectralParams(f1=spec.f1)
    stages = [controller_stage_law(c, dq_restated_params(f, sp)[0], name)
              for f, c, name in zip(spec.filters, spec.controllers, spec.stage_names)]
    return compose_cascade(stages)


def _controller_statespace(spec: CiderSpec) -> LtpStateSpace:
    k = compose_controller(spec)
    return LtpStateSpace.from_arrays(k.A, k.B, k.C, k.D, k.E, k.F)


def build_forming_statespace(spec: CiderSpec) -> Tuple[LtpStateSpace, LtpStateSpace]:
    """
    Hardware and controller blocks of a grid-forming resource.

    Hardware: x = (I_alpha, V_phi) per phase, u = actuator voltage,
    w = I_gamma, y = (x, w). Controller: x = integrals of the alpha and phi
    errors, u = (I_alpha, V_phi, I_gamma) in DQ, w = V_phi reference, y = DQ
    actuator voltage.
    """
    _check_kind(spec, FORMING)
    return _hardware_statespace(spec), _controller_statespace(spec)


def build_following_statespace(spec: CiderSpec) -> Tuple[LtpStateSpace, LtpStateSpace]:
    """
    Hardware and controller blocks of a grid-following resource.

    Hardware: x = (I_alpha, V_phi, I_gamma) per phase, u = actuator voltage,
    w = V_gamma, y = (x, w). Controller: x = integrals of the three errors,
    u = (I_alpha, V_phi, I_gamma, V_gamma) in DQ, w = I_gamma reference.
    """
    _check_kind(spec, FOLLOWING)
    return _hardware_statespace(spec), _controller_statespace(spec)


def build_statespace(spec: CiderSpec) -> Tuple[LtpStateSpace, LtpStateSpace]:
    if spec.kind == FORMING:
        return build_forming_statespace(spec)
    return build_following_statespace(spec)


def psi_coefficients(vd: HarmonicSpectrum) -> HarmonicSpectrum:
    """
    Second-order series of the reciprocal 1/v_D.

    With v_D = V_0 + xi (xi without DC):
        Psi = 1/V_0 - xi/V_0^2 + (xi * xi)/V_0^3
    where * is the convolution of coefficient sequences, truncated to H.

    Raises:
        SingularOperatingPointError: If V_0 = 0
    """
    h_max = vd.sp.h_max
    v0 = float(np.real(vd.dc))
    if v0 == 0.0:
        raise SingularOperatingPointError("DC component of v_D is zero; 1/v_D has no expansion")
    xi = np.array(vd.coeffs)
    xi[h_max] = 0.0
    square = np.convolve(xi, xi)[h_max:h_max + vd.sp.n_orders]
    psi = -xi / v0 ** 2 + square / v0 ** 3
    psi[h_max] += 1.0 / v0
    return HarmonicSpectrum(vd.sp, psi)


def following_reference(psi: HarmonicSpectrum, sp_set: Setpoint) -> VectorSpectrum:
    """DQ current reference [P_sigma; Q_sigma] / v_D from the reciprocal series."""
    return VectorSpectrum(psi.sp, np.vstack([psi.coeffs * sp_set.P_sigma,
                                             psi.coeffs * sp_set.Q_sigma]))


def forming_reference(sp_set: Setpoint, sp: SpectralParams) -> VectorSpectrum:
    """DC-only DQ voltage reference; D = sqrt(3/2) * peak = sqrt(3) * RMS setpoint."""
    coeffs = np.zeros((2, sp.n_orders), dtype=complex)
    coeffs[0, sp.h_max] = np.sqrt(3.0) * sp_set.V_sigma
    return VectorSpectrum(sp, coeffs)


def dq_closed_loop_matrix(spec: CiderSpec) -> np.ndarray:
    """
    System matrix of the closed loop restated in the DQ frame.

    The grid-side input is held at zero (open terminals for a forming
    resource, stiff zero voltage for a following one). State order:
    hardware DQ states (stage-major, D before Q), then controller states.
    """
    A_s, B_s, _ = _hardware_matrices(spec)
    n = A_s.shape[0]
    k = compose_controller(spec)
    omega1 = 2.0 * np.pi * spec.f1

    eye2 = np.eye(2)
    A_dq = np.kron(A_s, eye2) - omega1 * np.kron(np.eye(n), J2)
    B_dq = np.kron(B_s, eye2)
    # controller measures the hardware states and the (zero) grid-side pair
    C_y = np.vstack([np.eye(2 * n), np.zeros((2, 2 * n))])

    top = np.hstack([A_dq + B_dq @ k.D @ C_y, B_dq @ k.C])
    bottom = np.hstack([k.B @ C_y, k.A])
    return np.vstack([top, bottom])


def check_stability(spec: CiderSpec) -> np.ndarray:
    """
    Verify that the DQ closed loop is Hurwitz.

    Homopolar modes of a four-leg converter are not controlled; their
    open-loop eigenvalues are only reported.

    Returns:
        np.ndarray: Closed-loop eigenvalues

    Raises:
        UnstableResourceError: If any closed-loop eigenvalue has Re >= 0
    """
    eigenvalues = np.linalg.eigvals(dq_closed_loop_matrix(spec))
    worst = float(np.max(eigenvalues.real))
    if worst >= 0.0:
        raise UnstableResourceError(
            f"{spec.name}: closed loop is not asymptotically stable (max Re = {worst:.4g} 1/s)",
            eigenvalues)
    logger.info("%s: closed loop stable, slowest mode Re = %.4g 1/s", spec.name, worst)

    if not spec.coupling.blocks_homopolar:
        homopolar = np.linalg.eigvals(_hardware_matrices(spec)[0])
        if np.max(homopolar.real) >= 0.0:
            logger.warning("%s: undamped homopolar filter modes %s", spec.name, homopolar)
    return eigenvalues


def _block_diag_ltp(m: LtpMatrix, count: int) -> LtpMatrix:
    rows, cols = m.shape
    return LtpMatrix((rows * count, cols * count),
                     {h: np.kron(np.eye(count), block) for h, block in m.fourier.items()})


def _rotation_operator(sp: SpectralParams, theta0: float) -> np.ndarray:
    return np.kron(np.eye(sp.n_orders), dq_rotation(theta0))


class HarmonicResponse:
    """
    Lifted closed-loop response of one resource.

    The hardware row and controller row of the lifted system are

        (N - A_p - B_p Tp D_k Tk C_p) X_p - B_p Tp C_k X_k = (E_p + B_p Tp D_k Tk F_p) W_p + B_p Tp F_k W_k
        -B_k Tk C_p X_p + (N - A_k) X_k                   = B_k Tk F_p W_p + E_k W_k

    with Tk, Tp the lifted ABC->DQ and DQ->ABC transforms at theta0 = 0. A
    reference angle theta0 is applied by rotating the DQ reference, since
    every controller block commutes with planar rotations.
    """

    def __init__(self, spec: CiderSpec, sp: SpectralParams):
        self.spec = spec
        self.sp = sp
        pi, kappa = build_statespace(spec)
        self.hardware = pi
        self.controller = kappa

        K = sp.n_orders
        lp = pi.lift(sp)
        lk = kappa.lift(sp)
        t_pk = dq_transform_coefficients(0.0)
        self._Tp = toeplitz_lift(t_pk, sp).matrix
        self._Tk = toeplitz_lift(_block_diag_ltp(t_pk.transpose(), pi.n_y // 3), sp).matrix
        self._Tk_grid = toeplitz_lift(t_pk.transpose(), sp).matrix
        self._P = np.kron(np.eye(K), spec.coupling.matrix)

        BT = lp["B"] @ self._Tp
        TkC = self._Tk @ lp["C"]
        TkF = self._Tk @ lp["F"]
        N_p = harmonic_derivative(sp, pi.n_x).matrix
        N_k = harmonic_derivative(sp, kappa.n_x).matrix

        system = np.block([
            [N_p - lp["A"] - BT @ lk["D"] @ TkC, -BT @ lk["C"]],
            [-lk["B"] @ TkC, N_k - lk["A"]],
        ])
        rhs_input = np.vstack([lp["E"] + BT @ lk["D"] @ TkF, lk["B"] @ TkF])
        rhs_reference = np.vstack([BT @ lk["F"], lk["E"]])
        self._lifted = {"kappa": lk, "pi": lp}

        lu = self._factorise(system, pi.n_x, kappa.n_x)
        self._X_input = lu_solve(lu, rhs_input @ self._P)
        self._X_reference = lu_solve(lu, rhs_reference)

        group = GRID_STATE_GROUP[spec.kind]
        select = np.zeros((3, pi.n_x))
        select[:, 3 * group:3 * group + 3] = np.eye(3)
        n_hw = K * pi.n_x
        S = self._P @ np.kron(np.eye(K), select)
        self.G_in = S @ self._X_input[:n_hw]
        self.G_ref = S @ self._X_reference[:n_hw]

        if spec.kind == FORMING:
            self._forming_ref = forming_reference(spec.setpoint, sp).lifted()
        logger.info("%s: lifted %s response built (%d unknowns, h_max=%d)",
                    spec.name, spec.kind, system.shape[0], sp.h_max)

    def _factorise(self, system: np.ndarray, n_p: int, n_k: int):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(system, check_finite=False)
        pivots = np.abs(np.diag(lu))
        threshold = PIVOT_RTOL * float(np.max(pivots))
        col = int(np.argmin(pivots))
        if not pivots[col] > threshold:
            n_hw = self.sp.n_orders * n_p
            k = col // n_p if col < n_hw else (col - n_hw) // n_k
            raise ResonanceError(f"{self.spec.name}: lifted closed loop is singular",
                                 int(self.sp.H[k]))
        return lu, piv

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def input_quantity(self) -> str:
        return "current" if self.kind == FORMING else "voltage"

    @property
    def output_quantity(self) -> str:
        return "voltage" if self.kind == FORMING else "current"

    def theta0_for(self, voltage: np.ndarray) -> float:
        """Reference angle of the controller for a lifted terminal voltage."""
        if self.kind == FORMING:
            return self.spec.theta0
        spectrum = PolyphaseSpectrum.from_lifted(self.sp, voltage)
        v_pos = sequence_decompose(spectrum, 1)[0]
        if abs(v_pos) == 0.0:
            raise SingularOperatingPointError(
                "no fundamental positive-sequence voltage to lock on", node=self.spec.name)
        return float(np.angle(v_pos))

    def measured_vdq(self, voltage: np.ndarray, theta0: float) -> VectorSpectrum:
        """DQ spectrum of the terminal voltage seen by the controller."""
        v_dq = self._Tk_grid @ (self._P @ voltage)
        v_dq = _rotation_operator(self.sp, theta0).T @ v_dq
        return VectorSpectrum.from_lifted(self.sp, v_dq, 2)

    def reference(self, grid_input: np.ndarray) -> Tuple[np.ndarray, float]:
        """
        Lifted DQ reference in the controller frame and the frame angle.

        Returns:
            Tuple[np.ndarray, float]: (reference rotated to theta0 = 0, theta0)
        """
        theta0 = self.theta0_for(grid_input)
        if self.kind == FORMING:
            reference = self._forming_ref
        else:
            vd = self.measured_vdq(grid_input, theta0).channel(0)
            try:
                psi = psi_coefficients(vd)
            except SingularOperatingPointError as exc:
                raise SingularOperatingPointError(str(exc), node=self.spec.name) from exc
            reference = following_reference(psi, self.spec.setpoint).lifted()
        return _rotation_operator(self.sp, theta0) @ reference, theta0

    def evaluate_lifted(self, grid_input: np.ndarray) -> np.ndarray:
        """Lifted grid-side output for a lifted grid-side input (SI units)."""
        grid_input = np.asarray(grid_input, dtype=complex)
        reference, _ = self.reference(grid_input)
        return self.G_in @ grid_input + self.G_ref @ reference

    def evaluate(self, spectrum: PolyphaseSpectrum) -> PolyphaseSpectrum:
        if spectrum.sp != self.sp:
            raise ModelError("spectrum and response use different spectral parameters")
        return PolyphaseSpectrum.from_lifted(self.sp, self.evaluate_lifted(spectrum.lifted()))

    def internal_spectra(self, spectrum: PolyphaseSpectrum) -> Dict[str, VectorSpectrum]:
        """
        Internal spectra for a grid-side input: filter states, actuator
        voltage, DQ reference and controller states (in the theta0 frame).
        """
        grid_input = spectrum.lifted()
        reference, theta0 = self.reference(grid_input)
        solution = self._X_input @ grid_input + self._X_reference @ reference
        K, n_p = self.sp.n_orders, self.hardware.n_x
        x_p, x_k = solution[:K * n_p], solution[K * n_p:]

        lk, lp = self._lifted["kappa"], self._lifted["pi"]
        y_p = lp["C"] @ x_p + lp["F"] @ (self._P @ grid_input)
        y_k = lk["C"] @ x_k + lk["D"] @ (self._Tk @ y_p) + lk["F"] @ reference
        actuator = self._Tp @ y_k

        names = ("I_alpha", "V_phi", "I_gamma")[:n_p // 3]
        hardware = VectorSpectrum.from_lifted(self.sp, x_p, n_p)
        result: Dict[str, VectorSpectrum] = {
            name: PolyphaseSpectrum(self.sp, hardware.coeffs[3 * g:3 * g + 3])
            for g, name in enumerate(names)
        }
        result["V_alpha"] = PolyphaseSpectrum.from_lifted(self.sp, actuator)
        back = _rotation_operator(self.sp, theta0).T
        result["reference_dq"] = VectorSpectrum.from_lifted(self.sp, back @ reference, 2)
        n_k = self.controller.n_x
        rotate_states = np.kron(np.eye(K * n_k // 2), dq_rotation(theta0).T)
        result["controller_state"] = VectorSpectrum.from_lifted(self.sp, rotate_states @ x_k, n_k)
        return result


def harmonic_response(spec: CiderSpec, sp: SpectralParams,
                      check_stability_first: bool = True) -> HarmonicResponse:
    """
    Build the lifted closed-loop response of a resource.

    Raises:
        ModelError: If the fundamental frequencies differ
        UnstableResourceError: If the DQ closed loop is not Hurwitz
        ResonanceError: If the lifted system is singular at some order
    """
    if not np.isclose(spec.f1, sp.f1):
        raise ModelError(f"{spec.name}: resource f1 = {spec.f1} Hz, study f1 = {sp.f1} Hz")
    if check_stability_first:
        check_stability(spec)
    return HarmonicResponse(spec, sp)


def example_forming_cider(name: str = "forming", V_sigma: float = 241.5,
                          f1: float = 50.0) -> CiderSpec:
    """Grid-forming resource with an LC filter and two PI stages."""
    return CiderSpec(
        name=name,
        kind=FORMING,
        filters=(FilterStageParams.inductive(L=0.2e-3, R=0.61e-3),
                 FilterStageParams.capacitive(C=150e-6, G=0.0)),
        controllers=(ControllerStageParams(K_fb=15.0, T_fb=0.03, K_ft=1.0),
                     ControllerStageParams(K_fb=0.05, T_fb=2.5e-4, K_ft=0.0)),
        setpoint=Setpoint.forming(V_sigma, f1),
        f1=f1,
    )


def example_following_cider(name: str = "following", P_sigma: float = 50e3,
                            Q_sigma: float = 16.4e3, f1: float = 50.0) -> CiderSpec:
    """Grid-following resource with an LCL filter and three PI stages."""
    return CiderSpec(
        name=name,
        kind=FOLLOWING,
        filters=(FilterStageParams.inductive(L=325e-6, R=1.02e-3),
                 FilterStageParams.capacitive(C=90.3e-6, G=0.0),
                 FilterStageParams.inductive(L=325e-6, R=1.02e-3)),
        controllers=(ControllerStageParams(K_fb=10.5, T_fb=6.6e-4, K_ft=1.0),
                     ControllerStageParams(K_fb=1.0, T_fb=2.6e-3, K_ft=0.0),
                     ControllerStageParams(K_fb=0.2, T_fb=0.1, K_ft=1.0)),
        setpoint=Setpoint.following(P_sigma, Q_sigma),
        f1=f1,
    )
