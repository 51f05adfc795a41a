"""
Controller stages of a cascaded resource controller.

Each stage is a PI controller on the tracking error of one filter stage,
extended by a feed-forward term on its reference and a feed-through term on
the state of the next outer filter stage. All quantities are DQ pairs.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import signal

from .exceptions import ModelError

logger = logging.getLogger(__name__)

FF_MODES = ("auto_from_filter",)


@dataclass(frozen=True)
class ControllerStageParams:
    """
    Gains of one controller stage.

    Attributes:
        K_fb (float): Proportional feedback gain (SI: Ohm or S)
        T_fb (float): Integration time in s
        K_ft (float): Feed-through gain on the outer filter state
        K_ff_mode (str): How the feed-forward gain is obtained
    """
    K_fb: float
    T_fb: float
    K_ft: float = 0.0
    K_ff_mode: str = "auto_from_filter"

    def __post_init__(self):
        if not self.T_fb > 0:
            raise ModelError(f"integration time T_fb must be positive, got {self.T_fb}")
        if self.K_ff_mode not in FF_MODES:
            raise ModelError(f"unsupported feed-forward mode '{self.K_ff_mode}'")

    @property
    def K_i(self) -> float:
        return self.K_fb / self.T_fb


class ControllerStage:
    """
    Control law of one stage:

        d(xi)/dt = reference - measurement
        output   = K_fb (reference - measurement) + K_fb/T_fb xi
                   + K_ft outer + K_ff reference

    Inputs are ordered (reference, measurement, outer), each a DQ pair.
    """

    def __init__(self, params: ControllerStageParams, ff: np.ndarray, name: str = ""):
        ff = np.asarray(ff, dtype=float)
        if ff.shape != (2, 2):
            raise ModelError(f"feed-forward gain must be 2x2, got {ff.shape}")
        self.params = params
        self.K_ff = ff
        self.name = name

        eye = np.eye(2)
        self.A = np.zeros((2, 2))
        self.B = np.hstack([eye, -eye, np.zeros((2, 2))])
        self.C = params.K_i * eye
        self.D = np.hstack([params.K_fb * eye + ff, -params.K_fb * eye, params.K_ft * eye])
        self.system = signal.StateSpace(self.A, self.B, self.C, self.D)

        self._integral = np.zeros(2)

    @property
    def reference_gain(self) -> np.ndarray:
        """Total gain on the reference: K_fb + K_ff."""
        return self.D[:, 0:2]

    @property
    def integral(self) -> np.ndarray:
        return self._integral.copy()

    def reset(self) -> None:
        self._integral = np.zeros(2)

    def output(self, reference, measurement, outer) -> np.ndarray:
        u = np.concatenate([np.asarray(reference, float), np.asarray(measurement, float),
                            np.asarray(outer, float)])
        return self.C @ self._integral + self.D @ u

    def compute(self, reference, measurement, outer, dt: float) -> np.ndarray:
        """
        Advance the integrator by dt and return the stage output.

        Args:
            reference: DQ reference
            measurement: DQ measurement of the controlled filter state
            outer: DQ state of the next outer filter stage
            dt (float): Sample time, must be positive

        Returns:
            np.ndarray: DQ output (reference of the next inner stage or actuator voltage)
        """
        if dt <= 0.0:
            raise ModelError(f"sample time must be positive, got {dt}")
        error = np.asarray(reference, float) - np.asarray(measurement, float)
        self._integral = self._integral + error * dt
        return self.output(reference, measurement, outer)

    def get_components(self, reference, measurement, outer) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(proportional, integral, feed-through, feed-forward) parts of the current output."""
        reference = np.asarray(reference, float)
        error = reference - np.asarray(measurement, float)
        return (self.params.K_fb * error,
                self.C @ self._integral,
                self.params.K_ft * np.asarray(outer, float),
                self.K_ff @ reference)


def controller_stage_law(c: ControllerStageParams, ff: np.ndarray, name: str = "") -> ControllerStage:
    return ControllerStage(c, ff, name)


@dataclass(frozen=True)
class ComposedController:
    """
    State-space of a cascade of controller stages in the DQ frame.

    x: stacked integrator states (innermost first)
    u: DQ measurements, one pair per filter stage plus the grid-side quantity
    w: DQ reference of the outermost stage
    y: DQ actuator voltage
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    stage_names: Tuple[str, ...] = ()


def compose_cascade(stages: Sequence[ControllerStage]) -> ComposedController:
    """
    Compose stages in series, innermost first.

    Stage s measures input pair s, receives input pair s+1 as its outer
    quantity, and takes its reference from the output of stage s+1; the
    outermost stage takes the external reference w.
    """
    n = len(stages)
    if n == 0:
        raise ModelError("a cascade needs at least one controller stage")
    nx, nu, nw = 2 * n, 2 * (n + 1), 2

    # Affine forms of each stage output in terms of (x, u, w)
    out_x: List[np.ndarray] = [None] * n
    out_u: List[np.ndarray] = [None] * n
    out_w: List[np.ndarray] = [None] * n
    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu))
    E = np.zeros((nx, nw))

    for s in range(n - 1, -1, -1):
        stage = stages[s]
        if s == n - 1:
            ref_x, ref_u, ref_w = np.zeros((2, nx)), np.zeros((2, nu)), np.eye(2)
        else:
            ref_x, ref_u, ref_w = out_x[s + 1], out_u[s + 1], out_w[s + 1]

        meas_u = np.zeros((2, nu))
        meas_u[:, 2 * s:2 * s + 2] = np.eye(2)
        outer_u = np.zeros((2, nu))
        outer_u[:, 2 * s + 2:2 * s + 4] = np.eye(2)

        rows = slice(2 * s, 2 * s + 2)
        A[rows] = ref_x
        B[rows] = ref_u - meas_u
        E[rows] = ref_w

        d_ref, d_meas, d_outer = stage.D[:, 0:2], stage.D[:, 2:4], stage.D[:, 4:6]
        y_x = d_ref @ ref_x
        y_x[:, 2 * s:2 * s + 2] += stage.C
        out_x[s] = y_x
        out_u[s] = d_ref @ ref_u + d_meas @ meas_u[:, :] + d_outer @ outer_u
        out_w[s] = d_ref @ ref_w

    logger.debug("Composed %d controller stages into a %d-state DQ controller", n, nx)
    return ComposedController(A=A, B=B, C=out_x[0], D=out_u[0], E=E, F=out_w[0],
                              stage_names=tuple(st.name for st in stages))
