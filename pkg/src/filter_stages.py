"""
Filter stages of a converter-interfaced resource.

A filter stage is either inductive (series R-L between two voltages) or
capacitive (shunt G-C fed by two currents). Parameter matrices are
scalar * identity on the three phases.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import signal

from .exceptions import ModelError
from .harmonic_core import SpectralParams

logger = logging.getLogger(__name__)

INDUCTIVE = "inductive"
CAPACITIVE = "capacitive"

THREE_LEG = "three_leg"
FOUR_LEG = "four_leg"

# 90 degree rotation in the DQ plane
J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class FilterStageParams:
    """
    Parameters of one filter stage.

    Attributes:
        kind (str): "inductive" or "capacitive"
        series_value (float): L in H (inductive) or C in F (capacitive)
        loss_value (float): R in Ohm (inductive) or G in S (capacitive)
    """
    kind: str
    series_value: float
    loss_value: float = 0.0

    def __post_init__(self):
        if self.kind not in (INDUCTIVE, CAPACITIVE):
            raise ModelError(f"unknown filter stage kind '{self.kind}'")
        if not self.series_value > 0:
            raise ModelError(f"{self.kind} stage needs a positive series value, got {self.series_value}")
        if self.loss_value < 0:
            raise ModelError(f"{self.kind} stage loss must be >= 0, got {self.loss_value}")

    @classmethod
    def inductive(cls, L: float, R: float = 0.0) -> "FilterStageParams":
        return cls(INDUCTIVE, L, R)

    @classmethod
    def capacitive(cls, C: float, G: float = 0.0) -> "FilterStageParams":
        return cls(CAPACITIVE, C, G)

    @property
    def is_inductive(self) -> bool:
        return self.kind == INDUCTIVE

    def immittance(self, h: int, f1: float) -> complex:
        """Impedance R + jhwL (inductive) or admittance G + jhwC (capacitive) at order h."""
        return complex(self.loss_value, h * 2.0 * np.pi * f1 * self.series_value)


class FilterStage:
    """
    Continuous-time block of a filter stage on three phases.

    Inductive:  dI/dt = L^-1 (V_in - V_out - R I)
    Capacitive: dV/dt = C^-1 (I_in - I_out - G V)
    """

    def __init__(self, params: FilterStageParams, initial_state=None):
        self.params = params
        k = params.loss_value / params.series_value
        g = 1.0 / params.series_value
        eye = np.eye(3)
        self.A = -k * eye
        self.B = np.hstack([g * eye, -g * eye])
        self.C = eye
        self.D = np.zeros((3, 6))
        self.system = signal.StateSpace(self.A, self.B, self.C, self.D)

        self.initial_state = np.zeros(3) if initial_state is None else np.asarray(initial_state, float)
        self.state = self.initial_state.copy()

    @property
    def time_constant(self) -> float:
        """L/R or C/G; infinite for a lossless stage."""
        if self.params.loss_value == 0:
            return np.inf
        return self.params.series_value / self.params.loss_value

    def reset(self) -> None:
        self.state = self.initial_state.copy()

    def derivative(self, state: np.ndarray, source_in: np.ndarray, source_out: np.ndarray) -> np.ndarray:
        return self.A @ state + self.B @ np.concatenate([source_in, source_out])

    def update(self, source_in, source_out, dt: float) -> np.ndarray:
        """
        Advance the stage by one RK4 step with inputs held over the step.

        Args:
            source_in: Driving quantity on the input side (V_in or I_in)
            source_out: Quantity on the output side (V_out or I_out)
            dt (float): Time step

        Returns:
            np.ndarray: New stage state (current or voltage per phase)
        """
        u_in = np.broadcast_to(np.asarray(source_in, float), (3,))
        u_out = np.broadcast_to(np.asarray(source_out, float), (3,))
        x = self.state
        k1 = self.derivative(x, u_in, u_out)
        k2 = self.derivative(x + 0.5 * dt * k1, u_in, u_out)
        k3 = self.derivative(x + 0.5 * dt * k2, u_in, u_out)
        k4 = self.derivative(x + dt * k3, u_in, u_out)
        self.state = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return self.state


def inductive_stage_ode(p: FilterStageParams) -> FilterStage:
    if p.kind != INDUCTIVE:
        raise ModelError(f"inductive_stage_ode needs an inductive stage, got {p.kind}")
    return FilterStage(p)


def capacitive_stage_ode(p: FilterStageParams) -> FilterStage:
    if p.kind != CAPACITIVE:
        raise ModelError(f"capacitive_stage_ode needs a capacitive stage, got {p.kind}")
    return FilterStage(p)


def dq_restated_params(p: FilterStageParams, sp: SpectralParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stage parameters restated in a DQ frame rotating at the fundamental.

    Args:
        p (FilterStageParams): Stage parameters
        sp (SpectralParams): Provides the fundamental frequency

    Returns:
        Tuple[np.ndarray, np.ndarray]: (R_DQ or G_DQ, L_DQ or C_DQ). The first
        matrix carries the decoupling terms +-w1*L (or +-w1*C) off the diagonal.
    """
    loss = p.loss_value * np.eye(2) + sp.omega1 * p.series_value * J2
    return loss, p.series_value * np.eye(2)


@dataclass(frozen=True)
class FrameCoupling:
    """Coupling between the converter frame and the grid: identity or homopolar blocking."""
    legs: str = FOUR_LEG

    def __post_init__(self):
        if self.legs not in (THREE_LEG, FOUR_LEG):
            raise ModelError(f"unknown converter topology '{self.legs}'")

    @property
    def matrix(self) -> np.ndarray:
        if self.legs == FOUR_LEG:
            return np.eye(3)
        return np.eye(3) - np.ones((3, 3)) / 3.0

    @property
    def blocks_homopolar(self) -> bool:
        return self.legs == THREE_LEG
