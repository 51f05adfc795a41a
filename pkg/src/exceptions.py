"""
Exception types raised by the harmonic power-flow package.
"""

from typing import List, Optional, Sequence


class HpfError(Exception):
    """Base class for all package errors."""
    pass


class ConfigError(HpfError, ValueError):
    """A configuration file or field is invalid."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None):
        self.field = field
        self.line = line
        location = ""
        if field:
            location = field
            if line is not None:
                location += f" (line {line})"
            location += ": "
        super().__init__(f"{location}{message}")


class ModelError(HpfError, ValueError):
    """A component or resource model cannot be built from its parameters."""
    pass


class UnstableResourceError(ModelError):
    """The closed loop of a resource is not asymptotically stable."""

    def __init__(self, message: str, eigenvalues: Sequence[complex] = ()):
        self.eigenvalues = list(eigenvalues)
        super().__init__(message)


class ResonanceError(ModelError):
    """The lifted closed-loop system is singular at a harmonic order."""

    def __init__(self, message: str, order: int):
        self.order = order
        super().__init__(f"{message} (harmonic order {order})")


class SingularOperatingPointError(ModelError):
    """The DC component of v_D vanishes, so its reciprocal cannot be expanded."""

    def __init__(self, message: str, node: Optional[str] = None):
        self.node = node
        if node is not None:
            message = f"{message} at node {node}"
        super().__init__(message)


class TopologyError(HpfError, ValueError):
    """The network graph cannot be reduced (isolated or floating nodes)."""

    def __init__(self, message: str, nodes: Sequence[str] = ()):
        self.nodes: List[str] = list(nodes)
        if self.nodes:
            message = f"{message}: {', '.join(self.nodes)}"
        super().__init__(message)


class SolverError(HpfError, RuntimeError):
    """Base class for Newton-Raphson failures."""
    pass


class SingularJacobianError(SolverError):
    """The finite-difference Jacobian could not be factorised."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} (iteration {iteration})")


class NonConvergenceError(SolverError):
    """The iteration limit was reached before the residual met the tolerance."""

    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        self.residual_history = list(residual_history)
        super().__init__(message)


class SimulationError(HpfError, RuntimeError):
    """The time-domain integration diverged."""

    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(f"{message} (t = {time:.6f} s)")


class SamplingError(HpfError, ValueError):
    """A waveform cannot be analysed without resampling."""
    pass
