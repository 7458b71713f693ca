"""
Error Types
Exception hierarchy shared by the solvers and the command line.
"""

from typing import Optional, Sequence


class InertiaControlError(Exception):
    """Base class for every error raised by the toolkit."""
    exit_code = 1


class ValidationError(InertiaControlError):
    """Input that cannot describe a valid problem."""
    exit_code = 2


class StructuralError(ValidationError, ValueError):
    """Malformed network structure or unknown bus/line reference."""


class ScenarioError(ValidationError, ValueError):
    """Scenario document violates the schema."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class GridError(ValidationError, ValueError):
    """DP discretization cannot be built from the scenario."""


class SolverError(InertiaControlError):
    """A solver failed on an otherwise valid problem."""
    exit_code = 3


class DynamicsError(SolverError, ValueError):
    """Dynamics cannot be evaluated (missing control, non-positive M or D)."""


class IntegrationError(SolverError, ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, message: str, bus_id: Optional[int] = None):
        self.bus_id = bus_id
        if bus_id is not None:
            message = f"{message} (bus {bus_id})"
        super().__init__(message)


class ConvergenceError(SolverError):
    """Newton iteration did not converge."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class RolloutError(SolverError):
    """DP forward pass left the state grid."""

    def __init__(self, message: str, stage: int, coordinates: Sequence[float] = ()):
        self.stage = stage
        self.coordinates = tuple(float(c) for c in coordinates)
        super().__init__(f"stage {stage}: {message}")


class OptimizationError(SolverError):
    """Trajectory optimizer failed while evaluating a schedule."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")
