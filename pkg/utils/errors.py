"""Exception hierarchy shared by the solvers, the experiments and the CLI."""
from typing import Any, Optional


class RiccatiError(Exception):
    """Base class for every error raised by the suite."""


class ValidationError(RiccatiError, ValueError):
    """Input data violates a precondition (shape, symmetry, sign, ...)."""


class IndefiniteMatrixError(ValidationError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class SizeCapError(ValidationError):
    """Problem size exceeds a configured dense or desk-scale cap."""


class ConfigError(ValidationError):
    """Experiment configuration failed schema validation."""


class ConvergenceError(RiccatiError):
    """An iterative method stopped before reaching its tolerance.

    Args:
        message: Human readable description
        report: Partial SolveReport collected before the failure
    """

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class BreakdownError(ConvergenceError):
    """Krylov expansion produced no new directions."""


class SingularMatrixError(RiccatiError):
    """A pivot vanished to working precision."""


class NotPositiveDefiniteError(RiccatiError):
    """Conjugate gradients met non-positive curvature."""


class StabilizationError(RiccatiError):
    """No stabilizing initial guess was found."""


class DacError(RiccatiError):
    """Failure inside the divide-and-conquer recursion.

    Args:
        message: Description of the underlying failure
        level: Recursion depth of the failing node (0 is the root)
        offset: First global index of the failing block
        size: Size of the failing block
    """

    def __init__(self, message: str, level: int, offset: int, size: int):
        super().__init__(f"{message} (level={level}, offset={offset}, size={size})")
        self.level = level
        self.offset = offset
        self.size = size


class IntegrationError(RiccatiError):
    """Time integration of a closed loop failed."""

    def __init__(self, message: str, time: float, state: Optional[Any] = None):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time
        self.state = state


class ContainerFormatError(RiccatiError):
    """Binary checkpoint is malformed or of an unknown version."""
