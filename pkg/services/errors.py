from typing import List, Optional, Sequence


class ContractionKitError(Exception):
    """Base class for all errors raised by the services"""


class DomainError(ContractionKitError, ValueError):
    """An input violates a documented precondition"""


class ProfileError(DomainError):
    """A curvature profile violates the standing assumptions"""

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = violations or [message]


class NoContractionError(ContractionKitError):
    """The supplied constants do not certify a positive rate"""

    def __init__(self, message: str, rate: Optional[float] = None):
        super().__init__(message)
        self.rate = rate


class QuadratureError(ContractionKitError):
    """Mesh doubling did not converge"""

    def __init__(self, message: str, iterates: Sequence[float] = ()):
        super().__init__(message)
        self.iterates = list(iterates)


class FitError(ContractionKitError):
    """Too few usable points for a decay-rate fit"""


class SimulationAbort(ContractionKitError):
    """Drift evaluation produced non-finite values"""

    def __init__(self, message: str, t: float, x, y, path_indices):
        super().__init__(message)
        self.t = t
        self.x = x
        self.y = y
        self.path_indices = list(path_indices)

    def state_dump(self) -> str:
        return f"t={self.t}, paths={self.path_indices}, x={self.x!r}, y={self.y!r}"


class EigenSolverError(ContractionKitError):
    """Grid refinement did not stabilise the eigenvalue"""

    def __init__(self, message: str, iterates: Sequence[float] = ()):
        super().__init__(message)
        self.iterates = list(iterates)
