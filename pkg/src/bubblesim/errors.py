"""Exception types raised by the solver."""


class SimError(Exception):
    """Base class for all solver errors."""


class ConfigError(SimError):
    """Invalid scenario configuration or mismatched inputs."""


class MatrixError(SimError):
    """Assembled matrix violates a structural assumption (signals an assembly bug)."""


class DivergenceError(SimError):
    """Iterative solve produced non-finite values."""


class SolverError(SimError):
    """Pressure solve failed to converge within the iteration cap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
