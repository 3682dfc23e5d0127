"""Exception hierarchy shared by the solver library, the CLI and the service."""

from typing import Optional


class CVQEError(Exception):
    """Base class for every error raised by cvqe."""


class InvalidDimensionError(CVQEError, ValueError):
    """Orbital/qubit count is not usable (e.g. Q = 0)."""


class InvalidFillingError(CVQEError, ValueError):
    """Electron count does not fit the orbitals."""


class DimensionMismatchError(CVQEError, ValueError):
    """Operators or states live on different registers."""


class CapacityError(CVQEError):
    """Requested object would exceed the desk-scale memory guards."""


class EmptyBasisError(CVQEError, ValueError):
    """A basis selection rule kept no states."""


class CompilationError(CVQEError, ValueError):
    """A Pauli exponential cannot be turned into gates."""


class ConfigError(CVQEError, ValueError):
    """Scan configuration failed to parse or validate."""


class SolverError(CVQEError):
    """Eigensolver did not reach the requested residual."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual
