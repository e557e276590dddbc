"""Exception hierarchy shared by every qtraj module."""


class QtrajError(Exception):
    """Base class for all errors raised by qtraj."""


class DimensionError(QtrajError, ValueError):
    pass


class ValidationError(QtrajError, ValueError):
    """An object violates one of its structural invariants.

    ``residual`` carries the offending numeric quantity when there is one.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class AsymptoticInconsistencyError(ValidationError):
    """A unitary family does not follow the 1/n, 1/sqrt(n) block asymptotics."""


class JumpUndefinedError(QtrajError, ArithmeticError):
    """Jump target requested where the jump intensity is below its floor."""


class DomainError(QtrajError, ValueError):
    pass


class ConsistencyError(QtrajError, RuntimeError):
    """An internal cross-check between two computation routes failed."""


class ConfigError(QtrajError, ValueError):
    pass
