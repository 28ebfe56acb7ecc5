"""Exception types. The CLI maps these onto its exit codes."""


class UrbanMorphError(Exception):
    """Base class for all package errors."""


class ValidationError(UrbanMorphError, ValueError):
    """Input data or configuration violates a documented invariant (exit code 2)."""


class CRSError(ValidationError):
    """Coordinates look geographic (degrees) rather than projected meters."""


class NumericalError(UrbanMorphError, ArithmeticError):
    """An estimator or solver failed to produce a usable result (exit code 3)."""
