"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies.
"""

__all__ = [
    "DecoupsimError",
    "InvalidInputError",
    "ShapeError",
    "InfeasibleSystemError",
    "SingularMatrixError",
    "InvalidConfigError",
]


class DecoupsimError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DecoupsimError, ValueError):
    """Malformed numerical input (non-finite entries, ambient mismatch, bad range)."""


class ShapeError(DecoupsimError, ValueError):
    """Operands whose shapes cannot be combined by the requested operation."""


class InfeasibleSystemError(DecoupsimError, ValueError):
    """System dimensions admit no interference-free decoupler."""


class SingularMatrixError(DecoupsimError, ArithmeticError):
    """A matrix that must be invertible (or full rank) numerically is not."""


class InvalidConfigError(DecoupsimError, ValueError):
    """Simulation configuration failed validation."""
