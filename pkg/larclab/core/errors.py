"""
Exception types raised by the larclab core modules.

All of them derive from ValueError so code that only catches the built-in
keeps working; the CLI maps them onto exit codes.
"""

from typing import Optional


class LarcLabError(ValueError):
    """Base class for larclab errors."""


class DimensionMismatchError(LarcLabError):
    """Operands live in different ambient dimensions."""

    def __init__(self, expected: int, got: int, what: str = "operand"):
        super().__init__(f"{what} has ambient dimension {got}, expected {expected}")
        self.expected = expected
        self.got = got


class CapExceededError(LarcLabError):
    """An enumeration or table would exceed a configured cap."""

    def __init__(self, what: str, required: int, cap: int, hint: Optional[str] = None):
        message = f"{what}: requires {required}, cap is {cap}"
        if hint:
            message += f" ({hint})"
        super().__init__(message)
        self.what = what
        self.required = required
        self.cap = cap


class InvalidDualBasisError(LarcLabError):
    """A supplied basis does not span the dual of the given subspace."""


class ParameterError(LarcLabError):
    """A numeric parameter is outside the operation's domain."""


class UndefinedDistributionError(LarcLabError):
    """The requested hard distribution has no zero side to put mass on."""


class PropertyViolationError(LarcLabError):
    """A checked identity or predicted bound failed on a concrete instance."""
