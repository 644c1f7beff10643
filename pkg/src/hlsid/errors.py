"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration or
input problems, 3 for numerical failures, 4 for identifiability failures.
"""

from __future__ import annotations


class HlsidError(Exception):
    exit_code = 3


class ConfigError(HlsidError, ValueError):
    exit_code = 2


class MalformedInput(ConfigError):
    """An input file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotone(MalformedInput):
    def __init__(self, index: int, line: int | None = None):
        self.index = index
        super().__init__(f"event times not strictly increasing at index {index}", line)


class NumericalError(HlsidError, ArithmeticError):
    exit_code = 3


class PoleError(NumericalError, ZeroDivisionError):
    pass


class StabilityError(NumericalError):
    pass


class CapacityError(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class GibbsViolation(NumericalError):
    pass


class SingularLimit(NumericalError):
    pass


class SingularEstimate(NumericalError):
    pass


class NumericallySingular(NumericalError):
    pass


class ShapeMismatch(NumericalError, ValueError):
    pass


class InconsistentBlocks(NumericalError):
    pass


class NotIdentifiable(HlsidError):
    exit_code = 4
