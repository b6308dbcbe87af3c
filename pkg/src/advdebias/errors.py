"""Exception types shared across the package."""


class AdvDebiasError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(AdvDebiasError):
    """Operand shapes are incompatible."""


class ValidationError(AdvDebiasError):
    """Invalid argument values or inconsistent configuration."""


class StateError(AdvDebiasError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class NumericError(AdvDebiasError):
    """Non-finite values encountered where finite ones are required."""


class NumericDivergenceError(NumericError):
    """A training loss became non-finite; the run is aborted."""

    def __init__(self, term, value):
        self.term = term
        self.value = value
        super().__init__(f"non-finite value in {term}: {value!r}")


class EmbeddingParseError(AdvDebiasError):
    """Malformed embedding file; carries the offending line number."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")
