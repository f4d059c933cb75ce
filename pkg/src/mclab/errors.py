"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument value or inconsistent shapes."""


class NumericError(ArithmeticError):
    """A numerical routine failed (non-finite input, non-convergence)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AlignmentError(NumericError):
    """Procrustes alignment is undefined (singular cross-Gram)."""


class RankAmbiguityError(NumericError):
    """No clear singular-value gap to decide the rank of a matrix."""


class OracleRequiredError(ParameterError):
    """A check needs the noise oracle or ground truth, which is missing."""


class DivergenceError(NumericError):
    """Gradient descent blew up; ``diagnostics['trace']`` holds the objective trace."""
