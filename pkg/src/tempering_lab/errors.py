"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Mismatched lengths between posteriors, counts and hypothesis classes."""


class NoSolutionError(ValueError):
    """A bracketed inversion has no root inside the admissible interval."""


class ConvexityError(ValueError):
    """The strong-convexity precondition of a 1-D minimization does not hold."""


class ConfigError(ValueError):
    """Experiment configuration failed schema or invariant validation."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed; ``where`` carries the coordinates."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} at {where}")
        self.where = where


class QuadratureError(ConvergenceError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, index=None):
        super().__init__(message, where=None if index is None else {"index": index})
        self.index = index
