"""Exception hierarchy shared by all modules."""


class InvSpecError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(InvSpecError, ValueError):
    """Invalid grid, potential, exponent or run configuration."""


class GridMismatchError(InvSpecError, ValueError):
    """Two fields live on different grids."""


class NumericError(InvSpecError, ArithmeticError):
    """A non-finite value appeared in a field."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConvergenceError(InvSpecError, RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IndefiniteOperatorError(ConvergenceError):
    """CG met a non-positive curvature direction."""


class PositivityError(InvSpecError, RuntimeError):
    """A principal eigenvector or logistic solution is not strictly positive."""


class NoPositiveSolution(InvSpecError, ValueError):
    """The logistic problem has only the zero solution (lambda <= lambda1(q0))."""

    def __init__(self, message, lam=None, lambda1=None):
        super().__init__(message)
        self.lam = lam
        self.lambda1 = lambda1
