"""Exception types raised across the package."""


class ShellMCError(Exception):
    """Base class for all package errors."""


class DomainError(ShellMCError, ValueError):
    pass


class ConfigError(ShellMCError, ValueError):
    pass


class NumericalError(ShellMCError, ArithmeticError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateImportance(NumericalError):
    """Importance vanishes in a cell that biased particles can reach."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class QuadratureNonConvergence(NumericalError):
    pass


class InsufficientSamples(ShellMCError, ValueError):
    pass


class EventLoopStall(ShellMCError, RuntimeError):
    pass


class SingularPoint(ShellMCError, ValueError):
    pass


class NegativePhiWarning(RuntimeWarning):
    pass
