"""Exception hierarchy shared by all modules."""


class DrivenSpinsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DrivenSpinsError, ValueError):
    """Invalid parameters, configuration keys or integrator settings."""


class NumericalError(DrivenSpinsError, ArithmeticError):
    """A numerical procedure hit a pole, a singularity or diverged."""


class PoleError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class ThresholdError(NumericalError):
    """Parametric threshold reached in the driven spiral mode."""

    def __init__(self, message, critical_coupling):
        super().__init__(message)
        self.critical_coupling = critical_coupling


class ConvergenceError(NumericalError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class BranchAmbiguityError(NumericalError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class DivergenceError(NumericalError):
    def __init__(self, message, last_finite_time=None):
        super().__init__(message)
        self.last_finite_time = last_finite_time


class InsufficientDataError(NumericalError):
    pass


class SettleError(NumericalError):
    pass
