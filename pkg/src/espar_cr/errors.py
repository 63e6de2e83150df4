"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(RuntimeError):
    """A numerical routine (quadrature, series, root finding) failed."""


class InfeasibleStepError(NumericalError):
    """A threshold recursion step produced a CDF target outside ``(F(mu_k), 1]``."""

    def __init__(self, message, target=None, lower=None):
        super().__init__(message)
        self.target = target
        self.lower = lower


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its budget.

    The best iterate found so far is kept on ``best`` (usually a
    ``(policy, report)`` tuple) so callers can still inspect it.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``keys`` lists the offending configuration keys.
    """

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)
