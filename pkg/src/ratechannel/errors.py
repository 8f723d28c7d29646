"""Semantic exception hierarchy shared across the package."""


class RateChannelError(Exception):
    """Base error for this package."""


class ValidationError(RateChannelError, ValueError):
    """Inputs violate a documented contract (domain, shape, normalization)."""


class InfeasibleError(RateChannelError):
    """A feasibility set is empty (or a linear system has no solution)."""


class BudgetExceededError(RateChannelError):
    """An exact computation would exceed the configured work budget."""


class ConvergenceError(RateChannelError):
    """An iterative method failed to reach its convergence target."""
