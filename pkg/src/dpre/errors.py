"""Exception types shared across the package."""


class DomainError(ValueError):
    """An inverse temperature lies outside the law's finite-cumulant domain."""


class ResourceBudgetError(RuntimeError):
    """A kernel/DP computation would exceed its configured memory or work budget."""

    def __init__(self, message: str, feasible_horizon: int | None = None):
        super().__init__(message)
        self.feasible_horizon = feasible_horizon


class DiagnosticError(RuntimeError):
    """An estimate cannot be formed (degenerate regression, missing guard)."""
