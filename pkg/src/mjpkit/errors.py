"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy result.

    Examples: ODE integration blowing up to non-finite values, a truncated
    state space leaking more probability mass than tolerated, or a
    simulation exceeding its event budget.
    """


class InvariantViolation(AssertionError):
    """An internal consistency check failed (indicates a bug, not bad input)."""
