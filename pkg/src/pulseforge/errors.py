"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates an operation's precondition."""


class DegenerateInput(ValueError):
    """Input is well-formed but numerically degenerate (zero power, zero variance)."""
