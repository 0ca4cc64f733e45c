"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]


class NumericalFailure(RuntimeError):
    """Norm drift, boundary leakage or non-finite amplitudes (CLI exit code 3)."""
