"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent physical / run configuration."""

    def __init__(self, message, field=None):
        self.field = field
        self.message = message
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InstabilityError(RuntimeError):
    """The configuration has no damped steady state (gamma_c + gamma_m <= 0)."""


class FitError(RuntimeError):
    """A least-squares fit did not converge."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NotApplicableError(RuntimeError):
    """An estimator's precondition is not met by the data (e.g. no oscillation)."""
