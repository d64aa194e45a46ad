"""Exception hierarchy shared by all conekit modules."""


class ConekitError(Exception):
    """Base class for all conekit errors."""


class ValidationError(ConekitError, ValueError):
    """Input violates a documented precondition or invariant."""


class DomainError(ValidationError):
    """A function was evaluated outside its domain of definition."""


class UnsupportedError(ConekitError, NotImplementedError):
    """The requested combination of options is outside the supported scope."""


class PoleProximityError(ValidationError):
    """Evaluation point lies too close to a pole of the conormal inverse."""

    def __init__(self, message, pole):
        super().__init__(message)
        self.pole = pole


class StepError(ConekitError, RuntimeError):
    """A time step produced a non-finite state or a failed solve."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
