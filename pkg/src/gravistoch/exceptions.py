class GravistochError(Exception):
    """Base class for errors raised by gravistoch."""


class DomainError(GravistochError, ValueError):
    """An argument lies outside the domain of the model (e.g. ``beta >= 2``)."""


class NumericalGuardError(GravistochError, ValueError):
    """A numerical safety guard rejected the request (step size, grid size)."""


class InsufficientDataError(GravistochError, ValueError):
    """Too few samples, batches or modes for a requested estimate."""


class ConfigError(GravistochError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
