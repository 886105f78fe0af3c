"""Exception types shared across the package."""


class GateError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GateError):
    """Invalid data: malformed files, bad labels, degenerate vectors."""


class ConfigError(GateError):
    """Invalid or inconsistent configuration."""


class BackendError(GateError):
    """A backend call failed (transport error, timeout, or error response).

    ``fallback_label`` carries the classifier's top-1 prediction when the
    failure happened during escalation, so the caller can degrade per policy.
    """

    def __init__(self, message, code="backend_error", fallback_label=None):
        super().__init__(message)
        self.code = code
        self.fallback_label = fallback_label
