"""Root of the ActivFORMS exception hierarchy."""


class ActivFormsError(Exception):
    """Base class for all errors raised by the runtime."""


class ConfigError(ActivFormsError):
    """Invalid or missing configuration."""
