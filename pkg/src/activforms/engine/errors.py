"""Errors raised by the model execution engine."""

from src.activforms.utils.errors import ActivFormsError


class EngineError(ActivFormsError):
    pass


class LoadError(EngineError):
    """The network cannot be turned into an executable instance."""


class InvariantViolation(EngineError):
    """No action is enabled and time cannot pass; the engine halts."""

    def __init__(self, message: str, locations=None):
        self.locations = locations or {}
        super().__init__(message)


class SchemaMismatch(EngineError):
    pass


class TypeMismatch(EngineError):
    """Same-name variables have different types in the old and new model."""

    def __init__(self, names):
        self.names = list(names)
        super().__init__(f"Type mismatch for variable(s): {', '.join(self.names)}")
