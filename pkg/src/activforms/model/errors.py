"""Errors raised while parsing, checking and evaluating models."""

from typing import Iterable, List, Optional

from src.activforms.utils.errors import ActivFormsError


class ModelError(ActivFormsError):
    """Base class for model-level errors."""


class ModelSyntaxError(ModelError):
    """Syntax error with position and the tokens the parser would have accepted."""

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 expected: Optional[Iterable[str]] = None, source: str = '<model>'):
        self.line = line
        self.column = column
        self.expected = sorted(expected or [])
        self.source = source
        self.errors: List['ModelSyntaxError'] = [self]
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ''
        super().__init__(f"{source}:{line}:{column}: {message}{detail}")


class DuplicateDeclaration(ModelError):
    pass


class UnknownChannel(ModelError):
    pass


class UnboundParameter(ModelError):
    """A parameter slot was left without a value."""

    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(missing)
        super().__init__(f"Unbound parameter slot(s): {', '.join(self.missing)}")


class NotSupported(ModelError):
    pass


class EvaluationError(ModelError):
    """Raised while executing expressions; halts the enclosing transition attempt."""


class DivisionByZero(EvaluationError):
    pass


class ArrayIndexOutOfBounds(EvaluationError):
    pass


class RangeViolation(EvaluationError):
    pass
