"""Errors raised by the statistical model checker."""

from src.activforms.utils.errors import ActivFormsError


class SMCError(ActivFormsError):
    pass


class DomainError(SMCError):
    """An accuracy parameter lies outside the open interval (0, 1)."""


class NonTerminatingRun(SMCError):
    """A run exceeded its step budget before reaching the time bound."""


class Cancelled(SMCError):
    """The query was cancelled through its cancellation token."""


class InsufficientSamples(SMCError):
    pass
