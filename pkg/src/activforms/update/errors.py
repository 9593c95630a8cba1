"""Errors raised by the online update manager."""

from src.activforms.utils.errors import ActivFormsError


class UpdateError(ActivFormsError):
    pass


class MissingVerificationReport(UpdateError):
    """An update without a passing verification report, or with a report that was altered."""


class UpdateParseError(UpdateError):
    """The bundle or the model it carries cannot be read."""
