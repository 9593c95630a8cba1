"""Errors raised by experiment scenarios and reports."""

from src.activforms.utils.errors import ActivFormsError


class ExperimentError(ActivFormsError):
    pass


class EmptyDirectory(ExperimentError):
    """No completed experiment under the given directory."""


class ScenarioError(ExperimentError):
    """A scenario failed; the message names the scenario and cycle."""
