"""Errors raised by the feedback loop."""

from src.activforms.utils.errors import ActivFormsError


class MapekError(ActivFormsError):
    pass


class EmptyTopology(MapekError):
    """The topology has no links to adapt."""


class TopologyMismatch(MapekError):
    """Two configurations do not describe the same network."""
