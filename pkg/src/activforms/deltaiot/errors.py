"""Errors raised by the DeltaIoT managed-system simulator."""

from src.activforms.utils.errors import ActivFormsError


class DeltaIoTError(ActivFormsError):
    pass


class UnknownMote(DeltaIoTError):
    pass


class UnknownPeriod(DeltaIoTError):
    pass


class SettingsRangeError(DeltaIoTError):
    """A power or distribution setting outside its allowed values."""


class CycleDetected(DeltaIoTError):
    """The routing graph is not acyclic."""
