"""Errors raised by the offline model checker."""

from src.activforms.utils.errors import ActivFormsError


class CheckerError(ActivFormsError):
    pass


class IncompleteExploration(CheckerError):
    """The state space exceeded the configured maximum."""

    def __init__(self, states_explored: int, graph=None):
        self.states_explored = states_explored
        self.graph = graph
        super().__init__(f"Exploration stopped after {states_explored} states (maxStates reached)")


class InstantiationError(CheckerError):
    """A property placeholder resolves to nothing in the model."""
