#!/usr/bin/env python
"""
Stochastic simulation of networks of timed automata.

Time is continuous. At every step each non-passive process proposes a
delay: uniform over the window in which one of its edges can fire when
its location has an upper clock bound, exponential at the location's rate
(default 1) otherwise. The smallest proposal wins, time advances, and one
enabled transition is picked uniformly, preferring those that involve the
winning process. Branch points are resolved by their weights.

USAGE EXAMPLES:
    simulator = StochasticSimulator(compiled)
    reached = simulator.run_until(predicate, bound=1.0, rng=np.random.default_rng(7))
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.activforms.engine.semantics import CompiledNetwork, CompiledProcess, Transition, conjuncts
from src.activforms.model.evaluator import Store
from src.activforms.model.network import Binary, Name
from src.activforms.model.types import ClockType
from src.activforms.smc.errors import NonTerminatingRun

logger = logging.getLogger(__name__)

DEFAULT_RATE = 1.0
SNAP_TOLERANCE = 1e-9
# delays under a strict bound x < c stop this far short of c
STRICT_MARGIN = 1e-6


@dataclass
class RunResult:
    store: Store
    steps: int
    reached: bool = False
    deadlocked: bool = False


class StochasticSimulator:
    """
    Runs a compiled network under stochastic semantics.

    Args:
        compiled: Compiled network (branch weights and random() are honoured)
        max_run_steps: Step budget per run; exceeding it raises NonTerminatingRun
    """

    def __init__(self, compiled: CompiledNetwork, max_run_steps: int = 100_000):
        self.compiled = compiled
        self.max_run_steps = max_run_steps
        self.logger = logging.getLogger(__name__)
        # (process, location) -> per-edge list of lower clock bounds
        self._lower_bounds = self._collect_lower_bounds()

    def _collect_lower_bounds(self) -> Dict[Tuple[int, int], List[List[Tuple[int, Callable]]]]:
        bounds = {}
        for process in self.compiled.processes:
            automaton = self.compiled.network.automaton(process.automaton)
            for location_index, edges in enumerate(process.edges_from):
                per_edge = []
                for edge in edges:
                    guard = automaton.edges[edge.index].guard
                    per_edge.append(self._guard_lower_bounds(guard, process))
                bounds[(process.index, location_index)] = per_edge
        return bounds

    def _guard_lower_bounds(self, guard, process: CompiledProcess) -> List[Tuple[int, Callable]]:
        found = []
        for conjunct in conjuncts(guard):
            if not isinstance(conjunct, Binary):
                continue
            left, right, op = conjunct.left, conjunct.right, conjunct.op
            if op in ('<', '<='):
                left, right, op = right, left, '>' if op == '<' else '>='
            if op not in ('>', '>=', '==') or not isinstance(left, Name):
                continue
            symbol = process.scope.lookup(left.name)
            if symbol is None or symbol.kind != 'var' or not isinstance(symbol.type, ClockType):
                continue
            bound, _ = self.compiled.compiler.expression(right, process.scope)
            found.append((symbol.slot, bound))
        return found

    # ---------------------------------------------------------------- delays

    def _window(self, store: Store, process: CompiledProcess) -> Tuple[float, float]:
        """Earliest and latest delay after which ``process`` may act."""
        location_index = store.locations[process.index]
        upper = self._room(store, process.locations[location_index])
        lower = math.inf
        for edge_bounds in self._lower_bounds[(process.index, location_index)]:
            wait = 0.0
            for slot, bound in edge_bounds:
                wait = max(wait, float(bound(store, None)) - store.values[slot])
            lower = min(lower, wait)
        return max(0.0, lower), upper

    def _propose(self, store: Store, process: CompiledProcess, rng) -> float:
        location = self.compiled.active(store, process)
        if not process.edges_from[store.locations[process.index]]:
            return math.inf
        lower, upper = self._window(store, process)
        if math.isinf(lower):
            lower = 0.0
        if not math.isinf(upper):
            if lower >= upper:
                return upper
            return float(rng.uniform(lower, upper))
        rate = float(location.rate(store, None)) if location.rate is not None else DEFAULT_RATE
        if rate <= 0:
            return math.inf
        return lower + float(rng.exponential(1.0 / rate))

    @staticmethod
    def _room(store: Store, location) -> float:
        """Longest delay the invariant of ``location`` allows; 0 when none is left."""
        room = math.inf
        for slot, bound, strict in location.upper_bounds:
            limit = float(bound(store, None)) - store.values[slot]
            room = min(room, limit - STRICT_MARGIN if strict else limit)
        return room if room > SNAP_TOLERANCE else 0.0

    def _invariant_cap(self, store: Store) -> float:
        return min((self._room(store, self.compiled.active(store, p)) for p in self.compiled.processes),
                   default=math.inf)

    @staticmethod
    def _snap(store: Store, clocks: List[int]) -> None:
        for slot in clocks:
            value = store.values[slot]
            nearest = round(value)
            if abs(value - nearest) < SNAP_TOLERANCE:
                store.values[slot] = nearest

    # ---------------------------------------------------------------- actions

    def _fire(self, store: Store, transitions: List[Transition], rng) -> Optional[Store]:
        """Fire one uniformly chosen transition; None when none can fire."""
        candidates = list(transitions)
        while candidates:
            transition = candidates.pop(int(rng.integers(len(candidates))))
            outcomes = self.compiled.apply(store, transition.parts)
            if not outcomes:
                continue
            if len(outcomes) == 1:
                return outcomes[0][1]
            weights = np.array([p for p, _ in outcomes], dtype=float)
            choice = int(rng.choice(len(outcomes), p=weights / weights.sum()))
            return outcomes[choice][1]
        return None

    def step(self, store: Store, rng, horizon: float) -> Tuple[Optional[Store], bool]:
        """
        One race step.

        Returns:
            (successor, timed_out): successor is None on deadlock; timed_out
            is True when the winning delay would cross ``horizon``.
        """
        compiled = self.compiled
        transitions = compiled.enumerate_transitions(store)
        if compiled.time_frozen(store) or compiled.urgent_sync_enabled(store):
            return self._fire(store, transitions, rng), False

        proposals = []
        for process in compiled.processes:
            if process.passive:
                continue
            proposals.append((self._propose(store, process, rng), process.index))
        delay, winner = min(proposals, default=(math.inf, None))
        delay = min(delay, self._invariant_cap(store))
        if store.time + delay > horizon:
            return None, True
        if math.isinf(delay):
            return None, False
        current = store
        if delay > 0:
            current = compiled.delay(store, delay)
            self._snap(current, compiled.layout.clocks)
            transitions = compiled.enumerate_transitions(current)
        preferred = [t for t in transitions if any(e.process == winner for e in t.parts)]
        successor = self._fire(current, preferred or transitions, rng)
        if successor is None and delay > 0:
            return current, False
        return successor, False

    # ---------------------------------------------------------------- runs

    def run_until(self, predicate: Callable, bound: float, rng) -> RunResult:
        """Simulate until ``predicate`` holds, time exceeds ``bound`` or the run deadlocks."""
        return self._run(bound, rng, predicate)

    def run(self, bound: float, rng) -> RunResult:
        """Simulate up to time ``bound`` and return the final state."""
        return self._run(bound, rng, None)

    def _run(self, bound: float, rng, predicate: Optional[Callable]) -> RunResult:
        store = self.compiled.initial_store(rng=rng)
        if predicate is not None and predicate(store, None):
            return RunResult(store, 0, reached=True)
        for steps in range(1, self.max_run_steps + 1):
            successor, timed_out = self.step(store, rng, bound)
            if successor is None:
                return RunResult(store, steps, deadlocked=not timed_out)
            store = successor
            if predicate is not None and predicate(store, None):
                return RunResult(store, steps, reached=True)
        raise NonTerminatingRun(f"Run exceeded {self.max_run_steps} steps before time {bound}")
