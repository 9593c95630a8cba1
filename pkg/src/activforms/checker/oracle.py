#!/usr/bin/env python
"""
Naive recursive checker used as an independent cross-check.

It does not share the explorer's graph: it walks successors on demand with
plain depth-first recursion and evaluates the CTL reading of each query
(AG, EF, AG(phi -> AF psi), AG EX true). Only suitable for small models.
"""

import logging
import sys
from typing import Callable, Dict, Set, Union

from src.activforms.checker.errors import CheckerError, IncompleteExploration
from src.activforms.checker.properties import HOLDS, VIOLATED
from src.activforms.engine.semantics import CompiledNetwork
from src.activforms.model.network import (
    DeadlockFreedomQuery, InvariantQuery, LeadsToQuery, ModelNetwork, ReachabilityQuery,
)
from src.activforms.model.parser import parse_query

logger = logging.getLogger(__name__)

ORACLE_MAX_STATES = 5_000


class NaiveChecker:
    """Depth-first evaluation over states discovered on demand."""

    def __init__(self, network: ModelNetwork, max_states: int = ORACLE_MAX_STATES):
        self.compiled = CompiledNetwork(network, allow_random=False)
        self.caps = self.compiled.clock_caps()
        self.max_states = max_states
        self.stores: Dict[tuple, object] = {}
        self.edges: Dict[tuple, list] = {}

    def _next(self, key: tuple) -> list:
        if key not in self.edges:
            store = self.stores[key]
            found = []
            for transition in self.compiled.enumerate_transitions(store):
                for _, successor in self.compiled.apply(store, transition.parts):
                    found.append(self._intern(successor))
            if self.compiled.can_delay(store):
                found.append(self._intern(self.compiled.delay(store, 1, self.caps)))
            self.edges[key] = found
        return self.edges[key]

    def _intern(self, store) -> tuple:
        key = self.compiled.state_key(store)
        if key not in self.stores:
            if len(self.stores) >= self.max_states:
                raise IncompleteExploration(len(self.stores))
            store.time = 0
            self.stores[key] = store
        return key

    def _reachable(self, start: tuple):
        seen: Set[tuple] = {start}
        stack = [start]
        while stack:
            key = stack.pop()
            yield key
            for successor in self._next(key):
                if successor not in seen:
                    seen.add(successor)
                    stack.append(successor)

    def _always_eventually(self, holds: Callable, start: tuple) -> bool:
        """AF psi: every maximal path from ``start`` reaches psi."""
        memo: Dict[tuple, bool] = {}
        on_stack: Set[tuple] = set()

        def af(key) -> bool:
            if holds(key):
                return True
            if key in memo:
                return memo[key]
            if key in on_stack:
                return False
            successors = self._next(key)
            if not successors:
                return False
            on_stack.add(key)
            result = all(af(s) for s in successors)
            on_stack.discard(key)
            memo[key] = result
            return result
        return af(start)

    def check(self, query) -> str:
        if isinstance(query, str):
            query = parse_query(query)
        initial = self.compiled.initial_store()
        for slot in self.compiled.layout.clocks:
            initial.values[slot] = min(initial.values[slot], self.caps.get(slot, 0))
        start = self._intern(initial)

        def predicate(expr) -> Callable[[tuple], bool]:
            fn = self.compiled.compile_condition(expr)
            return lambda key: bool(fn(self.stores[key], None))

        if isinstance(query, InvariantQuery):
            holds = predicate(query.expr)
            ok = all(holds(k) for k in self._reachable(start))
        elif isinstance(query, ReachabilityQuery):
            holds = predicate(query.expr)
            ok = any(holds(k) for k in self._reachable(start))
        elif isinstance(query, DeadlockFreedomQuery):
            ok = all(self._next(k) for k in self._reachable(start))
        elif isinstance(query, LeadsToQuery):
            premise, conclusion = predicate(query.premise), predicate(query.conclusion)
            ok = all(self._always_eventually(conclusion, k)
                     for k in self._reachable(start) if premise(k))
        else:
            raise CheckerError(f"The oracle does not decide {type(query).__name__} queries")
        return HOLDS if ok else VIOLATED


def naive_check(network: ModelNetwork, query: Union[str, object],
                max_states: int = ORACLE_MAX_STATES) -> str:
    """
    Verdict ('holds' or 'violated') from the recursive oracle.

    Raises:
        IncompleteExploration: the model has more than ``max_states`` states
    """
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * max_states + 1000))
    try:
        return NaiveChecker(network, max_states).check(query)
    finally:
        sys.setrecursionlimit(limit)
