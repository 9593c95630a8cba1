#!/usr/bin/env python
"""
Property checking over an explored state graph.

Supported queries: A[] phi, E<> phi, phi --> psi and A[] no deadlock.
Violations carry a shortest witness trace from the initial state; leads-to
violations end in a lasso (a cycle avoiding psi) or a maximal path.

USAGE EXAMPLES:
    graph = explore_states(network)
    result = check_property(graph, parse_query('E<> Planner.UseFailSafeStrategy'))
    print(result.verdict, result.states)
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple, Union

import networkx as nx

from src.activforms.checker.errors import CheckerError, IncompleteExploration
from src.activforms.checker.explorer import StateGraph, explore_states
from src.activforms.engine.engine import EngineInstance, ExecutionConfig
from src.activforms.model.network import (
    DeadlockFreedomQuery, InvariantQuery, LeadsToQuery, ModelNetwork, ReachabilityQuery,
)
from src.activforms.model.parser import parse_query

logger = logging.getLogger(__name__)

HOLDS, VIOLATED, INCOMPLETE = 'holds', 'violated', 'incomplete'


@dataclass(frozen=True)
class TraceStep:
    label: str
    locations: Dict[str, str]
    node: int
    key: tuple = ()


@dataclass
class CheckResult:
    query: str
    verdict: str
    states: int
    millis: float = 0.0
    trace: List[TraceStep] = field(default_factory=list)
    # index into trace where the lasso's cycle starts, if any
    loop_start: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def format_trace(self) -> str:
        lines = []
        for i, step in enumerate(self.trace):
            marker = '  <- loop start' if self.loop_start == i else ''
            where = ', '.join(f"{p}.{l}" for p, l in step.locations.items())
            lines.append(f"  [{i}] {step.label}: ({where}){marker}")
        return '\n'.join(lines)


def _predicate(graph: StateGraph, expr) -> Callable[[int], bool]:
    fn = graph.compiled.compile_condition(expr)
    cache: Dict[int, bool] = {}

    def holds(node: int) -> bool:
        if node not in cache:
            cache[node] = bool(fn(graph.stores[node], None))
        return cache[node]
    return holds


def _trace(graph: StateGraph, path: List[int]) -> List[TraceStep]:
    key = graph.compiled.state_key
    steps = [TraceStep('initial', graph.locations(path[0]), path[0], key(graph.stores[path[0]]))]
    for source, target in zip(path, path[1:]):
        steps.append(TraceStep(graph.label(source, target), graph.locations(target), target,
                               key(graph.stores[target])))
    return steps


def check_property(graph: StateGraph, query, text: str = '') -> CheckResult:
    """
    Decide one query on a complete state graph.

    Args:
        graph: Result of explore_states
        query: Parsed query or its text
        text: Display text (defaults to the query text)

    Returns:
        CheckResult with verdict holds, violated or incomplete
    """
    if isinstance(query, str):
        text = text or query
        query = parse_query(query)
    if not graph.complete:
        return CheckResult(text, INCOMPLETE, graph.states, graph.millis)
    if isinstance(query, InvariantQuery):
        result = _check_invariant(graph, query)
    elif isinstance(query, ReachabilityQuery):
        result = _check_reachability(graph, query)
    elif isinstance(query, LeadsToQuery):
        result = _check_leads_to(graph, query)
    elif isinstance(query, DeadlockFreedomQuery):
        result = _check_deadlock(graph)
    else:
        raise CheckerError(f"The checker does not decide {type(query).__name__} queries")
    result.query = text
    result.millis = graph.millis
    return result


def _check_invariant(graph: StateGraph, query: InvariantQuery) -> CheckResult:
    holds = _predicate(graph, query.expr)
    for node in range(graph.states):
        if not holds(node):
            return CheckResult('', VIOLATED, graph.states, trace=_trace(graph, graph.path_to(node)))
    return CheckResult('', HOLDS, graph.states)


def _check_reachability(graph: StateGraph, query: ReachabilityQuery) -> CheckResult:
    holds = _predicate(graph, query.expr)
    for node in range(graph.states):
        if holds(node):
            return CheckResult('', HOLDS, graph.states, trace=_trace(graph, graph.path_to(node)))
    return CheckResult('', VIOLATED, graph.states)


def _check_deadlock(graph: StateGraph) -> CheckResult:
    for node in range(graph.states):
        if graph.graph.out_degree(node) == 0:
            return CheckResult('', VIOLATED, graph.states, trace=_trace(graph, graph.path_to(node)))
    return CheckResult('', HOLDS, graph.states)


def _check_leads_to(graph: StateGraph, query: LeadsToQuery) -> CheckResult:
    premise = _predicate(graph, query.premise)
    conclusion = _predicate(graph, query.conclusion)
    avoiding = [n for n in range(graph.states) if not conclusion(n)]
    subgraph = graph.graph.subgraph(avoiding)

    # a psi-avoiding path is bad if it ends in a deadlock or loops forever
    bad: Dict[int, Set[int]] = {n: set() for n in avoiding if graph.graph.out_degree(n) == 0}
    for component in nx.strongly_connected_components(subgraph):
        if len(component) > 1 or any(subgraph.has_edge(n, n) for n in component):
            for node in component:
                bad[node] = component
    if not bad:
        return CheckResult('', HOLDS, graph.states)
    can_fail = set(bad)
    reverse = subgraph.reverse(copy=False)
    for node in bad:
        can_fail.update(nx.descendants(reverse, node))

    for node in range(graph.states):
        if node in can_fail and premise(node):
            path, loop_start = _lasso(graph, subgraph, node, bad)
            return CheckResult('', VIOLATED, graph.states, trace=_trace(graph, path),
                               loop_start=loop_start)
    return CheckResult('', HOLDS, graph.states)


def _lasso(graph: StateGraph, subgraph: nx.DiGraph, start: int,
           bad: Dict[int, Set[int]]) -> Tuple[List[int], Optional[int]]:
    """Path initial -> start -> bad node, closed into a cycle unless the bad node is a deadlock."""
    prefix = graph.path_to(start)
    paths = nx.single_source_shortest_path(subgraph, start)
    end = min((n for n in paths if n in bad), key=lambda n: (len(paths[n]), n))
    path = prefix + paths[end][1:]
    component = bad[end]
    if not component:
        return path, None
    if subgraph.has_edge(end, end):
        return path + [end], len(path) - 1
    inside = subgraph.subgraph(component)
    successor = next(n for n in inside.successors(end))
    loop = nx.shortest_path(inside, successor, end)
    return path + loop, len(path) - 1


def verify_query(network: ModelNetwork, query: Union[str, object], max_states: int = 1_000_000,
                 graph: Optional[StateGraph] = None) -> CheckResult:
    """Explore (unless a graph is given) and check one query; overflow becomes an incomplete verdict."""
    text = query if isinstance(query, str) else ''
    if graph is None:
        try:
            graph = explore_states(network, max_states=max_states)
        except IncompleteExploration as e:
            return CheckResult(text, INCOMPLETE, e.states_explored)
    return check_property(graph, query, text)


def replay_counterexample(network: ModelNetwork, result: CheckResult) -> EngineInstance:
    """
    Re-execute a violation trace on the execution engine.

    Each step moves the engine to the successor whose state equals the next
    trace state, with clocks compared at the checker's caps.

    Returns:
        Engine positioned at the trace's final state

    Raises:
        CheckerError: a step cannot be reproduced
    """
    engine = EngineInstance(network, ExecutionConfig(keep_trace=False))
    compiled = engine.compiled
    caps = compiled.clock_caps()

    def capped_key(store):
        capped = compiled.copy_store(store)
        for slot in compiled.layout.clocks:
            capped.values[slot] = min(capped.values[slot], caps.get(slot, 0))
        return compiled.state_key(capped)

    if result.trace and capped_key(engine.store) != result.trace[0].key:
        raise CheckerError("Counterexample does not start in the initial state")
    for index, step in enumerate(result.trace[1:], start=1):
        matches = [(label, s) for label, s in engine.successors() if capped_key(s) == step.key]
        if not matches:
            raise CheckerError(f"Counterexample step {index} ({step.label}) cannot be replayed")
        preferred = [m for m in matches if m[0] == step.label]
        engine.goto((preferred or matches)[0][1])
    return engine
