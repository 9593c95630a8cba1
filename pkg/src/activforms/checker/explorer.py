#!/usr/bin/env python
"""
Explicit-state exploration under digital-clock semantics.

Clocks advance in integer ticks and are clamped one above the largest
constant they are compared against, so the reachable graph is finite.

USAGE EXAMPLES:
    network = merge_networks(load_model('models/deltaiot_mape.ta'), *stubs)
    graph = explore_states(network, max_states=1_000_000)
    print(graph.summary())
"""

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import networkx as nx
from tqdm import tqdm

from src.activforms.checker.errors import IncompleteExploration
from src.activforms.engine.semantics import CompiledNetwork
from src.activforms.model.evaluator import Store
from src.activforms.model.network import ModelNetwork

logger = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 1_000_000
DELAY = 'delay'


@dataclass
class StateGraph:
    """
    Reachable state graph.

    Node ids are BFS discovery indices; node 0 is the initial state.
    Edge attribute ``label`` names the transition (``delay`` for a tick).
    """
    compiled: CompiledNetwork
    graph: nx.DiGraph
    stores: List[Store]
    caps: Dict[int, int]
    complete: bool = True
    millis: float = 0.0
    keys: Dict[tuple, int] = field(default_factory=dict, repr=False)

    initial = 0

    @property
    def states(self) -> int:
        return len(self.stores)

    @property
    def transitions(self) -> int:
        return self.graph.number_of_edges()

    def successors(self, node: int) -> List[int]:
        return list(self.graph.successors(node))

    def label(self, source: int, target: int) -> str:
        return self.graph.edges[source, target]['label']

    def locations(self, node: int) -> Dict[str, str]:
        return self.compiled.location_names(self.stores[node])

    def path_to(self, node: int) -> List[int]:
        return nx.shortest_path(self.graph, self.initial, node)

    def summary(self) -> str:
        status = 'complete' if self.complete else 'incomplete'
        return f"{self.states} states, {self.transitions} transitions ({status}, {self.millis:.0f} ms)"


def _compile(network: Union[ModelNetwork, CompiledNetwork]) -> CompiledNetwork:
    if isinstance(network, CompiledNetwork):
        return network
    return CompiledNetwork(network, allow_random=False)


def explore_states(network: Union[ModelNetwork, CompiledNetwork],
                   max_states: int = DEFAULT_MAX_STATES,
                   caps: Optional[Dict[int, int]] = None,
                   extra_cap: int = 0,
                   progress: bool = False) -> StateGraph:
    """
    Breadth-first exploration of the reachable states.

    Args:
        network: Closed network (the model composed with its stubs)
        max_states: Exploration bound
        caps: Per-clock caps (defaults to largest compared constant + 1)
        extra_cap: Added to every cap; verdicts must not depend on it
        progress: Show a progress bar

    Returns:
        StateGraph

    Raises:
        IncompleteExploration: more than ``max_states`` states; carries the partial graph
    """
    started = time.perf_counter()
    compiled = _compile(network)
    if caps is None:
        caps = compiled.clock_caps()
    caps = {slot: cap + extra_cap for slot, cap in caps.items()}

    initial = compiled.initial_store()
    for slot in compiled.layout.clocks:
        initial.values[slot] = min(initial.values[slot], caps.get(slot, 0))
    graph = StateGraph(compiled, nx.DiGraph(), [], caps)
    _add_state(graph, initial)

    queue = deque([0])
    bar = tqdm(total=None, desc="Exploring", unit="states", disable=not progress)
    while queue:
        node = queue.popleft()
        store = graph.stores[node]
        for label, successor in _successors(compiled, store, caps):
            key = compiled.state_key(successor)
            target = graph.keys.get(key)
            if target is None:
                if graph.states >= max_states:
                    bar.close()
                    graph.complete = False
                    graph.millis = (time.perf_counter() - started) * 1000
                    raise IncompleteExploration(graph.states, graph)
                target = _add_state(graph, successor, key)
                queue.append(target)
                bar.update(1)
            if not graph.graph.has_edge(node, target):
                graph.graph.add_edge(node, target, label=label)
    bar.close()
    graph.millis = (time.perf_counter() - started) * 1000
    logger.debug(f"Explored {network.source if isinstance(network, ModelNetwork) else 'network'}: "
                 f"{graph.summary()}")
    return graph


def _add_state(graph: StateGraph, store: Store, key: Optional[tuple] = None) -> int:
    node = graph.states
    store.time = 0
    graph.stores.append(store)
    graph.keys[key if key is not None else graph.compiled.state_key(store)] = node
    graph.graph.add_node(node)
    return node


def _successors(compiled: CompiledNetwork, store: Store, caps: Dict[int, int]):
    for transition in compiled.enumerate_transitions(store):
        label = transition.label(compiled)
        for _, successor in compiled.apply(store, transition.parts):
            yield label, successor
    if compiled.can_delay(store):
        yield DELAY, compiled.delay(store, 1, caps)
