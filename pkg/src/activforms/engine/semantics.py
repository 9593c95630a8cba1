#!/usr/bin/env python
"""
Executable semantics of a network of timed automata.

CompiledNetwork turns a parsed ModelNetwork into compiled locations, edges
and channels over a flat variable store. It enumerates enabled transitions,
applies them (resolving branch points), and advances clocks. The execution
engine, the explicit-state checker and the stochastic simulator all run on
top of it.
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from src.activforms.engine.errors import LoadError
from src.activforms.model.errors import ModelError, UnboundParameter
from src.activforms.model.evaluator import (
    ExpressionCompiler, ProcessInfo, Scope, Store, Symbol,
)
from src.activforms.model.network import (
    Automaton, Binary, Function, ModelNetwork, Name,
)
from src.activforms.model.types import (
    ArrayType, ChanType, ClockType, clone, freeze,
)

logger = logging.getLogger(__name__)

SEND, RECEIVE = '!', '?'


@dataclass
class CompiledLocation:
    name: str
    kind: str
    invariant: Optional[Callable] = None
    # conjuncts "clock <= bound" / "clock < bound": (clock slot, bound fn, strict)
    upper_bounds: List[Tuple[int, Callable, bool]] = field(default_factory=list)
    rate: Optional[Callable] = None
    branchpoint: bool = False


@dataclass
class CompiledEdge:
    process: int
    index: int
    source: int
    target: int
    guard: Optional[Callable]
    channel: Optional[Callable]        # store -> channel id
    direction: Optional[str]
    updates: List[Callable]
    weight: Optional[Callable]
    label: str

    def enabled(self, store: Store) -> bool:
        return self.guard is None or bool(self.guard(store, None))


@dataclass
class CompiledProcess:
    name: str
    index: int
    automaton: str
    locations: List[CompiledLocation]
    location_index: Dict[str, int]
    initial: int
    edges_from: List[List[CompiledEdge]]
    scope: Scope
    passive: bool = False


@dataclass(frozen=True)
class Transition:
    """One action step: the participating (process, edge) pairs, sender first."""
    parts: Tuple[CompiledEdge, ...]
    channel: Optional[int] = None

    @property
    def kind(self) -> str:
        if self.channel is None:
            return 'internal'
        return 'sync'

    def label(self, network: 'CompiledNetwork') -> str:
        text = '; '.join(e.label for e in self.parts)
        if self.channel is not None:
            text = f"{network.channels[self.channel].name}: {text}"
        return text


class CompiledNetwork:
    """
    Compiled, executable form of a closed network.

    Args:
        network: Parsed network with all parameter slots bound
        allow_random: Permit random()/random_normal() (stochastic execution only)

    Raises:
        UnboundParameter, LoadError, ModelError
    """

    def __init__(self, network: ModelNetwork, allow_random: bool = True):
        self.network = network
        self.logger = logging.getLogger(__name__)
        bindings = network.binding_map()
        missing = [s for s in network.slots() if s not in bindings]
        if missing:
            raise UnboundParameter(missing)
        self.compiler = ExpressionCompiler(bindings=bindings, allow_random=allow_random)
        self.layout = self.compiler.layout
        self.global_scope = Scope()
        self._declare_all(network.declarations, self.global_scope, '')
        self.processes: List[CompiledProcess] = []
        for index, name in enumerate(network.process_names()):
            self.processes.append(self._compile_process(index, name))
        self.channels = self.layout.channels
        self.query_scope = self._build_query_scope()
        self._mark_passive()
        self.stats = {'processes': len(self.processes), 'variables': len(self.layout.names),
                      'channels': len(self.channels),
                      'edges': sum(len(es) for p in self.processes for es in p.edges_from)}
        self.logger.debug(f"Compiled {network.source}: {self.stats}")

    # ---------------------------------------------------------------- compilation

    def _declare_all(self, declarations, scope: Scope, qualifier: str) -> None:
        functions = []
        for decl in declarations:
            symbol = self.compiler.declare(decl, scope, qualifier)
            if isinstance(decl, Function):
                functions.append(symbol)
        for symbol in functions:
            self.compiler.compile_function_body(symbol, scope)

    def _template_for(self, name: str) -> Tuple[Automaton, tuple]:
        automaton = self.network.automaton(name)
        if automaton is not None and not automaton.params:
            return automaton, ()
        for instance in self.network.instances:
            if instance.name == name:
                template = self.network.automaton(instance.template)
                if template is None:
                    raise LoadError(f"Instance {name} refers to unknown template {instance.template}")
                return template, instance.args
        raise LoadError(f"Unknown process '{name}'")

    def _compile_process(self, index: int, name: str) -> CompiledProcess:
        automaton, args = self._template_for(name)
        if len(args) != len(automaton.params):
            raise LoadError(f"{name}: {automaton.name} takes {len(automaton.params)} argument(s)")
        scope = Scope(self.global_scope, owner=name)
        for param, arg in zip(automaton.params, args):
            self._bind_param(scope, param, arg)
        self._declare_all(automaton.declarations, scope, f"{name}.")

        if automaton.initial is None:
            raise LoadError(f"Automaton {automaton.name} has no initial location")
        nodes: List[CompiledLocation] = []
        for location in automaton.locations:
            nodes.append(CompiledLocation(
                name=location.name, kind=location.kind,
                invariant=self.compiler.condition(location.invariant, scope)
                if location.invariant is not None else None,
                upper_bounds=self._upper_bounds(location.invariant, scope),
                rate=self.compiler.expression(location.rate, scope)[0]
                if location.rate is not None else None))
        for branchpoint in automaton.branchpoints:
            nodes.append(CompiledLocation(name=branchpoint, kind='committed', branchpoint=True))
        location_index = {loc.name: i for i, loc in enumerate(nodes)}

        edges_from: List[List[CompiledEdge]] = [[] for _ in nodes]
        for edge_index, edge in enumerate(automaton.edges):
            if edge.source not in location_index or edge.target not in location_index:
                raise LoadError(f"{name}: edge {edge.source} -> {edge.target} has an unknown endpoint")
            channel, direction = None, None
            if edge.sync is not None:
                channel = self._channel_fn(edge.sync, scope, name)
                direction = edge.sync.direction
            sync_text = f" {edge.sync.channel}{edge.sync.direction}" if edge.sync else ''
            compiled = CompiledEdge(
                process=index, index=edge_index,
                source=location_index[edge.source], target=location_index[edge.target],
                guard=self.compiler.condition(edge.guard, scope) if edge.guard is not None else None,
                channel=channel, direction=direction,
                updates=[self.compiler.expression(u, scope)[0] for u in edge.updates],
                weight=self.compiler.expression(edge.weight, scope)[0] if edge.weight is not None else None,
                label=f"{name}.{edge.source}->{edge.target}{sync_text}")
            edges_from[compiled.source].append(compiled)
        return CompiledProcess(name=name, index=index, automaton=automaton.name, locations=nodes,
                               location_index=location_index,
                               initial=location_index[automaton.initial],
                               edges_from=edges_from, scope=scope)

    def _bind_param(self, scope: Scope, param, arg) -> None:
        if param.by_ref:
            if not isinstance(arg, Name) or self.global_scope.lookup(arg.name) is None:
                raise LoadError(f"Reference parameter {param.name} needs a global variable argument")
            target = self.global_scope.lookup(arg.name)
            scope.define(Symbol(param.name, target.kind, target.type, slot=target.slot, value=target.value))
            return
        param_type = self.compiler.resolve(param.type, param.dims, scope)
        if isinstance(param_type, ChanType):
            channel = self.global_scope.lookup(arg.name) if isinstance(arg, Name) else None
            if channel is None or channel.kind != 'chan':
                raise LoadError(f"Channel parameter {param.name} needs a channel argument")
            scope.define(Symbol(param.name, 'chan', channel.type, value=channel.value))
            return
        value = self.compiler.constant(arg, self.global_scope)
        scope.define(Symbol(param.name, 'const', param_type, value=value))

    def _channel_fn(self, sync, scope: Scope, process: str) -> Callable:
        symbol = scope.lookup(sync.channel)
        if symbol is None or symbol.kind != 'chan':
            raise LoadError(f"{process}: '{sync.channel}' is not a channel")
        base = symbol.value
        if isinstance(symbol.type, ArrayType):
            if sync.index is None:
                raise LoadError(f"{process}: channel array '{sync.channel}' needs an index")
            index, _ = self.compiler.expression(sync.index, scope)
            size = symbol.type.size

            def channel_at(store):
                i = index(store, None)
                if not 0 <= i < size:
                    raise ModelError(f"Channel index {i} out of bounds for {sync.channel}")
                return base + i
            return channel_at
        return lambda store: base

    def _upper_bounds(self, invariant, scope: Scope) -> List[Tuple[int, Callable, bool]]:
        bounds = []
        for conjunct in conjuncts(invariant):
            if not isinstance(conjunct, Binary):
                continue
            left, right, op = conjunct.left, conjunct.right, conjunct.op
            if op in ('>', '>='):
                left, right, op = right, left, '<' if op == '>' else '<='
            if op not in ('<', '<=') or not isinstance(left, Name):
                continue
            symbol = scope.lookup(left.name)
            if symbol is None or symbol.kind != 'var' or not isinstance(symbol.type, ClockType):
                continue
            bound, _ = self.compiler.expression(right, scope)
            bounds.append((symbol.slot, bound, op == '<'))
        return bounds

    def _build_query_scope(self) -> Scope:
        scope = Scope(self.global_scope)
        for process in self.processes:
            locations = {loc.name: i for i, loc in enumerate(process.locations)}
            scope.define(Symbol(process.name, 'process',
                                value=ProcessInfo(process.name, process.index, locations, process.scope)))
        return scope

    def _mark_passive(self) -> None:
        """A process whose every edge waits on a receive never races for time."""
        for process in self.processes:
            edges = [e for es in process.edges_from for e in es]
            process.passive = bool(edges) and all(e.direction == RECEIVE for e in edges)

    def compile_condition(self, expr) -> Callable:
        """Compile a state predicate over the query scope (``Proc.Location`` etc.)."""
        return self.compiler.condition(expr, self.query_scope)

    def compile_expression(self, expr) -> Callable:
        return self.compiler.expression(expr, self.query_scope)[0]

    # ---------------------------------------------------------------- state

    def initial_store(self, rng: Any = None) -> Store:
        values = [clone(v) for v in self.layout.initial]
        return Store(values, [p.initial for p in self.processes], rng=rng, time=0)

    @staticmethod
    def copy_store(store: Store) -> Store:
        return Store([clone(v) for v in store.values], list(store.locations), store.rng, store.time)

    @staticmethod
    def state_key(store: Store) -> tuple:
        return tuple(store.locations), tuple(freeze(v) for v in store.values)

    def location_names(self, store: Store) -> Dict[str, str]:
        return {p.name: p.locations[store.locations[p.index]].name for p in self.processes}

    def active(self, store: Store, process: CompiledProcess) -> CompiledLocation:
        return process.locations[store.locations[process.index]]

    def in_committed(self, store: Store) -> bool:
        return any(self.active(store, p).kind == 'committed' for p in self.processes)

    def time_frozen(self, store: Store) -> bool:
        """Urgent or committed locations forbid delay."""
        return any(self.active(store, p).kind in ('urgent', 'committed') for p in self.processes)

    def invariants_hold(self, store: Store) -> bool:
        for process in self.processes:
            invariant = self.active(store, process).invariant
            if invariant is not None and not invariant(store, None):
                return False
        return True

    # ---------------------------------------------------------------- transitions

    def enabled_edges(self, store: Store) -> Tuple[List[CompiledEdge], Dict[int, List[CompiledEdge]],
                                                   Dict[int, Dict[int, List[CompiledEdge]]]]:
        """Enabled edges split into internal, sends by channel, and receives by channel and process."""
        internal: List[CompiledEdge] = []
        sends: Dict[int, List[CompiledEdge]] = {}
        receives: Dict[int, Dict[int, List[CompiledEdge]]] = {}
        for process in self.processes:
            for edge in process.edges_from[store.locations[process.index]]:
                if not edge.enabled(store):
                    continue
                if edge.direction is None:
                    internal.append(edge)
                elif edge.direction == SEND:
                    sends.setdefault(edge.channel(store), []).append(edge)
                else:
                    receives.setdefault(edge.channel(store), {}).setdefault(edge.process, []).append(edge)
        return internal, sends, receives

    def enumerate_transitions(self, store: Store) -> List[Transition]:
        """
        All enabled action transitions in declaration order.

        Synchronizations come before internal edges. In a committed state only
        transitions that involve a committed process are returned.
        """
        internal, sends, receives = self.enabled_edges(store)
        transitions: List[Transition] = []
        for channel, senders in sends.items():
            info = self.channels[channel]
            by_process = receives.get(channel, {})
            for sender in senders:
                others = [edges for p, edges in sorted(by_process.items()) if p != sender.process]
                if info.broadcast:
                    for combo in product(*others) if others else [()]:
                        transitions.append(Transition((sender,) + tuple(combo), channel))
                else:
                    for edges in others:
                        for receiver in edges:
                            transitions.append(Transition((sender, receiver), channel))
        transitions.extend(Transition((edge,)) for edge in internal)
        transitions.sort(key=lambda t: (t.kind != 'sync', t.parts[0].process, t.parts[0].index))
        if self.in_committed(store):
            committed = {p.index for p in self.processes if self.active(store, p).kind == 'committed'}
            transitions = [t for t in transitions if any(e.process in committed for e in t.parts)]
        return transitions

    def receivers_for(self, store: Store, channel: int) -> List[Tuple[CompiledEdge, ...]]:
        """Receiver combinations for an environment-originated signal on ``channel``."""
        _, _, receives = self.enabled_edges(store)
        by_process = receives.get(channel, {})
        if not by_process:
            return []
        if self.channels[channel].broadcast:
            return [tuple(combo) for combo in product(*[e for _, e in sorted(by_process.items())])]
        return [(edge,) for _, edges in sorted(by_process.items()) for edge in edges]

    def apply(self, store: Store, parts: Sequence[CompiledEdge],
              before_updates: Optional[Callable[[Store], None]] = None) -> List[Tuple[float, Store]]:
        """
        Fire the given edges together and resolve any branch points reached.

        Returns:
            List of (probability, successor store); one entry unless a branch
            point was entered. Successors violating a target invariant are dropped.
        """
        successor = self.copy_store(store)
        if before_updates is not None:
            before_updates(successor)
        for edge in parts:
            for update in edge.updates:
                update(successor, None)
            successor.locations[edge.process] = edge.target
        outcomes = [(1.0, successor)]
        for edge in parts:
            outcomes = [branch for probability, s in outcomes
                        for branch in self._resolve_branches(s, edge.process, probability)]
        return [(p, s) for p, s in outcomes if self.invariants_hold(s)]

    def _resolve_branches(self, store: Store, process_index: int,
                          probability: float) -> List[Tuple[float, Store]]:
        process = self.processes[process_index]
        location = process.locations[store.locations[process_index]]
        if not location.branchpoint:
            return [(probability, store)]
        edges = [e for e in process.edges_from[store.locations[process_index]] if e.enabled(store)]
        if not edges:
            raise ModelError(f"{process.name}: no enabled branch leaving {location.name}")
        weights = [float(e.weight(store, None)) if e.weight is not None else 1.0 for e in edges]
        total = sum(weights)
        if total <= 0:
            raise ModelError(f"{process.name}: branch weights at {location.name} sum to {total}")
        outcomes = []
        for edge, weight in zip(edges, weights):
            if weight <= 0:
                continue
            branch = self.copy_store(store)
            for update in edge.updates:
                update(branch, None)
            branch.locations[process_index] = edge.target
            outcomes.extend(self._resolve_branches(branch, process_index, probability * weight / total))
        return outcomes

    def can_delay(self, store: Store, step: int = 1) -> bool:
        """Whether ``step`` time units may pass (digital clocks)."""
        if self.time_frozen(store):
            return False
        if self.urgent_sync_enabled(store):
            return False
        advanced = self.delay(store, step)
        return self.invariants_hold(advanced)

    def urgent_sync_enabled(self, store: Store) -> bool:
        if not any(c.urgent for c in self.channels):
            return False
        return any(self.channels[t.channel].urgent for t in self.enumerate_transitions(store)
                   if t.channel is not None)

    def delay(self, store: Store, amount: float = 1, caps: Optional[Dict[int, int]] = None) -> Store:
        """Advance every clock by ``amount``; clocks above their cap are clamped to it."""
        successor = self.copy_store(store)
        for slot in self.layout.clocks:
            value = successor.values[slot] + amount
            if caps is not None:
                value = min(value, caps.get(slot, 0))
            successor.values[slot] = value
        successor.time = store.time + amount
        return successor

    def clock_caps(self) -> Dict[int, int]:
        """
        Per-clock cap for digital-clock exploration: one above the largest
        constant the clock is compared against.
        """
        caps = {slot: 0 for slot in self.layout.clocks}
        for process in self.processes:
            automaton = self.network.automaton(process.automaton)
            expressions = [loc.invariant for loc in automaton.locations if loc.invariant is not None]
            expressions.extend(e.guard for e in automaton.edges if e.guard is not None)
            for expr in expressions:
                for comparison in _comparisons(expr):
                    self._record_cap(comparison, process.scope, caps)
        return caps

    def _record_cap(self, comparison: Binary, scope: Scope, caps: Dict[int, int]) -> None:
        for clock_side, other in ((comparison.left, comparison.right), (comparison.right, comparison.left)):
            if not isinstance(clock_side, Name):
                continue
            symbol = scope.lookup(clock_side.name)
            if symbol is None or symbol.kind != 'var' or not isinstance(symbol.type, ClockType):
                continue
            try:
                bound = self.compiler.constant(other, scope)
            except (ModelError, TypeError, IndexError, KeyError):
                bound = None
            if isinstance(bound, (int, float)) and not isinstance(bound, bool):
                caps[symbol.slot] = max(caps[symbol.slot], int(bound) + 1)
            else:
                # non-constant bound: fall back to the largest initial integer value
                caps[symbol.slot] = max(caps[symbol.slot], _largest_int(self.layout.initial) + 1)


def conjuncts(expr) -> List[Any]:
    if expr is None:
        return []
    if isinstance(expr, Binary) and expr.op == '&&':
        return conjuncts(expr.left) + conjuncts(expr.right)
    return [expr]


def _comparisons(expr) -> List[Binary]:
    found = []
    if isinstance(expr, Binary):
        if expr.op in ('<', '<=', '>', '>=', '==', '!='):
            found.append(expr)
        found.extend(_comparisons(expr.left))
        found.extend(_comparisons(expr.right))
    elif hasattr(expr, '__dataclass_fields__'):
        for name in expr.__dataclass_fields__:
            child = getattr(expr, name)
            if hasattr(child, '__dataclass_fields__'):
                found.extend(_comparisons(child))
    return found


def _largest_int(values) -> int:
    best = 0
    for value in values:
        if isinstance(value, list):
            best = max(best, _largest_int(value))
        elif isinstance(value, dict):
            best = max(best, _largest_int(list(value.values())))
        elif isinstance(value, int) and not isinstance(value, bool):
            best = max(best, value)
    return best
