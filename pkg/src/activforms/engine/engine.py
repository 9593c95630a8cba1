#!/usr/bin/env python
"""
Model execution engine: runs a verified network directly, one micro-step at a time.

USAGE EXAMPLES:
    engine = load_model(network, ExecutionConfig(real_time_unit_millis=1000))
    port = engine.bind_external_port(ExternalPort('monitor', INTO_MODEL, ('probedLoss',)))
    port.inject({'probedLoss': 12})
    engine.run_until_stable()
"""

import logging
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional, Tuple

import numpy as np

from src.activforms.engine.errors import (
    InvariantViolation, LoadError, SchemaMismatch, TypeMismatch,
)
from src.activforms.engine.semantics import CompiledNetwork, Transition
from src.activforms.model.errors import EvaluationError, ModelError, UnknownChannel
from src.activforms.model.evaluator import Store, check_shape
from src.activforms.model.network import ModelNetwork
from src.activforms.model.types import IntType, clone, coerce, freeze, same_shape, thaw

INTO_MODEL, OUT_OF_MODEL = 'intoModel', 'outOfModel'
TIE_BREAKS = ('declarationOrder', 'seededUniform')


@dataclass
class ExecutionConfig:
    real_time_unit_millis: int = 1000
    seed: int = 42
    tie_break: str = 'declarationOrder'
    keep_trace: bool = True

    def __post_init__(self):
        if self.real_time_unit_millis < 1:
            raise ValueError("real_time_unit_millis must be at least 1")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")


@dataclass(frozen=True)
class ExternalPort:
    channel: str
    direction: str
    payload: Tuple[str, ...] = ()


@dataclass(frozen=True)
class StepReport:
    step: int
    time: int
    kind: str                       # action | signal | delay | idle
    label: str = ''
    channel: Optional[str] = None
    locations: Tuple[str, ...] = ()


@dataclass
class RuntimeState:
    """Detached copy of an engine's state."""
    locations: Dict[str, str]
    variables: Dict[str, Any]
    types: Dict[str, Any]
    time: int
    pending_signals: List[Tuple[str, Dict[str, Any]]] = field(default_factory=list)


@dataclass
class RestoreReport:
    transferred: List[str] = field(default_factory=list)
    initialized: List[str] = field(default_factory=list)
    dropped: List[str] = field(default_factory=list)


class Subscription:
    """Handle returned by bind_external_port."""

    def __init__(self, engine: 'EngineInstance', port: ExternalPort, handler: Optional[Callable]):
        self.engine = engine
        self.port = port
        self.handler = handler
        self.active = True

    def inject(self, payload: Optional[Dict[str, Any]] = None) -> None:
        if self.port.direction != INTO_MODEL:
            raise SchemaMismatch(f"Port {self.port.channel} does not accept signals")
        self.engine.inject(self.port.channel, payload or {})

    def cancel(self) -> None:
        self.active = False


class EngineInstance:
    """
    Executes a compiled network with channel-based external ports.

    Priority per micro-step: transitions of committed processes, then the
    oldest deliverable external signal, then synchronizations, then internal
    edges, then a one-tick delay.
    """

    def __init__(self, network: ModelNetwork, config: Optional[ExecutionConfig] = None):
        self.config = config or ExecutionConfig()
        self.logger = logging.getLogger(__name__)
        try:
            self.compiled = CompiledNetwork(network)
        except LoadError:
            raise
        except ModelError as e:
            raise LoadError(f"Cannot load {network.source}: {e}") from e
        self.network = network
        self.rng = np.random.default_rng(self.config.seed)
        self.store: Store = self.compiled.initial_store(rng=self.rng)
        self.channel_ids = {c.name: i for i, c in enumerate(self.compiled.channels)}
        self.status = 'initialized'
        self.trace: List[StepReport] = []
        self.steps = 0
        self.stats = Counter()
        self._queue: Deque[Tuple[int, Dict[str, Any]]] = deque()
        self._lock = threading.RLock()
        self._halt = threading.Event()
        self._out_ports: Dict[int, List[Subscription]] = {}
        self._in_ports: Dict[int, Subscription] = {}
        self.restore_report: Optional[RestoreReport] = None
        self.logger.info(f"Loaded {network.source}: {len(self.compiled.processes)} processes, "
                         f"{len(self.compiled.channels)} channels")

    # ---------------------------------------------------------------- ports

    def bind_external_port(self, port: ExternalPort, handler: Optional[Callable] = None) -> Subscription:
        """
        Connect a model channel to the outside world.

        intoModel ports return a subscription whose inject() queues a signal;
        outOfModel ports call ``handler(channel, payload)`` after the model
        sends on the channel.
        """
        if port.channel not in self.channel_ids:
            raise UnknownChannel(f"Unknown channel '{port.channel}'")
        channel = self.channel_ids[port.channel]
        if not self.compiled.channels[channel].broadcast:
            raise SchemaMismatch(f"External channel '{port.channel}' must be declared broadcast")
        unknown = [name for name in port.payload if name not in self.compiled.layout.names]
        if unknown:
            raise SchemaMismatch(f"Port {port.channel}: unknown payload variable(s) {unknown}")
        if port.direction not in (INTO_MODEL, OUT_OF_MODEL):
            raise SchemaMismatch(f"Unknown port direction '{port.direction}'")
        subscription = Subscription(self, port, handler)
        if port.direction == INTO_MODEL:
            self._in_ports[channel] = subscription
        else:
            self._out_ports.setdefault(channel, []).append(subscription)
        self.logger.debug(f"Bound {port.direction} port {port.channel} payload={port.payload}")
        return subscription

    def inject(self, channel: str, payload: Dict[str, Any]) -> None:
        """Queue an external signal; never blocks on model state. Thread-safe."""
        if channel not in self.channel_ids:
            raise UnknownChannel(f"Unknown channel '{channel}'")
        channel_id = self.channel_ids[channel]
        port = self._in_ports.get(channel_id)
        allowed = set(port.port.payload) if port is not None else set(self.compiled.layout.names)
        extra = set(payload) - allowed
        if extra:
            raise SchemaMismatch(f"Signal on {channel} carries undeclared variable(s) {sorted(extra)}")
        with self._lock:
            self._queue.append((channel_id, dict(payload)))
            self.stats['signals_injected'] += 1

    @property
    def pending_signals(self) -> int:
        with self._lock:
            return len(self._queue)

    def _write_payload(self, store: Store, payload: Dict[str, Any]) -> None:
        layout = self.compiled.layout
        for name, value in payload.items():
            slot = layout.slot_of(name)
            var_type = layout.types[slot]
            try:
                value = thaw(var_type, freeze(value))
                check_shape(var_type, value, name)
                value = coerce(var_type, value)
            except (TypeError, KeyError, ModelError) as e:
                raise SchemaMismatch(f"Payload value for {name} does not match {var_type}: {e}")
            if isinstance(var_type, IntType) and var_type.ranged and not var_type.low <= value <= var_type.high:
                raise SchemaMismatch(f"Payload value {value} for {name} outside {var_type}")
            store.values[slot] = value

    def _read_payload(self, store: Store, names) -> Dict[str, Any]:
        layout = self.compiled.layout
        return {name: clone(store.values[layout.slot_of(name)]) for name in names}

    # ---------------------------------------------------------------- stepping

    def _choose(self, candidates: List[Any]) -> Any:
        if self.config.tie_break == 'seededUniform' and len(candidates) > 1:
            return candidates[int(self.rng.integers(len(candidates)))]
        return candidates[0]

    def _pick_outcome(self, outcomes: List[Tuple[float, Store]]) -> Store:
        if len(outcomes) == 1:
            return outcomes[0][1]
        weights = np.array([p for p, _ in outcomes], dtype=float)
        return outcomes[int(self.rng.choice(len(outcomes), p=weights / weights.sum()))][1]

    def _deliverable_signal(self) -> Optional[Tuple[int, int, List[tuple]]]:
        with self._lock:
            for position, (channel, _) in enumerate(self._queue):
                receivers = self.compiled.receivers_for(self.store, channel)
                if receivers:
                    return position, channel, receivers
        return None

    def micro_step(self) -> StepReport:
        """
        Execute exactly one transition (or one delay tick).

        Raises:
            InvariantViolation: nothing is enabled and time cannot pass
            EvaluationError: an update failed; the engine halts
        """
        self.status = 'running'
        compiled = self.compiled
        try:
            if not compiled.processes:
                return self._record('idle')
            committed = compiled.in_committed(self.store)
            if not committed:
                signal = self._deliverable_signal()
                if signal is not None:
                    return self._deliver(*signal)
            transitions = compiled.enumerate_transitions(self.store)
            if transitions:
                report = self._fire(transitions)
                if report is not None:
                    return report
            if not committed and compiled.can_delay(self.store):
                self.store = compiled.delay(self.store, 1)
                self.stats['delays'] += 1
                return self._record('delay', label='tick')
        except EvaluationError as e:
            self.status = 'halted'
            self.logger.error(f"Evaluation error at step {self.steps}: {e}")
            raise
        self.status = 'halted'
        locations = compiled.location_names(self.store)
        raise InvariantViolation(f"No transition enabled and time cannot pass at {locations}", locations)

    def _fire(self, transitions: List[Transition]) -> Optional[StepReport]:
        syncs = [t for t in transitions if t.kind == 'sync']
        for group in (syncs, [t for t in transitions if t.kind != 'sync']):
            candidates = list(group)
            while candidates:
                transition = self._choose(candidates)
                outcomes = self.compiled.apply(self.store, transition.parts)
                if not outcomes:
                    candidates.remove(transition)
                    continue
                self.store = self._pick_outcome(outcomes)
                self.stats['actions'] += 1
                channel_name = None
                if transition.channel is not None:
                    channel_name = self.compiled.channels[transition.channel].name
                    self._notify(transition.channel)
                return self._record('action', transition.label(self.compiled), channel_name)
        return None

    def _deliver(self, position: int, channel: int, receivers: List[tuple]) -> StepReport:
        with self._lock:
            _, payload = self._queue[position]
            del self._queue[position]
        parts = self._choose(receivers)
        outcomes = self.compiled.apply(self.store, parts,
                                       before_updates=lambda s: self._write_payload(s, payload))
        if not outcomes:
            raise InvariantViolation(f"Signal on {self.compiled.channels[channel].name} "
                                     f"leads to an invariant violation")
        self.store = self._pick_outcome(outcomes)
        self.stats['signals_delivered'] += 1
        name = self.compiled.channels[channel].name
        label = '; '.join(e.label for e in parts)
        return self._record('signal', f"{name}: {label}", name)

    def _notify(self, channel: int) -> None:
        for subscription in self._out_ports.get(channel, []):
            if not subscription.active:
                continue
            payload = self._read_payload(self.store, subscription.port.payload)
            self.stats['signals_emitted'] += 1
            if subscription.handler is not None:
                subscription.handler(subscription.port.channel, payload)

    def _record(self, kind: str, label: str = '', channel: Optional[str] = None) -> StepReport:
        self.steps += 1
        report = StepReport(step=self.steps, time=int(self.store.time), kind=kind, label=label,
                            channel=channel,
                            locations=tuple(self.compiled.location_names(self.store).values()))
        if self.config.keep_trace:
            self.trace.append(report)
        return report

    # ---------------------------------------------------------------- drivers

    def is_stable(self) -> bool:
        """No action or deliverable signal is pending; only time can pass."""
        if self.compiled.in_committed(self.store):
            return False
        if self._deliverable_signal() is not None:
            return False
        return not self.compiled.enumerate_transitions(self.store)

    def run_until_stable(self, max_steps: int = 10_000) -> int:
        """Fire actions until only a delay remains. Returns the number of steps taken."""
        taken = 0
        while not self.is_stable():
            if self._halt.is_set():
                break
            self.micro_step()
            taken += 1
            if taken >= max_steps:
                raise InvariantViolation(f"No stable state reached within {max_steps} steps")
        return taken

    def run_virtual(self, until: Optional[int] = None, max_steps: int = 1_000_000,
                    stop: Optional[Callable[['EngineInstance'], bool]] = None) -> int:
        """
        Run without wall-clock waiting.

        Args:
            until: Stop once logical time reaches this tick
            max_steps: Safety bound on micro-steps
            stop: Optional predicate checked after every step
        """
        self._halt.clear()
        taken = 0
        while taken < max_steps and not self._halt.is_set():
            if until is not None and self.store.time >= until and self.is_stable():
                break
            self.micro_step()
            taken += 1
            if stop is not None and stop(self):
                break
        return taken

    def advance_time(self, ticks: int) -> int:
        """Let ``ticks`` delay steps happen, firing every action that becomes enabled on the way."""
        target = self.store.time + ticks
        return self.run_virtual(until=target)

    def run_realtime(self) -> None:
        """Run until halt(); each delay tick takes real_time_unit_millis of wall-clock time."""
        self._halt.clear()
        unit = self.config.real_time_unit_millis / 1000.0
        start = time.monotonic()
        base_time = self.store.time
        self.logger.info(f"Engine started in realtime mode ({self.config.real_time_unit_millis} ms/tick)")
        while not self._halt.is_set():
            report = self.micro_step()
            if report.kind == 'delay':
                due = start + (self.store.time - base_time) * unit
                self._halt.wait(max(0.0, due - time.monotonic()))
        self.status = 'halted'

    def halt(self) -> None:
        """Stop the running loop after the current micro-step."""
        self._halt.set()
        self.status = 'halted'

    def resume(self) -> None:
        """Undo halt() so the drivers run again."""
        self._halt.clear()
        self.status = 'running'

    # ---------------------------------------------------------------- inspection

    def active_locations(self) -> Dict[str, str]:
        return self.compiled.location_names(self.store)

    def in_committed(self) -> bool:
        return self.compiled.in_committed(self.store)

    def variable(self, name: str) -> Any:
        return clone(self.store.values[self.compiled.layout.slot_of(name)])

    def set_variable(self, name: str, value: Any) -> None:
        self._write_payload(self.store, {name: value})

    def evaluate(self, expression) -> Any:
        """Evaluate a query-scope expression (``Proc.Location``, globals, locals) on the current state."""
        if isinstance(expression, str):
            from src.activforms.model.parser import parse_expression
            expression = parse_expression(expression)
        return self.compiled.compile_expression(expression)(self.store, None)

    def successors(self) -> List[Tuple[str, Store]]:
        """Every labelled successor of the current state (actions, then a delay)."""
        results = []
        for transition in self.compiled.enumerate_transitions(self.store):
            for _, successor in self.compiled.apply(self.store, transition.parts):
                results.append((transition.label(self.compiled), successor))
        if not self.compiled.in_committed(self.store) and self.compiled.can_delay(self.store):
            results.append(('delay', self.compiled.delay(self.store, 1)))
        return results

    def goto(self, store: Store) -> None:
        self.store = store
        self.store.rng = self.rng

    # ---------------------------------------------------------------- snapshots

    def snapshot_state(self) -> RuntimeState:
        layout = self.compiled.layout
        with self._lock:
            pending = [(self.compiled.channels[c].name, dict(p)) for c, p in self._queue]
        return RuntimeState(
            locations=self.active_locations(),
            variables={name: clone(self.store.values[i]) for i, name in enumerate(layout.names)},
            types=dict(zip(layout.names, layout.types)),
            time=int(self.store.time),
            pending_signals=pending)

    def drain_signals(self) -> List[Tuple[str, Dict[str, Any]]]:
        """Remove and return all queued signals in FIFO order."""
        with self._lock:
            drained = [(self.compiled.channels[c].name, p) for c, p in self._queue]
            self._queue.clear()
        return drained


def load_model(network: ModelNetwork, config: Optional[ExecutionConfig] = None) -> EngineInstance:
    """Compile a network into an initialized engine instance."""
    return EngineInstance(network, config)


def restore_state(instance: EngineInstance, snapshot: RuntimeState,
                  new_model: ModelNetwork) -> EngineInstance:
    """
    Build an engine for ``new_model`` carrying over the snapshot's state.

    Variables are matched by qualified name and type; new variables keep their
    declared initializers; variables missing from the new model are dropped.
    Processes resume at the same-named location when it exists. The new
    engine's ``restore_report`` lists what happened to each variable.

    Raises:
        TypeMismatch: a variable changed type; nothing is modified
    """
    engine = EngineInstance(new_model, instance.config)
    layout = engine.compiled.layout
    mismatched = [name for name in layout.names
                  if name in snapshot.types and not same_shape(snapshot.types[name], layout.types[layout.names.index(name)])]
    if mismatched:
        raise TypeMismatch(mismatched)
    report = RestoreReport()
    for slot, name in enumerate(layout.names):
        if name in snapshot.variables:
            try:
                engine._write_payload(engine.store, {name: snapshot.variables[name]})
            except SchemaMismatch:
                raise TypeMismatch([name])
            report.transferred.append(name)
        else:
            report.initialized.append(name)
    report.dropped = [name for name in snapshot.variables if name not in layout.names]
    for process in engine.compiled.processes:
        location = snapshot.locations.get(process.name)
        if location in process.location_index:
            engine.store.locations[process.index] = process.location_index[location]
    engine.store.time = snapshot.time
    engine.restore_report = report
    engine.logger.info(f"Restored state: {len(report.transferred)} transferred, "
                       f"{len(report.initialized)} initialized, {len(report.dropped)} dropped")
    return engine
