#!/usr/bin/env python
"""
Online update of the running feedback-loop model.

An update is swapped in once the loop is quiescent (every MAPE automaton in
its Waiting location, no committed location active):

    1  the request is submitted (a newer one supersedes a pending one)
    2  quiescence is tracked
    3  quiescence is reached
    4  the running model is halted
    5  signals arriving from now on are buffered in FIFO order
    6  the state of the running model is snapshot
    7  the new model is loaded; matching variables are transferred, new
       ones keep their initializers
    8  the new model is started
    9  buffered signals are handed to the new model in FIFO order
    10 execution resumes

A type mismatch during the transfer aborts the swap and resumes the old
model unchanged.

USAGE EXAMPLES:
    manager = UpdateManager(system.engine, on_swap=lambda engine, req: system.attach_engine(engine))
    ticket = submit_model_update(manager, request_from_bundle(load_bundle(path), topology))
    report = manager.swap_when_quiescent()
"""

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import pandas as pd

from src.activforms.deltaiot.topology import Topology
from src.activforms.engine.engine import EngineInstance, restore_state
from src.activforms.engine.errors import LoadError, SchemaMismatch, TypeMismatch
from src.activforms.mapek.feedback_loop import mape_bindings
from src.activforms.mapek.goals import GoalSet, parse_goals
from src.activforms.model.errors import ModelError
from src.activforms.model.network import ModelNetwork
from src.activforms.model.parser import parse_model
from src.activforms.update.bundle import UpdateBundle, load_bundle
from src.activforms.update.errors import MissingVerificationReport, UpdateError, UpdateParseError
from src.activforms.utils.errors import ConfigError

logger = logging.getLogger(__name__)

SWAPPED, ABORTED = 'swapped', 'aborted'
MAPE_AUTOMATA = ('Monitor', 'Analyzer', 'Planner', 'Executor')


@dataclass
class UpdateRequest:
    model: ModelNetwork
    goals: GoalSet
    report: Optional[pd.DataFrame]
    submitted: float = field(default_factory=time.time)
    source: str = '<update>'


@dataclass(frozen=True)
class QuiescencePredicate:
    """(automaton, location) pairs that must all be active at once."""
    pairs: Tuple[Tuple[str, str], ...] = tuple((a, 'Waiting') for a in MAPE_AUTOMATA)

    def check(self, engine: EngineInstance) -> None:
        """
        Raises:
            UpdateError: a pair names an automaton or location the model lacks
        """
        for automaton, location in self.pairs:
            process = next((p for p in engine.compiled.processes if p.name == automaton), None)
            if process is None or location not in process.location_index:
                raise UpdateError(f"Quiescence predicate names unknown location {automaton}.{location}")

    def holds(self, engine: EngineInstance) -> bool:
        active = engine.active_locations()
        return all(active.get(a) == l for a, l in self.pairs) and not engine.in_committed()


@dataclass
class SwapReport:
    ticket: int
    status: str
    transferred: List[str] = field(default_factory=list)
    initialized: List[str] = field(default_factory=list)
    dropped: List[str] = field(default_factory=list)
    buffered_signals: int = 0
    delivered_signals: int = 0
    quiescent: bool = True
    millis: float = 0.0
    reason: str = ''
    source: str = ''

    @property
    def lost_signals(self) -> int:
        return self.buffered_signals - self.delivered_signals

    def as_row(self) -> Dict[str, object]:
        return {'ticket': self.ticket, 'status': self.status, 'source': self.source,
                'transferred': len(self.transferred), 'initialized': len(self.initialized),
                'dropped': len(self.dropped), 'buffered_signals': self.buffered_signals,
                'delivered_signals': self.delivered_signals, 'quiescent': self.quiescent,
                'millis': round(self.millis, 3), 'reason': self.reason}

    def print_report(self) -> None:
        mark = "✓" if self.status == SWAPPED else "❌"
        print(f"\n{mark} Update {self.ticket} {self.status} ({self.source})")
        print(f"  Variables: {len(self.transferred)} transferred, {len(self.initialized)} initialized, "
              f"{len(self.dropped)} dropped")
        if self.initialized:
            print(f"  Initialized: {', '.join(self.initialized)}")
        print(f"  Signals: {self.buffered_signals} buffered, {self.delivered_signals} delivered")
        if self.reason:
            print(f"  Reason: {self.reason}")


class UpdateManager:
    """
    Holds at most one pending update and swaps it into the running engine.

    Args:
        engine: Engine running the feedback-loop model
        predicate: Quiescence predicate
        max_wait: Seconds to wait for quiescence before notifying the operator
        on_swap: Called with the new engine and the request after a swap
    """

    def __init__(self, engine: EngineInstance, predicate: Optional[QuiescencePredicate] = None,
                 max_wait: float = 60.0,
                 on_swap: Optional[Callable[[EngineInstance, UpdateRequest], None]] = None):
        self.engine = engine
        self.predicate = predicate or QuiescencePredicate()
        self.predicate.check(engine)
        self.max_wait = max_wait
        self.on_swap = on_swap
        self.logger = logging.getLogger(__name__)
        self.pending: Optional[Tuple[int, UpdateRequest]] = None
        self.reports: List[SwapReport] = []
        self.stats = Counter()
        self._tickets = 0
        self._lock = threading.Lock()

    def swap_when_quiescent(self, advance: Optional[Callable[[], None]] = None,
                            clock: Callable[[], float] = time.monotonic) -> Optional[SwapReport]:
        """
        Swap the pending update as soon as the loop is quiescent.

        Args:
            advance: Moves the running loop forward between checks; without
                it the engine is only checked once
            clock: Time source for the maximum wait

        Returns:
            SwapReport, or None when nothing is pending or quiescence was not
            reached within max_wait (the operator is notified in the log)
        """
        if self.pending is None:
            return None
        started = clock()
        while not detect_quiescence(self):
            if advance is None or clock() - started >= self.max_wait:
                self.stats['quiescence_timeouts'] += 1
                self.logger.error(f"Update {self.pending[0]}: no quiescent state within {self.max_wait:.0f} s; "
                                  f"operator attention needed, update stays pending")
                return None
            advance()
        ticket, request = self.pending
        self.pending = None
        return perform_hot_swap(self, self.engine, request, ticket)

    def print_statistics(self) -> None:
        print(f"\nUpdate manager:")
        print(f"  Submitted: {self.stats['submitted']}, superseded: {self.stats['superseded']}")
        print(f"  Swapped: {self.stats['swapped']}, aborted: {self.stats['aborted']}")
        if self.stats['quiescence_timeouts']:
            print(f"  ❌ Quiescence timeouts: {self.stats['quiescence_timeouts']}")


def submit_model_update(manager: UpdateManager, request: UpdateRequest) -> int:
    """
    Queue an update; a pending one is superseded.

    Raises:
        MissingVerificationReport: no report, or a property that does not hold
    """
    report = request.report
    if report is None or report.empty:
        raise MissingVerificationReport(f"{request.source}: no verification report attached")
    failed = report.loc[report['verdict'] != 'holds', 'property'].tolist()
    if failed:
        raise MissingVerificationReport(f"{request.source}: properties not verified: {failed}")
    with manager._lock:
        manager._tickets += 1
        ticket = manager._tickets
        if manager.pending is not None:
            manager.logger.warning(f"Update {manager.pending[0]} superseded by update {ticket}")
            manager.stats['superseded'] += 1
        manager.pending = (ticket, request)
    manager.stats['submitted'] += 1
    manager.logger.info(f"Update {ticket} pending ({request.source})")
    return ticket


def detect_quiescence(manager: UpdateManager) -> bool:
    """All predicate locations active and no committed location anywhere."""
    return manager.predicate.holds(manager.engine)


def perform_hot_swap(manager: UpdateManager, engine: EngineInstance, request: UpdateRequest,
                     ticket: int = 0) -> SwapReport:
    """
    Replace the running model by ``request.model`` carrying its state over.

    Returns:
        SwapReport; on an aborted swap the old engine keeps running
    """
    started = time.perf_counter()
    report = SwapReport(ticket, ABORTED, source=request.source)
    if not manager.predicate.holds(engine):
        report.quiescent = False
        report.reason = f"not quiescent: {engine.active_locations()}"
        return _finish(manager, report, started)

    engine.halt()
    snapshot = engine.snapshot_state()
    try:
        new_engine = restore_state(engine, snapshot, request.model)
    except (TypeMismatch, LoadError, ModelError) as e:
        engine.resume()
        report.reason = str(e)
        manager.logger.error(f"Update {ticket} aborted, old model resumed: {e}")
        return _finish(manager, report, started)

    restored = new_engine.restore_report
    report.transferred, report.initialized, report.dropped = (
        restored.transferred, restored.initialized, restored.dropped)
    buffered = engine.drain_signals()
    report.buffered_signals = len(buffered)
    report.delivered_signals = _hand_over(manager, buffered, new_engine)
    if manager.on_swap is not None:
        manager.on_swap(new_engine, request)
    late = engine.drain_signals()
    report.buffered_signals += len(late)
    report.delivered_signals += _hand_over(manager, late, new_engine)
    manager.engine = new_engine
    new_engine.resume()
    report.status = SWAPPED
    return _finish(manager, report, started)


def _hand_over(manager: UpdateManager, signals, engine: EngineInstance) -> int:
    delivered = 0
    for channel, payload in signals:
        try:
            engine.inject(channel, payload)
            delivered += 1
        except (SchemaMismatch, ModelError) as e:
            manager.logger.error(f"Buffered signal on {channel} cannot be delivered to the new model: {e}")
    return delivered


def _finish(manager: UpdateManager, report: SwapReport, started: float) -> SwapReport:
    report.millis = (time.perf_counter() - started) * 1000
    manager.reports.append(report)
    manager.stats[report.status] += 1
    level = logging.INFO if report.status == SWAPPED else logging.WARNING
    manager.logger.log(level, f"Update {report.ticket} {report.status}: {len(report.transferred)} transferred, "
                              f"{len(report.initialized)} initialized, {report.buffered_signals} signals buffered")
    return report


def request_from_bundle(bundle: Union[UpdateBundle, str, Path], topology: Topology, **kwargs) -> UpdateRequest:
    """
    Build an update request from a bundle, binding the model to ``topology``.

    Raises:
        UpdateParseError: the model or the goals cannot be read
        MissingVerificationReport: see UpdateBundle.check_report
    """
    if not isinstance(bundle, UpdateBundle):
        bundle = load_bundle(bundle)
    report = bundle.check_report()
    try:
        goals = parse_goals(bundle.goals_text, source=f"{bundle.source}:goals")
        model = parse_model(bundle.model_text, source=f"{bundle.source}:model")
    except (ModelError, ConfigError) as e:
        raise UpdateParseError(str(e)) from e
    values = mape_bindings(topology, goals, **kwargs)
    model = model.bind({name: values[name] for name in model.slots() if name in values})
    return UpdateRequest(model=model, goals=goals, report=report, source=bundle.source)


class UpdateWatcher:
    """
    Polls a directory for update bundles and submits them.

    Processed bundles move to ``processed/``, unreadable ones to ``rejected/``.
    """

    def __init__(self, directory: Union[str, Path], manager: UpdateManager, topology: Topology,
                 poll_seconds: float = 1.0, **binding_kwargs):
        self.directory = Path(directory)
        self.manager = manager
        self.topology = topology
        self.poll_seconds = poll_seconds
        self.binding_kwargs = binding_kwargs
        self.logger = logging.getLogger(__name__)
        self.stats = Counter()
        self.directory.mkdir(parents=True, exist_ok=True)

    def poll_once(self) -> List[int]:
        """Submit every bundle found, oldest first. Returns the tickets issued."""
        tickets = []
        for path in sorted(self.directory.glob('*.zip'), key=lambda p: (p.stat().st_mtime, p.name)):
            try:
                request = request_from_bundle(path, self.topology, **self.binding_kwargs)
                tickets.append(submit_model_update(self.manager, request))
                self._move(path, 'processed')
                self.stats['submitted'] += 1
            except UpdateError as e:
                self.logger.error(f"Rejected {path.name}: {e}")
                self._move(path, 'rejected')
                self.stats['rejected'] += 1
        return tickets

    def run(self, stop: threading.Event) -> None:
        while not stop.is_set():
            self.poll_once()
            stop.wait(self.poll_seconds)

    def _move(self, path: Path, folder: str) -> None:
        target = self.directory / folder
        target.mkdir(exist_ok=True)
        path.replace(target / path.name)
