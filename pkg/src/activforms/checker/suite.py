#!/usr/bin/env python
"""
Generic feedback-loop properties P1-P12 and the offline verification suite.

P1-P7, P10 and P12 apply as written to any MAPE model built from the
templates. P8, P9 and P11 carry angle-bracket placeholders that a
designer binds to the domain (see configs/verification_bindings.yaml).

USAGE EXAMPLES:
    model = load_mape_model(config.get_path('mape_model'), topology)
    stubs = [load_model(p, closed=False) for p in config.get('stub_models')]
    report = run_verification_suite(model, stubs, load_bindings('configs/verification_bindings.yaml'))
    report.print_report()
    report.to_csv('results/verification/suite.csv')
"""

import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd
import yaml

from src.activforms.checker.errors import IncompleteExploration, InstantiationError
from src.activforms.checker.explorer import StateGraph, explore_states
from src.activforms.checker.oracle import ORACLE_MAX_STATES, naive_check
from src.activforms.checker.properties import INCOMPLETE, CheckResult, check_property
from src.activforms.engine.semantics import CompiledNetwork
from src.activforms.model.errors import ModelError, ModelSyntaxError
from src.activforms.model.network import ModelNetwork
from src.activforms.model.parser import merge_networks, parse_query

logger = logging.getLogger(__name__)

PLACEHOLDER = re.compile(r'<([A-Za-z_][A-Za-z0-9_]*)>')

PROPERTY_TEMPLATES: Dict[str, str] = {
    'P1': "Probe.DataCollected --> Monitor.KnowledgeUpdated",
    'P2': "Monitor.AnalysisRequired --> Analyzer.CheckForAdaptationDone",
    'P3': "Analyzer.AdaptationNeeded --> Verifier.VerificationDone",
    'P4': "Analyzer.QualityEstimatesReady --> Planner.ComposeAdaptationPlan || Planner.BestOptionInUse",
    'P5': "Analyzer.VerificationTimeExceeded --> Analyzer.UseFailSafeStrategy",
    'P6': "Planner.PlanCreated --> Executor.PlanExecuted",
    'P7': "Executor.PlanExecuted --> Effector.AdaptationCompleted",
    'P8': ("Planner.<ElementPlanned> && Planner.<elemId> == <e> && "
           "Planner.<stepsContains>(<e>, <link>, <STEP_I>, <val>) --> "
           "Executor.<AdaptElement> && Executor.<elemId> == <e> && "
           "Executor.<stepsAppliedContains>(<e>, <link>, <STEP_I>, <val>)"),
    'P9': ("Executor.<AdaptElement> && Executor.<elemId> == <e> && "
           "Executor.<stepsAppliedContains>(<e>, <link>, <STEP_I>, <val>) --> "
           "Effector.<ElementAdapted> && Effector.<elemId> == <e> && "
           "Effector.<stepsEnactedContains>(<e>, <link>, <STEP_I>, <val>)"),
    'P10': "A[] !Effector.ResultsIncorrect",
    'P11': "E<> <Model>.<Location>",
    'P12': "A[] no deadlock",
}

ALL_PROPERTIES = tuple(PROPERTY_TEMPLATES)


def placeholders(template: str) -> List[str]:
    """Placeholder names of a template in order of first appearance."""
    return list(dict.fromkeys(PLACEHOLDER.findall(template)))


def instantiate_property(name: str, bindings: Optional[Dict[str, object]] = None,
                         network: Optional[Union[ModelNetwork, CompiledNetwork]] = None) -> str:
    """
    Fill a property template's placeholders.

    Args:
        name: Property name (P1..P12)
        bindings: Placeholder -> concrete name or value
        network: When given, the instantiated query is compiled against it so
            that names which do not exist in the model are reported

    Returns:
        Query text

    Raises:
        InstantiationError: unknown property, missing binding, or a name that
            resolves to nothing in the model
    """
    if name not in PROPERTY_TEMPLATES:
        raise InstantiationError(f"Unknown property '{name}' (expected one of {', '.join(ALL_PROPERTIES)})")
    template = PROPERTY_TEMPLATES[name]
    bindings = bindings or {}
    missing = [p for p in placeholders(template) if p not in bindings]
    if missing:
        raise InstantiationError(f"{name}: no binding for placeholder(s) {missing}")
    text = PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template)
    if network is not None:
        check_resolves(name, text, network)
    return text


def check_resolves(name: str, text: str, network: Union[ModelNetwork, CompiledNetwork]) -> None:
    """Raise InstantiationError if ``text`` mentions anything the model does not declare."""
    compiled = network if isinstance(network, CompiledNetwork) else CompiledNetwork(network, allow_random=False)
    try:
        query = parse_query(text)
    except ModelSyntaxError as e:
        raise InstantiationError(f"{name}: instantiated property does not parse: {e}") from e
    try:
        for expr in _query_expressions(query):
            compiled.compile_condition(expr)
    except ModelError as e:
        raise InstantiationError(f"{name}: {e}") from e


def _query_expressions(query) -> List:
    return [getattr(query, attr) for attr in ('expr', 'premise', 'conclusion') if hasattr(query, attr)]


def load_bindings(path: Union[str, Path]) -> Dict[str, Dict[str, object]]:
    """Read per-property placeholder bindings from YAML (``P8: {ElementPlanned: MotePlanned, ...}``)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Bindings file not found: {path}")
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    return {str(k): dict(v or {}) for k, v in data.items()}


@dataclass
class SuiteEntry:
    property: str
    query: str
    result: CheckResult
    cross_check: Optional[str] = None

    @property
    def verdict(self) -> str:
        return self.result.verdict

    @property
    def agrees(self) -> bool:
        return self.cross_check is None or self.cross_check == self.result.verdict


@dataclass
class SuiteReport:
    source: str
    entries: List[SuiteEntry] = field(default_factory=list)
    states: int = 0
    exploration_millis: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(e.result.holds and e.agrees for e in self.entries)

    @property
    def failures(self) -> List[SuiteEntry]:
        return [e for e in self.entries if not (e.result.holds and e.agrees)]

    @property
    def total_millis(self) -> float:
        return sum(e.result.millis for e in self.entries)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'property': e.property, 'verdict': e.verdict, 'states': e.result.states,
                              'millis': round(e.result.millis, 3)} for e in self.entries],
                            columns=['property', 'verdict', 'states', 'millis'])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def print_report(self) -> None:
        print(f"\nVerification suite: {self.source}")
        print(f"  State space: {self.states} states ({self.exploration_millis:.0f} ms)")
        for entry in self.entries:
            mark = "✓" if entry.result.holds and entry.agrees else "❌"
            line = f"  {mark} {entry.property:<4} {entry.verdict:<10} {entry.result.millis:8.1f} ms  {entry.query}"
            if entry.cross_check is not None and not entry.agrees:
                line += f"  (oracle: {entry.cross_check})"
            print(line)
            if entry.result.trace and not entry.result.holds:
                print(entry.result.format_trace())
        status = "✓ All properties hold" if self.passed else f"❌ {len(self.failures)} property(ies) failed"
        print(f"\n{status} ({self.total_millis:.0f} ms total)")


def run_verification_suite(model: ModelNetwork, stubs: Sequence[ModelNetwork],
                           instantiations: Optional[Dict[str, Dict[str, object]]] = None,
                           max_states: int = 1_000_000,
                           properties: Iterable[str] = ALL_PROPERTIES,
                           cross_check: bool = False,
                           progress: bool = False) -> SuiteReport:
    """
    Verify the generic properties on a feedback-loop model composed with its stubs.

    The closed network is explored once; every property is decided on the
    same graph. A property's time is the exploration time plus its own check.

    Args:
        model: Feedback-loop model with all parameter slots bound
        stubs: Probe, verifier and effector stub networks
        instantiations: Per-property placeholder bindings (P8, P9, P11)
        max_states: Exploration bound; overflow makes every verdict incomplete
        properties: Subset of P1..P12 to check
        cross_check: Also decide each property with the naive recursive oracle

    Returns:
        SuiteReport

    Raises:
        InstantiationError: a placeholder is unbound or resolves to nothing
    """
    network = merge_networks(model, *stubs)
    compiled = CompiledNetwork(network, allow_random=False)
    instantiations = instantiations or {}
    queries = {name: instantiate_property(name, instantiations.get(name), compiled)
               for name in properties}

    report = SuiteReport(network.source)
    graph: Optional[StateGraph]
    try:
        graph = explore_states(compiled, max_states=max_states, progress=progress)
        report.states = graph.states
        report.exploration_millis = graph.millis
    except IncompleteExploration as e:
        logger.warning(f"{e}; every property is reported incomplete")
        graph = None
        report.states = e.states_explored
        report.exploration_millis = e.graph.millis if e.graph is not None else 0.0

    for name, text in queries.items():
        started = time.perf_counter()
        if graph is None:
            result = CheckResult(text, INCOMPLETE, report.states)
        else:
            result = check_property(graph, text)
        result.millis = report.exploration_millis + (time.perf_counter() - started) * 1000
        entry = SuiteEntry(name, text, result)
        if cross_check and graph is not None:
            if graph.states <= ORACLE_MAX_STATES:
                entry.cross_check = naive_check(network, text)
            else:
                logger.info(f"{name}: {graph.states} states, skipping the oracle cross-check")
        report.entries.append(entry)
        logger.info(f"{name}: {result.verdict} ({result.states} states, {result.millis:.1f} ms)")
    return report
