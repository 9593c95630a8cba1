#!/usr/bin/env python
"""
Probability estimation and simulation queries.

USAGE EXAMPLES:
    network = load_model('models/examples/fair_branch.ta')
    estimate = estimate_probability(network, parse_query('Pr[<=10](<> Coin.Heads)'),
                                    epsilon=0.05, alpha=0.05, seed=42)
    stats = run_simulation_query(bound_energy_model, parse_query('simulate 30[<=30]{Gateway.energy}'))
"""

import logging
import threading
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.activforms.engine.semantics import CompiledNetwork
from src.activforms.model.network import ModelNetwork, ProbabilityQuery, SimulationQuery
from src.activforms.model.parser import parse_query
from src.activforms.model.printer import format_expr
from src.activforms.smc.errors import Cancelled, SMCError
from src.activforms.smc.simulator import StochasticSimulator
from src.activforms.smc.statistics import (
    ExpressionStats, required_runs_chernoff, summarize, wilson_interval,
)

logger = logging.getLogger(__name__)

MIN_RUNS = 30
DEFAULT_SIMULATION_RUNS = 30
SEQUENTIAL, CHERNOFF_CAP = 'sequential', 'chernoffCap'


@dataclass(frozen=True)
class Estimate:
    point: float
    epsilon: float
    alpha: float
    runs: int
    stopping_rule: str
    successes: int = 0
    millis: float = 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return max(0.0, self.point - self.epsilon), min(1.0, self.point + self.epsilon)

    def contains(self, p: float) -> bool:
        low, high = self.interval
        return low <= p <= high

    def as_row(self) -> Dict[str, object]:
        low, high = self.interval
        return {'estimate': self.point, 'low': low, 'high': high, 'epsilon': self.epsilon,
                'alpha': self.alpha, 'runs': self.runs, 'stopping_rule': self.stopping_rule,
                'millis': round(self.millis, 3)}


@dataclass(frozen=True)
class SimStats:
    runs: int
    bound: float
    expressions: Tuple[ExpressionStats, ...]
    millis: float = 0.0

    def __getitem__(self, expression: str) -> ExpressionStats:
        for stats in self.expressions:
            if stats.expression == expression:
                return stats
        raise KeyError(expression)

    def as_rows(self) -> List[Dict[str, object]]:
        return [{'expression': s.expression, 'n': s.n, 'mean': s.mean, 'sd': s.sd,
                 'sem': s.sem, 'rsem': s.rsem, 'millis': round(self.millis, 3)}
                for s in self.expressions]


def _compiled(network: Union[ModelNetwork, CompiledNetwork]) -> CompiledNetwork:
    if isinstance(network, CompiledNetwork):
        return network
    return CompiledNetwork(network, allow_random=True)


def _query(query, expected):
    if isinstance(query, str):
        query = parse_query(query)
    if not isinstance(query, expected):
        raise SMCError(f"Expected a {expected.__name__}, got {type(query).__name__}")
    return query


def _check_cancel(cancel: Optional[threading.Event]) -> None:
    if cancel is not None and cancel.is_set():
        raise Cancelled("Query cancelled")


def estimate_probability(network: Union[ModelNetwork, CompiledNetwork],
                         query: Union[str, ProbabilityQuery],
                         epsilon: float = 0.05, alpha: float = 0.05, seed: int = 42,
                         min_runs: int = MIN_RUNS, max_run_steps: int = 100_000,
                         cancel: Optional[threading.Event] = None) -> Estimate:
    """
    Estimate Pr[<=bound](<> target) by sequential Bernoulli trials.

    After every run a (1 - alpha) Wilson interval is computed; estimation
    stops once its width drops below 2*epsilon (after at least ``min_runs``
    runs) or at the Chernoff-Hoeffding run count.

    Args:
        network: Closed stochastic network (or an already compiled one)
        query: Probability query or its text
        epsilon: Half-width of the approximation interval
        alpha: One minus the confidence level
        seed: Run i uses numpy.random.default_rng(seed ^ i)
        min_runs: Runs before the sequential rule may stop
        max_run_steps: Per-run step budget
        cancel: Checked between runs; raises Cancelled when set

    Returns:
        Estimate
    """
    started = time.perf_counter()
    query = _query(query, ProbabilityQuery)
    cap = required_runs_chernoff(epsilon, alpha)
    compiled = _compiled(network)
    bound = float(compiled.compiler.constant(query.bound, compiled.query_scope))
    target = compiled.compile_condition(query.target)
    simulator = StochasticSimulator(compiled, max_run_steps=max_run_steps)

    successes, runs, rule = 0, 0, CHERNOFF_CAP
    while runs < cap:
        _check_cancel(cancel)
        rng = np.random.default_rng(seed ^ runs)
        if simulator.run_until(target, bound, rng).reached:
            successes += 1
        runs += 1
        if runs >= min_runs:
            low, high = wilson_interval(successes, runs, alpha)
            if high - low < 2 * epsilon:
                rule = SEQUENTIAL
                break
    millis = (time.perf_counter() - started) * 1000
    estimate = Estimate(successes / runs, epsilon, alpha, runs, rule, successes, millis)
    logger.debug(f"Pr estimate {estimate.point:.4f} after {runs} runs ({rule}, {millis:.1f} ms)")
    return estimate


def run_simulation_query(network: Union[ModelNetwork, CompiledNetwork],
                         query: Union[str, SimulationQuery], seed: int = 42,
                         runs: Optional[int] = None, max_run_steps: int = 100_000,
                         cancel: Optional[threading.Event] = None) -> SimStats:
    """
    Run N bounded simulations and summarize the monitored expressions at run end.

    A query written with one run (``simulate 1[<=30]{...}``) is executed with
    DEFAULT_SIMULATION_RUNS independent runs unless ``runs`` is given.
    """
    started = time.perf_counter()
    query = _query(query, SimulationQuery)
    if runs is None:
        runs = query.runs if query.runs > 1 else DEFAULT_SIMULATION_RUNS
    if runs < 1:
        raise SMCError(f"Number of runs must be at least 1, got {runs}")
    compiled = _compiled(network)
    bound = float(compiled.compiler.constant(query.bound, compiled.query_scope))
    monitors = [(format_expr(e), compiled.compile_expression(e)) for e in query.expressions]
    simulator = StochasticSimulator(compiled, max_run_steps=max_run_steps)

    samples: Dict[str, List[float]] = {name: [] for name, _ in monitors}
    for i in range(runs):
        _check_cancel(cancel)
        rng = np.random.default_rng(seed ^ i)
        final = simulator.run(bound, rng).store
        for name, fn in monitors:
            samples[name].append(float(fn(final, None)))
    millis = (time.perf_counter() - started) * 1000
    stats = tuple(summarize(name, samples[name]) for name, _ in monitors)
    return SimStats(runs, bound, stats, millis)


def sweep_accuracy(network: ModelNetwork, query: Union[str, ProbabilityQuery],
                   grid: Iterable[Tuple[float, float]], seed: int = 42,
                   repetitions: int = 1) -> pd.DataFrame:
    """
    Accuracy/time trade-off: runs and milliseconds per (epsilon, alpha) pair.

    Returns:
        DataFrame with one row per (epsilon, alpha, repetition)
    """
    compiled = _compiled(network)
    rows = []
    grid = list(grid)
    for epsilon, alpha in tqdm(grid, desc="Accuracy sweep"):
        for repetition in range(repetitions):
            estimate = estimate_probability(compiled, query, epsilon, alpha, seed + repetition)
            row = estimate.as_row()
            row['repetition'] = repetition
            rows.append(row)
    return pd.DataFrame(rows)


def runs_for_rsem(network: ModelNetwork, query: Union[str, SimulationQuery], target_rsem: float,
                  seed: int = 42, start: int = 10, limit: int = 1000) -> int:
    """
    Offline calibration: smallest power-of-two multiple of ``start`` runs whose
    RSEM is below ``target_rsem`` for every monitored expression.
    """
    compiled = _compiled(network)
    runs = start
    while runs <= limit:
        stats = run_simulation_query(compiled, query, seed=seed, runs=runs)
        worst = max((s.rsem or 0.0) for s in stats.expressions)
        if worst <= target_rsem:
            return runs
        runs *= 2
    return limit

