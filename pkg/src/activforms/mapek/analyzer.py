#!/usr/bin/env python
"""
Analyzer: verification of adaptation options and goal-based selection.

Options are verified one at a time in a seeded random order. Packet loss is
estimated as a probability on the packet-loss quality model, energy (and
latency when a latency model is given) as run-end means of simulation
queries. When the time budget runs out or verification is cancelled, the
remaining options are marked skipped and the outcome is partial.

USAGE EXAMPLES:
    models = QualityModels.load(config)
    outcome = verify_adaptation_options(options, models, knowledge.snapshot(), budget=20.0, seed=42)
    best = select_best_option(outcome.options, goals)   # None: failsafe
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from src.activforms.deltaiot.binding import UncertaintySnapshot, bind_uncertainties
from src.activforms.mapek.goals import ENERGY, LATENCY, PACKET_LOSS, GoalSet
from src.activforms.mapek.options import SKIPPED, VERIFIED, AdaptationOption
from src.activforms.model.errors import ModelError
from src.activforms.model.network import ModelNetwork
from src.activforms.model.parser import load_model, parse_query
from src.activforms.smc.errors import Cancelled
from src.activforms.smc.estimator import estimate_probability, run_simulation_query

logger = logging.getLogger(__name__)


def model_query(network: ModelNetwork, name: str):
    """The named query stored in a quality model."""
    for query in network.queries:
        if query.name == name:
            return parse_query(query.text)
    raise ModelError(f"{network.source} declares no query '{name}'")


@dataclass
class QualityModels:
    """Quality-model templates, one per estimated quality."""
    packet_loss: ModelNetwork
    energy: ModelNetwork
    latency: Optional[ModelNetwork] = None

    @classmethod
    def load(cls, config, latency: bool = False) -> 'QualityModels':
        return cls.from_paths(config.get_path('packet_loss_model'), config.get_path('energy_model'),
                              config.get_path('latency_model') if latency else None)

    @classmethod
    def from_paths(cls, packet_loss: Union[str, Path], energy: Union[str, Path],
                   latency: Union[str, Path, None] = None) -> 'QualityModels':
        return cls(load_model(packet_loss), load_model(energy),
                   load_model(latency) if latency is not None else None)


@dataclass
class VerificationOutcome:
    options: List[AdaptationOption]
    partial: bool = False
    verified: int = 0
    skipped: int = 0
    millis: float = 0.0
    order: List[int] = field(default_factory=list)


def verify_option(option: AdaptationOption, models: QualityModels, snapshot: UncertaintySnapshot,
                  seed: int, epsilon: float = 0.05, alpha: float = 0.05, runs: Optional[int] = None,
                  cancel: Optional[threading.Event] = None) -> AdaptationOption:
    """Estimate every modelled quality of one option; marks it verified."""
    started = time.perf_counter()
    network = bind_uncertainties(models.packet_loss, snapshot, option)
    estimate = estimate_probability(network, model_query(network, 'PacketLoss'), epsilon, alpha,
                                    seed=seed, cancel=cancel)
    option.estimates[PACKET_LOSS] = estimate.point * 100.0
    network = bind_uncertainties(models.energy, snapshot, option)
    stats = run_simulation_query(network, model_query(network, 'Energy'), seed=seed, runs=runs, cancel=cancel)
    option.estimates[ENERGY] = stats.expressions[0].mean
    if models.latency is not None:
        network = bind_uncertainties(models.latency, snapshot, option)
        stats = run_simulation_query(network, model_query(network, 'Latency'), seed=seed, runs=runs,
                                     cancel=cancel)
        option.estimates[LATENCY] = stats.expressions[0].mean
    option.status = VERIFIED
    option.millis = (time.perf_counter() - started) * 1000
    return option


def verify_adaptation_options(options: Sequence[AdaptationOption], models: QualityModels,
                              snapshot: UncertaintySnapshot, budget: float, seed: int = 42,
                              epsilon: float = 0.05, alpha: float = 0.05, runs: Optional[int] = None,
                              cancel: Optional[threading.Event] = None,
                              clock: Callable[[], float] = time.monotonic,
                              progress: bool = False) -> VerificationOutcome:
    """
    Verify options sequentially within ``budget`` seconds.

    The budget is checked before each option, so it is exceeded by at most
    the duration of the option in flight.

    Args:
        options: Options to verify (updated in place)
        models: Quality-model templates
        snapshot: Uncertainties the templates are bound to
        budget: Seconds available
        seed: Seeds the verification order and, offset by the option index,
            every SMC query
        clock: Time source in seconds
        cancel: Set from outside to stop verification

    Returns:
        VerificationOutcome; ``partial`` is set when options were skipped
    """
    started = clock()
    wall = time.perf_counter()
    options = list(options)
    order = [int(i) for i in np.random.default_rng(seed).permutation(len(options))]
    outcome = VerificationOutcome(options, order=order)
    iterator = tqdm(order, desc="Verifying options", disable=not progress)
    for position, i in enumerate(iterator):
        option = options[i]
        if (cancel is not None and cancel.is_set()) or clock() - started >= budget:
            pending = order[position:]
            break
        try:
            verify_option(option, models, snapshot, seed + option.index, epsilon, alpha, runs, cancel)
            outcome.verified += 1
        except Cancelled:
            pending = order[position:]
            break
    else:
        pending = []
    for i in pending:
        options[i].status = SKIPPED
        options[i].estimates.clear()
    outcome.skipped = len(pending)
    outcome.partial = bool(pending)
    outcome.millis = (time.perf_counter() - wall) * 1000
    level = logging.WARNING if outcome.partial else logging.INFO
    logger.log(level, f"Verified {outcome.verified}/{len(options)} options in {outcome.millis:.0f} ms"
                      f"{' (partial)' if outcome.partial else ''}")
    return outcome


def survivors(options: Sequence[AdaptationOption], goals: GoalSet) -> List[AdaptationOption]:
    """Verified options meeting every satisfaction goal."""
    kept = [o for o in options if o.verified]
    for goal in goals.satisfaction:
        kept = [o for o in kept if goal.quality in o.estimates and goal.satisfied_by(o.estimates[goal.quality])]
    return kept


def select_best_option(options: Sequence[AdaptationOption], goals: GoalSet) -> Optional[AdaptationOption]:
    """
    Filter by the satisfaction goals, then optimize.

    Ties go to the lowest option index.

    Returns:
        The chosen option, or None when no verified option meets the goals
        (failsafe)
    """
    candidates = survivors(options, goals)
    if not candidates:
        logger.warning("No verified option meets the goals: failsafe")
        return None
    quality = goals.optimization.quality
    sign = 1.0 if goals.optimization.direction == 'min' else -1.0
    best = min(candidates, key=lambda o: (sign * o.estimates[quality], o.index))
    logger.info(f"Best option {best.index}: " +
                ", ".join(f"{q}={v:.3f}" for q, v in sorted(best.estimates.items())))
    return best
