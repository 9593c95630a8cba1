#!/usr/bin/env python
"""
Accuracy/time trade-off of statistical model checking: runs and time per
(epsilon, alpha) pair on one probability query.

USAGE EXAMPLES:
    network = load_model('models/examples/fair_branch.ta')
    frame, summary = run_tradeoff(network, 'Pr[<=10](<> Coin.Heads)')
"""

import itertools
import logging
from typing import Iterable, Optional, Sequence, Tuple

import pandas as pd

from src.activforms.model.network import ModelNetwork
from src.activforms.smc.estimator import sweep_accuracy

logger = logging.getLogger(__name__)

EPSILONS = (0.1, 0.05, 0.02, 0.01)
ALPHAS = (0.1, 0.05, 0.01)


def default_grid(epsilons: Sequence[float] = EPSILONS, alphas: Sequence[float] = ALPHAS):
    return list(itertools.product(epsilons, alphas))


def run_tradeoff(network: ModelNetwork, query: str, grid: Optional[Iterable[Tuple[float, float]]] = None,
                 seed: int = 42, repetitions: int = 1,
                 truth: Optional[float] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Sweep the accuracy grid.

    Args:
        truth: Known probability; adds a ``covered`` column when given

    Returns:
        (one row per estimate, mean runs and millis per (epsilon, alpha))
    """
    frame = sweep_accuracy(network, query, grid if grid is not None else default_grid(), seed=seed,
                           repetitions=repetitions)
    aggregations = {'runs': ('runs', 'mean'), 'millis': ('millis', 'mean'), 'estimate': ('estimate', 'mean')}
    if truth is not None:
        frame['covered'] = (frame['low'] <= truth) & (truth <= frame['high'])
        aggregations['coverage'] = ('covered', 'mean')
    summary = frame.groupby(['epsilon', 'alpha'], as_index=False).agg(**aggregations)
    logger.info(f"Trade-off sweep: {len(frame)} estimates over {len(summary)} settings")
    return frame, summary
