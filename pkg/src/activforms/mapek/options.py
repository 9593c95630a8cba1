#!/usr/bin/env python
"""
Adaptation options of the DeltaIoT network.

Powers are fixed per link by ``compute_power_setting``; distributions range
over the 20% steps of every two-parent mote. Option ``o`` reads its digits
in base 6, digit k belonging to the k-th two-parent mote (topology order):
the mote's first parent link gets ``20 * digit`` percent, the second the
rest. Single-parent motes send everything to their parent. The feedback-loop
model decodes option numbers the same way.

USAGE EXAMPLES:
    compute_power_setting(-7.29, 0.83, measured_snr=-7.29 + 0.83 * 15, current_power=15)   # 9
    options = compose_adaptation_options(knowledge)
    len(options)                                                                         # 216
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from src.activforms.deltaiot.topology import DISTRIBUTION_STEPS, MAX_POWER, Topology
from src.activforms.mapek.errors import EmptyTopology, TopologyMismatch
from src.activforms.mapek.knowledge import Knowledge, NetworkSettings

logger = logging.getLogger(__name__)

PENDING, VERIFIED, SKIPPED = 'pending', 'verified', 'skipped'
BASE = len(DISTRIBUTION_STEPS)


@dataclass
class AdaptationOption:
    index: int
    power: Tuple[int, ...]
    distribution: Tuple[int, ...]
    snr: Tuple[float, ...]
    estimates: Dict[str, float] = field(default_factory=dict)
    status: str = PENDING
    millis: float = 0.0

    @property
    def settings(self) -> NetworkSettings:
        return NetworkSettings(self.power, self.distribution)

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


def compute_power_setting(alpha: float, beta: float, measured_snr: float, current_power: int) -> int:
    """
    Minimal power whose SNR stays non-negative.

    The calibrated SNR ``alpha + beta * p`` is corrected by the interference
    observed at the current power, ``measured - (alpha + beta * current)``.
    Returns MAX_POWER when even that is not enough.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    delta = measured_snr - (alpha + beta * current_power)
    for power in range(MAX_POWER + 1):
        if alpha + beta * power + delta >= 0.0:
            return power
    return MAX_POWER


def option_distribution(topology: Topology, index: int) -> Tuple[int, ...]:
    """Per-link distribution of option ``index``."""
    distribution = [100] * len(topology.links)
    for position, mote in enumerate(topology.multi_parent_motes):
        digit = (index // BASE ** position) % BASE
        first, *others = topology.parent_links(mote)
        distribution[first] = DISTRIBUTION_STEPS[digit]
        for link in others:
            distribution[link] = 100 - DISTRIBUTION_STEPS[digit]
    return tuple(distribution)


def compose_adaptation_options(knowledge: Knowledge,
                               powers: Optional[Sequence[int]] = None) -> List[AdaptationOption]:
    """
    Every combination of distributions with the minimal powers.

    Args:
        knowledge: Topology, current settings and smoothed SNR
        powers: Per-link powers to use instead of computing them

    Raises:
        EmptyTopology: no link to adapt
        TopologyMismatch: ``powers`` does not cover every link
    """
    topology = knowledge.topology
    if not topology.links:
        raise EmptyTopology(f"Topology {topology.name} has no links")
    if powers is None:
        snr = knowledge.snr
        powers = [compute_power_setting(link.snr_alpha, link.snr_beta, snr[i], knowledge.settings.power[i])
                  for i, link in enumerate(topology.links)]
    elif len(powers) != len(topology.links):
        raise TopologyMismatch(f"{len(powers)} powers for {len(topology.links)} links")
    powers = tuple(int(p) for p in powers)
    expected_snr = tuple(link.predicted_snr(p) + knowledge.expected_interference(i)
                         for i, (link, p) in enumerate(zip(topology.links, powers)))
    options = [AdaptationOption(index=o, power=powers, distribution=option_distribution(topology, o),
                                snr=expected_snr)
               for o in range(topology.option_count)]
    logger.debug(f"Composed {len(options)} adaptation options (powers {list(powers)})")
    return options
