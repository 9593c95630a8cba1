#!/usr/bin/env python
"""
Closed-form quality functions of the DeltaIoT network.

These formulas are shared by the simulator, the stochastic quality models
(which restate them in the model language) and the brute-force oracles
used to cross-check statistical estimates.

USAGE EXAMPLES:
    link_failure_rate(-10.0)                       # 0.5
    transmission_energy(10, 15)                    # 0.100362
    oracle_expected_packet_loss(topology, settings, traffic, snr_means, snr_sigmas)
"""

import logging
from typing import Dict, Mapping, Sequence

import networkx as nx
import numpy as np
from scipy.stats import norm

from src.activforms.deltaiot.errors import CycleDetected, SettingsRangeError
from src.activforms.deltaiot.topology import DISTRIBUTION_STEPS, MAX_POWER, Topology

logger = logging.getLogger(__name__)

# Power consumption rate (mA) per transmission power setting
PCR = (20.2, 21.2, 22.3, 23.7, 24.7, 26.1, 27.5, 28.8, 30.0, 31.2, 32.4, 33.7, 35.1, 36.5, 38.0, 38.9)
SF_TIME = 0.258
SNR_MIN, SNR_MAX = -50.0, 40.0
FAILURE_SLOPE = 20.0


def clamp_snr(snr: float) -> float:
    return float(min(SNR_MAX, max(SNR_MIN, snr)))


def link_failure_rate(snr: float) -> float:
    """Per-hop packet failure probability for a link at ``snr`` dB."""
    snr = clamp_snr(snr)
    if snr >= 0:
        return 0.0
    if snr <= SNR_MIN:
        return 1.0
    return min(1.0, -snr / FAILURE_SLOPE)


def expected_link_failure(mean: float, sigma: float) -> float:
    """
    Expected failure rate when the SNR is Normal(mean, sigma).

    The failure rate is -s/20 on [-20, 0) and 1 below -20, so the expectation
    is P(S < -20) plus the truncated first moment on [-20, 0).
    """
    if sigma <= 0:
        return link_failure_rate(mean)
    low = (-FAILURE_SLOPE - mean) / sigma
    high = (0.0 - mean) / sigma
    below = norm.cdf(low)
    mass = norm.cdf(high) - below
    partial_mean = mean * mass - sigma * (norm.pdf(high) - norm.pdf(low))
    return float(min(1.0, max(0.0, below - partial_mean / FAILURE_SLOPE)))


def check_power(power: int) -> int:
    if not isinstance(power, (int, np.integer)) or not 0 <= power <= MAX_POWER:
        raise SettingsRangeError(f"Power {power} outside 0..{MAX_POWER}")
    return int(power)


def check_distribution(distribution: int) -> int:
    if distribution not in DISTRIBUTION_STEPS:
        raise SettingsRangeError(f"Distribution {distribution} is not one of {DISTRIBUTION_STEPS}")
    return int(distribution)


def transmission_energy(packets: int, power: int) -> float:
    """Coulomb spent sending ``packets`` packets at ``power``."""
    check_power(power)
    if packets < 0:
        raise SettingsRangeError(f"Packet count must be non-negative, got {packets}")
    return packets * SF_TIME * PCR[power] / 1000.0


def listening_energy(listening_slots: int = 40, reception_time: float = 2.0,
                     receive_current_ma: float = 14.2, duty_cycle: float = 0.1) -> float:
    """Per-mote, per-cycle energy spent listening for children."""
    return listening_slots * reception_time * receive_current_ma * duty_cycle / 1000.0


def apportion(packets: int, distributions: Sequence[int]) -> list:
    """
    Split ``packets`` over parent links.

    Distributions summing to at most 100 split the packets: every link gets
    floor(packets * d / 100) and the last link with a positive share takes
    the remainder. A sum above 100 duplicates: every link gets
    floor(packets * d / 100).
    """
    shares = [packets * d // 100 for d in distributions]
    if sum(distributions) <= 100:
        positive = [i for i, d in enumerate(distributions) if d > 0]
        if positive:
            last = positive[-1]
            shares[last] = packets - sum(s for i, s in enumerate(shares) if i != last)
    return shares


def is_duplicating(distributions: Sequence[int]) -> bool:
    return sum(distributions) > 100


def link_flows(topology: Topology, distribution: Sequence[int], generated: Mapping[int, int],
               slots: Sequence[int] = None) -> list:
    """
    Packets sent over every link in one lossless cycle.

    Args:
        topology: Network topology
        distribution: Per-link distribution (global link order)
        generated: Mote -> packets it generates this cycle
        slots: Optional per-link slot capacity

    Returns:
        Per-link packet counts
    """
    load: Dict[int, int] = {m: int(generated.get(m, 0)) for m in topology.motes}
    flows = [0] * len(topology.links)
    for mote in topology.child_first_order():
        links = topology.parent_links(mote)
        shares = apportion(load[mote], [distribution[i] for i in links])
        for index, share in zip(links, shares):
            sent = share if slots is None else min(share, slots[index])
            flows[index] = sent
            load[topology.links[index].dest] += sent
    return flows


def analytic_cycle_energy(topology: Topology, power: Sequence[int], distribution: Sequence[int],
                          generated: Mapping[int, int], listening: float = 0.0,
                          slots: Sequence[int] = None) -> float:
    """Energy of one lossless cycle: transmissions plus the listening constant per sensor."""
    flows = link_flows(topology, distribution, generated, slots)
    energy = sum(transmission_energy(f, power[i]) for i, f in enumerate(flows))
    return energy + listening * len(topology.sensors)


def oracle_expected_packet_loss(topology: Topology, distribution: Sequence[int],
                                traffic: Mapping[int, float], snr_means: Sequence[float],
                                snr_sigmas: Sequence[float] = None) -> float:
    """
    Exact expected loss of one packet sent by a randomly chosen source.

    The source is mote m with probability pTraffic(m) / sum(pTraffic). A
    packet survives a hop with probability 1 - f, f the expected link
    failure. Split mode routes to one parent with probability d/100;
    duplicate mode sends a copy to every parent with d > 0, and the packet
    arrives if any copy does.

    Raises:
        CycleDetected: routing graph is not acyclic
    """
    if not nx.is_directed_acyclic_graph(topology.graph):
        raise CycleDetected(f"Routing graph of {topology.name} contains a cycle")
    sigmas = snr_sigmas if snr_sigmas is not None else [0.0] * len(topology.links)
    survive = [1.0 - expected_link_failure(snr_means[i], sigmas[i]) for i in range(len(topology.links))]

    arrival: Dict[int, float] = {topology.gateway: 1.0}
    for mote in reversed(topology.child_first_order()):
        links = topology.parent_links(mote)
        weights = [distribution[i] / 100.0 for i in links]
        if is_duplicating([distribution[i] for i in links]):
            missed = 1.0
            for index, w in zip(links, weights):
                if w > 0:
                    missed *= 1.0 - survive[index] * arrival[topology.links[index].dest]
            arrival[mote] = 1.0 - missed
        else:
            arrival[mote] = sum(w * survive[index] * arrival[topology.links[index].dest]
                                for index, w in zip(links, weights))

    sources = [m for m in topology.sensors if traffic.get(m, 0.0) > 0]
    total = sum(traffic[m] for m in sources)
    if total == 0:
        return 0.0
    delivered = sum(traffic[m] / total * arrival[m] for m in sources)
    return float(min(1.0, max(0.0, 1.0 - delivered)))
