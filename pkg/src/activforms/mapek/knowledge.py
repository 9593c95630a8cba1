#!/usr/bin/env python
"""
Knowledge of the feedback loop: the network settings, the observed qualities
and the uncertainties (link SNR, mote traffic, queue occupancy).

The monitor turns a probe sample into an ``Observation`` (every array in
global link order) and ``update_knowledge`` folds it into the knowledge,
deciding whether the analyzer has to run. Link SNR is tracked as the
interference on top of the calibrated ``alpha + beta * power``; the
interference of the last few cycles is averaged, so a single noisy sample
does not trigger an adaptation.

USAGE EXAMPLES:
    knowledge = Knowledge.initial(topology, snr_window=5)
    observation = observe(topology, probe.get_all_motes(), probe.get_network_qos(1)[-1])
    update = update_knowledge(knowledge, observation, snr_dead_band=1.0)
    if update.analysis_required:
        ...
"""

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.activforms.deltaiot.binding import UncertaintySnapshot
from src.activforms.deltaiot.probe import MoteDescriptor
from src.activforms.deltaiot.simulator import QoSRecord
from src.activforms.deltaiot.topology import MAX_POWER, Topology
from src.activforms.engine.errors import SchemaMismatch
from src.activforms.mapek.errors import TopologyMismatch

logger = logging.getLogger(__name__)

QUEUE_DEAD_BAND = 5


@dataclass(frozen=True)
class NetworkSettings:
    """Per-link power and distribution, in global link order."""
    power: Tuple[int, ...]
    distribution: Tuple[int, ...]

    def __post_init__(self):
        if len(self.power) != len(self.distribution):
            raise TopologyMismatch(f"{len(self.power)} power settings for "
                                   f"{len(self.distribution)} distributions")

    @classmethod
    def reference(cls, topology: Topology) -> 'NetworkSettings':
        """Maximum power, every packet duplicated to every parent."""
        n = len(topology.links)
        return cls((MAX_POWER,) * n, (100,) * n)

    def check(self, topology: Topology) -> None:
        if len(self.power) != len(topology.links):
            raise TopologyMismatch(f"Settings cover {len(self.power)} links, "
                                   f"topology {topology.name} has {len(topology.links)}")


@dataclass(frozen=True)
class Observation:
    """One probe sample. Packet loss and latency are percentages."""
    settings: NetworkSettings
    snr: Tuple[float, ...]
    traffic: Dict[int, float]
    queue: Dict[int, int]
    packet_loss: float
    energy: float
    latency: float
    period: int = 0


def observe(topology: Topology, motes: Sequence[MoteDescriptor], qos: QoSRecord) -> Observation:
    """
    Arrange a probe sample by global link index.

    Raises:
        SchemaMismatch: a reported link is not in the topology, or a link is
            not reported
    """
    index = {(link.source, link.dest): i for i, link in enumerate(topology.links)}
    n = len(topology.links)
    power: List[Optional[int]] = [None] * n
    distribution: List[Optional[int]] = [None] * n
    snr: List[Optional[float]] = [None] * n
    traffic, queue = {}, {}
    for mote in motes:
        traffic[mote.moteid] = float(mote.load)
        queue[mote.moteid] = int(mote.queue_size)
        for link in mote.links:
            key = (link.source, link.destination)
            if key not in index:
                raise SchemaMismatch(f"Probe reports unknown link {key[0]}->{key[1]}")
            i = index[key]
            power[i], distribution[i], snr[i] = link.power, link.distribution, link.snr
    missing = [f"{topology.links[i].source}->{topology.links[i].dest}" for i in range(n) if power[i] is None]
    if missing:
        raise SchemaMismatch(f"Probe sample lacks link(s) {missing}")
    return Observation(settings=NetworkSettings(tuple(power), tuple(distribution)), snr=tuple(snr),
                       traffic=traffic, queue=queue, packet_loss=qos.packet_loss * 100.0,
                       energy=qos.energy_consumption, latency=qos.latency * 100.0, period=qos.period)


@dataclass
class Knowledge:
    topology: Topology
    settings: NetworkSettings
    applied: NetworkSettings
    interference: List[Deque[float]]
    traffic: Dict[int, float] = field(default_factory=dict)
    queue: Dict[int, int] = field(default_factory=dict)
    packet_loss: float = 0.0
    energy: float = 0.0
    latency: float = 0.0
    initialized: bool = False
    snr_window: int = 5

    @classmethod
    def initial(cls, topology: Topology, settings: Optional[NetworkSettings] = None,
                snr_window: int = 5) -> 'Knowledge':
        settings = settings or NetworkSettings.reference(topology)
        settings.check(topology)
        return cls(topology=topology, settings=settings, applied=settings,
                   interference=[deque(maxlen=snr_window) for _ in topology.links],
                   snr_window=snr_window)

    def expected_interference(self, link: int) -> float:
        window = self.interference[link]
        return float(np.mean(window)) if window else 0.0

    @property
    def snr(self) -> List[float]:
        """Smoothed SNR of every link at its current power."""
        return [link.predicted_snr(p) + self.expected_interference(i)
                for i, (link, p) in enumerate(zip(self.topology.links, self.settings.power))]

    def snr_sigma(self) -> List[float]:
        return [float(np.std(w)) if len(w) > 1 else 0.0 for w in self.interference]

    def snapshot(self, packets_per_cycle: int = 10, slots: Sequence[int] = (),
                 listening: float = 0.0) -> UncertaintySnapshot:
        """Uncertainties handed to the quality models."""
        return UncertaintySnapshot(topology=self.topology, traffic=dict(self.traffic),
                                   snr_sigma=self.snr_sigma(), queue=dict(self.queue),
                                   slots=tuple(slots), packets_per_cycle=packets_per_cycle,
                                   listening=listening)


@dataclass(frozen=True)
class KnowledgeUpdate:
    knowledge: Knowledge
    analysis_required: bool
    reasons: Tuple[str, ...] = ()


def _interference(topology: Topology, snr: Sequence[float], power: Sequence[int]) -> List[float]:
    return [s - link.predicted_snr(p) for link, s, p in zip(topology.links, snr, power)]


def analyze_system_settings(knowledge: Knowledge, observation: Observation) -> bool:
    """The network does not run the configuration of the last plan."""
    return observation.settings != knowledge.applied


def analyze_packet_loss(knowledge: Knowledge, observation: Observation) -> bool:
    return observation.packet_loss != knowledge.packet_loss


def analyze_energy_consumption(knowledge: Knowledge, observation: Observation) -> bool:
    return observation.energy != knowledge.energy


def analyze_latency(knowledge: Knowledge, observation: Observation) -> bool:
    return observation.latency != knowledge.latency


def analyze_links_snr(knowledge: Knowledge, windows: Sequence[Sequence[float]], dead_band: float) -> bool:
    """Smoothed interference of some link moved by at least ``dead_band`` dB."""
    for link, window in enumerate(windows):
        if abs(float(np.mean(window)) - knowledge.expected_interference(link)) >= dead_band:
            return True
    return False


def analyze_motes_traffic(knowledge: Knowledge, observation: Observation, dead_band: float) -> bool:
    motes = set(knowledge.traffic) | set(observation.traffic)
    return any(abs(observation.traffic.get(m, 0.0) - knowledge.traffic.get(m, 0.0)) >= dead_band
               for m in motes)


def analyze_queues_per_mote(knowledge: Knowledge, observation: Observation,
                            dead_band: int = QUEUE_DEAD_BAND) -> bool:
    motes = set(knowledge.queue) | set(observation.queue)
    return any(abs(observation.queue.get(m, 0) - knowledge.queue.get(m, 0)) >= dead_band for m in motes)


def update_knowledge(knowledge: Knowledge, observation: Observation, snr_dead_band: float = 1.0,
                     traffic_dead_band: float = 0.05, latency: bool = False) -> KnowledgeUpdate:
    """
    Replace qualities and uncertainties with the latest observation.

    Analysis is required when the settings drift from the last applied plan,
    a quality changed, or an uncertainty moved beyond its dead-band. The
    first observation always requires analysis.

    Args:
        knowledge: Current knowledge (left unchanged)
        observation: Latest probe sample
        snr_dead_band: Minimum change of smoothed interference (dB)
        traffic_dead_band: Minimum change of a mote's pTraffic
        latency: Also analyze latency and queue occupancy

    Returns:
        KnowledgeUpdate with the new knowledge
    """
    topology = knowledge.topology
    observation.settings.check(topology)
    sample = _interference(topology, observation.snr, observation.settings.power)
    windows = []
    for window, value in zip(knowledge.interference, sample):
        extended = deque(window, maxlen=knowledge.snr_window)
        extended.append(value)
        windows.append(extended)

    reasons = []
    if analyze_system_settings(knowledge, observation):
        reasons.append('settings')
    if analyze_packet_loss(knowledge, observation) or analyze_energy_consumption(knowledge, observation) \
            or (latency and analyze_latency(knowledge, observation)):
        reasons.append('qualities')
    if not knowledge.initialized or analyze_links_snr(knowledge, windows, snr_dead_band) \
            or analyze_motes_traffic(knowledge, observation, traffic_dead_band) \
            or (latency and analyze_queues_per_mote(knowledge, observation)):
        reasons.append('uncertainties')

    updated = replace(knowledge, settings=observation.settings, interference=windows,
                      traffic=dict(observation.traffic), queue=dict(observation.queue),
                      packet_loss=observation.packet_loss, energy=observation.energy,
                      latency=observation.latency, initialized=True)
    if reasons:
        logger.debug(f"Cycle {observation.period}: analysis required ({', '.join(reasons)})")
    return KnowledgeUpdate(updated, bool(reasons), tuple(reasons))
