#!/usr/bin/env python
"""
Discrete-event simulator of the DeltaIoT network, one cycle at a time.

Per cycle: pending settings take effect, link SNRs are resampled, motes
generate packets, then every mote (children before parents) moves its
buffer and receive queue into the send queue and transmits over its parent
links within each link's slot capacity. Packets lost in the air or dropped
at full queues are counted; packets reaching the gateway are delivered.

USAGE EXAMPLES:
    simulator = DeltaIoTSimulator(load_topology(...), load_profile(...), seed=42)
    record = simulator.simulate_cycle()
    print(record.packet_loss, record.energy_consumption, record.latency)
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.activforms.deltaiot.errors import UnknownMote
from src.activforms.deltaiot.profiles import UncertaintyProfile
from src.activforms.deltaiot.quality import (
    apportion, check_distribution, check_power, clamp_snr, is_duplicating, link_failure_rate,
    listening_energy, transmission_energy,
)
from src.activforms.deltaiot.topology import MAX_POWER, Topology

logger = logging.getLogger(__name__)

CYCLE_SECONDS = 570  # 285 slots of 2 seconds

Packet = Tuple[int, int]  # (packet id, cycle generated)


@dataclass
class MoteState:
    id: int
    buffer: List[Packet] = field(default_factory=list)
    receive_queue: Deque[Packet] = field(default_factory=deque)
    send_queue: Deque[Packet] = field(default_factory=deque)
    p_traffic: float = 0.0
    traffic: int = 0
    energy_consumed: float = 0.0
    queue_loss: int = 0

    @property
    def queued(self) -> int:
        return len(self.buffer) + len(self.receive_queue) + len(self.send_queue)


@dataclass
class CycleCounters:
    """Packet copies entering and leaving the network in one cycle."""
    carried_in: int = 0
    generated: int = 0
    duplicated: int = 0
    delivered: int = 0
    lost_in_air: int = 0
    dropped: int = 0
    queued: int = 0

    @property
    def balanced(self) -> bool:
        return (self.carried_in + self.generated + self.duplicated
                == self.delivered + self.lost_in_air + self.dropped + self.queued)


@dataclass(frozen=True)
class QoSRecord:
    period: int
    packet_loss: float
    energy_consumption: float
    latency: float
    configuration: int = 0


@dataclass(frozen=True)
class LinkSetting:
    source: int
    destination: int
    power: int
    distribution: int


class DeltaIoTSimulator:
    """
    Managed system: the simulated IoT network.

    Args:
        topology: Motes and links
        profile: SNR noise, traffic schedules and capacities
        seed: Base seed; cycle c draws from default_rng([seed, c])
        listening: Per-sensor listening energy per cycle (coulomb)
    """

    def __init__(self, topology: Topology, profile: UncertaintyProfile, seed: int = 42,
                 listening: Optional[float] = None):
        self.topology = topology
        self.profile = profile
        self.seed = seed
        self.listening = listening_energy() if listening is None else listening
        self.logger = logging.getLogger(__name__)
        self.motes: Dict[int, MoteState] = {m: MoteState(m) for m in topology.motes}
        self.slots = profile.slots(topology)
        self.power: List[int] = []
        self.distribution: List[int] = []
        self.reset_settings()
        self.pending: Dict[int, List[int]] = {}
        self.snr: List[float] = [link.predicted_snr(p) for link, p in zip(topology.links, self.power)]
        self.cycle = 0
        self.configuration = 0
        self.history: List[QoSRecord] = []
        self.counters: List[CycleCounters] = []
        self.stats = Counter()
        self._next_packet = 0
        self._alive: Dict[int, int] = {}
        self._delivered: Dict[int, bool] = {}

    # ---------------------------------------------------------------- settings

    def reset_settings(self) -> None:
        """Reference configuration: maximum power, every packet duplicated to every parent."""
        self.power, self.distribution = self.reference_settings()

    def reference_settings(self) -> Tuple[List[int], List[int]]:
        return [MAX_POWER] * len(self.topology.links), [100] * len(self.topology.links)

    def set_link(self, index: int, power: int, distribution: int) -> None:
        """Schedule a link's settings for the next cycle."""
        self.pending[index] = [check_power(power), check_distribution(distribution)]

    def set_mote_settings(self, mote: int, settings: Sequence[LinkSetting]) -> None:
        if mote not in self.topology.motes or mote == self.topology.gateway:
            raise UnknownMote(f"Unknown mote {mote}")
        links = {self.topology.links[i].dest: i for i in self.topology.parent_links(mote)}
        for setting in settings:
            if setting.source != mote or setting.destination not in links:
                raise UnknownMote(f"Mote {mote} has no link to {setting.destination}")
            self.set_link(links[setting.destination], setting.power, setting.distribution)

    def reset_default_configuration(self) -> None:
        power, distribution = self.reference_settings()
        for index in range(len(self.topology.links)):
            self.pending[index] = [power[index], distribution[index]]

    def _apply_pending(self) -> None:
        for index, (power, distribution) in self.pending.items():
            self.power[index] = power
            self.distribution[index] = distribution
        if self.pending:
            self.stats['settings_applied'] += len(self.pending)
            self.configuration += 1
        self.pending = {}

    # ---------------------------------------------------------------- packets

    def _new_packet(self) -> Packet:
        pid = self._next_packet
        self._next_packet += 1
        self._alive[pid] = 1
        self._delivered[pid] = False
        return pid, self.cycle

    def _copy_ends(self, pid: int, delivered: bool, tally: Counter) -> None:
        self._alive[pid] -= 1
        if delivered and not self._delivered[pid]:
            self._delivered[pid] = True
            tally['unique_delivered'] += 1
        if self._alive[pid] == 0:
            if not self._delivered[pid]:
                tally['packets_lost'] += 1
            del self._alive[pid]
            del self._delivered[pid]

    def _receive(self, mote: int, packet: Packet, counters: CycleCounters, tally: Counter) -> None:
        if mote == self.topology.gateway:
            counters.delivered += 1
            pid, generated = packet
            if not self._delivered[pid]:
                tally['latent'] += int(self.cycle > generated)
            self._copy_ends(pid, True, tally)
            return
        state = self.motes[mote]
        if len(state.receive_queue) >= self.profile.receive_queue_capacity:
            counters.dropped += 1
            state.queue_loss += 1
            self._copy_ends(packet[0], False, tally)
            return
        state.receive_queue.append(packet)

    # ---------------------------------------------------------------- cycle

    def simulate_cycle(self) -> QoSRecord:
        """Run one cycle and return its QoS record."""
        rng = np.random.default_rng([self.seed, self.cycle])
        self._apply_pending()
        counters = CycleCounters(carried_in=sum(s.queued for s in self.motes.values()))
        tally = Counter()
        energy = 0.0

        for index, link in enumerate(self.topology.links):
            noise = self.profile.link_noise_for(index)
            sample = rng.normal(noise.mean, noise.sigma) if noise.sigma > 0 else noise.mean
            self.snr[index] = clamp_snr(link.predicted_snr(self.power[index]) + sample)

        for mote in self.topology.sensors:
            state = self.motes[mote]
            state.p_traffic = self.profile.traffic_at(mote, self.cycle)
            state.traffic = 0
            if rng.random() < state.p_traffic:
                state.traffic = self.profile.packets_per_cycle
                state.buffer.extend(self._new_packet() for _ in range(state.traffic))
                counters.generated += state.traffic

        for mote in self.topology.child_first_order():
            state = self.motes[mote]
            mote_energy = self.listening
            for packet in [*state.buffer, *state.receive_queue]:
                if len(state.send_queue) >= self.profile.send_queue_capacity:
                    counters.dropped += 1
                    state.queue_loss += 1
                    self._copy_ends(packet[0], False, tally)
                else:
                    state.send_queue.append(packet)
            state.buffer.clear()
            state.receive_queue.clear()
            mote_energy += self._transmit(mote, state, rng, counters, tally)
            state.energy_consumed = mote_energy
            energy += mote_energy

        counters.queued = sum(s.queued for s in self.motes.values())
        delivered = tally['unique_delivered']
        packet_loss = tally['packets_lost'] / counters.generated if counters.generated else 0.0
        record = QoSRecord(period=self.cycle, packet_loss=min(1.0, packet_loss), energy_consumption=energy,
                           latency=tally['latent'] / delivered if delivered else 0.0,
                           configuration=self.configuration)
        if not counters.balanced:
            self.logger.warning(f"Cycle {self.cycle}: packet copies do not balance: {counters}")
        self.history.append(record)
        self.counters.append(counters)
        self.stats['cycles'] += 1
        self.stats['generated'] += counters.generated
        self.stats['delivered'] += delivered
        self.stats['lost'] += tally['packets_lost']
        self.cycle += 1
        return record

    def _transmit(self, mote: int, state: MoteState, rng: np.random.Generator,
                  counters: CycleCounters, tally: Counter) -> float:
        links = self.topology.parent_links(mote)
        shares = [self.distribution[i] for i in links]
        queue = state.send_queue
        energy = 0.0
        sends: List[Tuple[int, List[Packet]]] = []
        if is_duplicating(shares):
            active = [i for i in links if self.distribution[i] > 0]
            count = min([len(queue)] + [self.slots[i] for i in active])
            batch = [queue.popleft() for _ in range(count)]
            cut = {i: len(batch) * self.distribution[i] // 100 for i in active}
            unsent: List[Packet] = []
            for position, packet in enumerate(batch):
                copies = sum(1 for i in active if position < cut[i])
                if copies == 0:
                    unsent.append(packet)
                elif copies > 1:
                    self._alive[packet[0]] += copies - 1
                    counters.duplicated += copies - 1
            queue.extendleft(reversed(unsent))
            for i in active:
                sends.append((i, batch[:cut[i]]))
        else:
            left_over: List[Packet] = []
            for i, share in zip(links, apportion(len(queue), shares)):
                taken = [queue.popleft() for _ in range(share)]
                sends.append((i, taken[:self.slots[i]]))
                left_over.extend(taken[self.slots[i]:])
            queue.extendleft(reversed(left_over))

        for index, packets in sends:
            if not packets:
                continue
            energy += transmission_energy(len(packets), self.power[index])
            failure = link_failure_rate(self.snr[index])
            dest = self.topology.links[index].dest
            for packet in packets:
                if rng.random() < failure:
                    counters.lost_in_air += 1
                    self._copy_ends(packet[0], False, tally)
                else:
                    self._receive(dest, packet, counters, tally)
        return energy

    def run(self, cycles: int) -> List[QoSRecord]:
        return [self.simulate_cycle() for _ in range(cycles)]

    def settings(self) -> Tuple[List[int], List[int]]:
        return list(self.power), list(self.distribution)

    def print_statistics(self) -> None:
        generated = self.stats['generated']
        print(f"\nDeltaIoT simulation ({self.topology.name}, {self.profile.name}):")
        print(f"  Cycles: {self.stats['cycles']}")
        print(f"  Packets generated: {generated}, delivered: {self.stats['delivered']}, "
              f"lost: {self.stats['lost']}")
        if generated:
            print(f"  Overall loss: {self.stats['lost'] / generated:.2%}")

    def history_frame(self) -> pd.DataFrame:
        """Per-cycle QoS as a DataFrame (cycle, packet_loss, energy, latency, configuration)."""
        return pd.DataFrame([{'cycle': r.period, 'packet_loss': r.packet_loss,
                              'energy': r.energy_consumption, 'latency': r.latency,
                              'configuration': r.configuration} for r in self.history],
                            columns=['cycle', 'packet_loss', 'energy', 'latency', 'configuration'])

    def export_qos(self, path) -> None:
        self.history_frame().to_csv(path, index=False)
        self.logger.info(f"QoS of {len(self.history)} cycles written to {path}")
