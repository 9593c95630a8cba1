#!/usr/bin/env python
"""
Probe and effector of the simulated DeltaIoT network.

The four client methods of the network (getAllMotes, getNetworkQoS,
setMoteSettings, resetDefaultConfiguration) are exposed in-process on
``DeltaIoTProbe`` and ``DeltaIoTEffector``.

USAGE EXAMPLES:
    probe, effector = DeltaIoTProbe(simulator), DeltaIoTEffector(simulator)
    motes = probe.get_all_motes()
    effector.set_mote_settings(7, [LinkSetting(7, 2, 5, 40), LinkSetting(7, 3, 5, 60)])
    probe.get_network_qos('12h', aggregate=True)
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import List, Sequence, Union

from src.activforms.deltaiot.errors import UnknownPeriod
from src.activforms.deltaiot.simulator import CYCLE_SECONDS, DeltaIoTSimulator, LinkSetting, QoSRecord

logger = logging.getLogger(__name__)

SPREADING_FACTOR = 8
DURATION = re.compile(r'^\s*(\d+(?:\.\d+)?)\s*([smhd])\s*$')
UNIT_SECONDS = {'s': 1, 'm': 60, 'h': 3600, 'd': 86400}


@dataclass(frozen=True)
class LinkDescriptor:
    source: int
    destination: int
    power: int
    sf: int
    snr: float
    distribution: int


@dataclass(frozen=True)
class MoteDescriptor:
    moteid: int
    load: float  # pTraffic of the current cycle
    traffic: int  # packets generated in the last cycle, 0..10
    energy_level: float  # coulomb spent in the last cycle
    queue_size: int
    links: List[LinkDescriptor]


def period_cycles(period: Union[int, str]) -> int:
    """
    Number of cycles in ``period``.

    Args:
        period: A cycle count or a duration such as '12h', '30m' or '570s'

    Raises:
        UnknownPeriod: period is not a positive count or a duration
    """
    if isinstance(period, str):
        match = DURATION.match(period)
        if not match:
            raise UnknownPeriod(f"Cannot read period '{period}'")
        seconds = float(match.group(1)) * UNIT_SECONDS[match.group(2)]
        cycles = int(round(seconds / CYCLE_SECONDS))
    else:
        cycles = int(period)
    if cycles < 1:
        raise UnknownPeriod(f"Period {period!r} covers no cycle")
    return cycles


def aggregate_qos(records: Sequence[QoSRecord]) -> QoSRecord:
    """Mean packet loss and latency, total energy."""
    n = len(records)
    return QoSRecord(period=records[-1].period,
                     packet_loss=sum(r.packet_loss for r in records) / n,
                     energy_consumption=sum(r.energy_consumption for r in records),
                     latency=sum(r.latency for r in records) / n,
                     configuration=records[-1].configuration)


class DeltaIoTProbe:
    def __init__(self, simulator: DeltaIoTSimulator):
        self.simulator = simulator
        self.logger = logging.getLogger(__name__)

    def get_all_motes(self) -> List[MoteDescriptor]:
        """Descriptors of every non-gateway mote for the last completed cycle."""
        sim = self.simulator
        topology = sim.topology
        motes = []
        for mote in topology.sensors:
            state = sim.motes[mote]
            links = [LinkDescriptor(source=mote, destination=topology.links[i].dest, power=sim.power[i],
                                    sf=SPREADING_FACTOR, snr=sim.snr[i], distribution=sim.distribution[i])
                     for i in topology.parent_links(mote)]
            motes.append(MoteDescriptor(
                moteid=mote,
                load=sim.profile.traffic_at(mote, max(sim.cycle - 1, 0)),
                traffic=state.traffic,
                energy_level=state.energy_consumed,
                queue_size=state.queued,
                links=links))
        return motes

    def get_network_qos(self, period: Union[int, str], aggregate: bool = False) -> List[QoSRecord]:
        """
        QoS of the last ``period`` completed cycles.

        Returns:
            One record per cycle, or a single aggregated record; empty when
            no cycle has completed
        """
        cycles = period_cycles(period)
        records = self.simulator.history[-cycles:]
        if not records:
            return []
        if aggregate:
            return [aggregate_qos(records)]
        return list(records)


class DeltaIoTEffector:
    def __init__(self, simulator: DeltaIoTSimulator):
        self.simulator = simulator
        self.logger = logging.getLogger(__name__)

    def set_mote_settings(self, mote: int, link_settings: Sequence[LinkSetting]) -> None:
        """Apply link settings of ``mote`` from the next cycle on."""
        self.simulator.set_mote_settings(mote, link_settings)
        self.logger.debug(f"Mote {mote}: {[(s.destination, s.power, s.distribution) for s in link_settings]}")

    def reset_default_configuration(self) -> None:
        self.simulator.reset_default_configuration()
        self.logger.info("Network reset to the reference configuration")
