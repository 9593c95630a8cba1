#!/usr/bin/env python
"""
Uncertainty profiles: per-link SNR noise and per-mote traffic schedules.

A traffic schedule is a list of pTraffic values; cycle c uses entry
c mod len(schedule).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import yaml

from src.activforms.deltaiot.errors import DeltaIoTError
from src.activforms.deltaiot.topology import Topology

logger = logging.getLogger(__name__)

MAX_QUEUE_CAPACITY = 60


@dataclass(frozen=True)
class SNRNoise:
    mean: float = 0.0
    sigma: float = 2.0


@dataclass
class UncertaintyProfile:
    noise: SNRNoise = field(default_factory=SNRNoise)
    link_noise: Dict[int, SNRNoise] = field(default_factory=dict)
    default_traffic: Tuple[float, ...] = (0.75,)
    traffic: Dict[int, Tuple[float, ...]] = field(default_factory=dict)
    packets_per_cycle: int = 10
    slots_per_link: int = 40
    link_slots: Dict[int, int] = field(default_factory=dict)
    send_queue_capacity: int = 60
    receive_queue_capacity: int = 60
    name: str = 'profile'

    def __post_init__(self):
        for noise in [self.noise, *self.link_noise.values()]:
            if noise.sigma < 0:
                raise DeltaIoTError(f"{self.name}: SNR noise sigma must be non-negative")
        for schedule in [self.default_traffic, *self.traffic.values()]:
            if not schedule or any(not 0.0 <= p <= 1.0 for p in schedule):
                raise DeltaIoTError(f"{self.name}: traffic probabilities must lie in [0, 1]")
        for capacity in (self.send_queue_capacity, self.receive_queue_capacity):
            if not 1 <= capacity <= MAX_QUEUE_CAPACITY:
                raise DeltaIoTError(f"{self.name}: queue capacity must lie in [1, {MAX_QUEUE_CAPACITY}], "
                                    f"got {capacity}")

    def link_noise_for(self, link: int) -> SNRNoise:
        return self.link_noise.get(link, self.noise)

    def traffic_at(self, mote: int, cycle: int) -> float:
        schedule = self.traffic.get(mote, self.default_traffic)
        return schedule[cycle % len(schedule)]

    def slots(self, topology: Topology) -> List[int]:
        return [self.link_slots.get(i, self.slots_per_link) for i in range(len(topology.links))]

    def noise_sigmas(self, topology: Topology) -> List[float]:
        return [self.link_noise_for(i).sigma for i in range(len(topology.links))]


def profile_from_dict(data: Dict, name: str = 'profile') -> UncertaintyProfile:
    noise = data.get('snr_noise') or {}
    traffic = data.get('traffic') or {}
    return UncertaintyProfile(
        noise=SNRNoise(float(noise.get('mean', 0.0)), float(noise.get('sigma', 2.0))),
        link_noise={int(k): SNRNoise(float(v.get('mean', 0.0)), float(v.get('sigma', 2.0)))
                    for k, v in (data.get('link_noise') or {}).items()},
        default_traffic=tuple(float(p) for p in traffic.get('default', [0.75])),
        traffic={int(k): tuple(float(p) for p in v) for k, v in (traffic.get('motes') or {}).items()},
        packets_per_cycle=int(data.get('packets_per_cycle', 10)),
        slots_per_link=int(data.get('slots_per_link', 40)),
        link_slots={int(k): int(v) for k, v in (data.get('link_slots') or {}).items()},
        send_queue_capacity=int(data.get('send_queue_capacity', 60)),
        receive_queue_capacity=int(data.get('receive_queue_capacity', 60)),
        name=name)


def load_profile(path: Union[str, Path]) -> UncertaintyProfile:
    """Read an uncertainty profile YAML file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Profile file not found: {path}")
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    return profile_from_dict(data, name=path.stem)
