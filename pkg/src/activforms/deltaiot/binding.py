#!/usr/bin/env python
"""
Binding of quality-model templates to observed uncertainties.

Quality models (models/quality/*.ta) declare their topology, settings and
uncertainties as parameter slots. ``bind_uncertainties`` fills them from a
snapshot of the knowledge and one adaptation option, yielding a closed
stochastic network for the statistical model checker.

Slots understood:
    n_motes, n_links, n_sensors, gateway, link_source, link_dest, order,
    power, distribution, snr_mean, snr_sigma, traffic, queue, slots,
    packets, listening
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Sequence

from src.activforms.deltaiot.topology import Topology
from src.activforms.model.errors import UnboundParameter
from src.activforms.model.network import ModelNetwork

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UncertaintySnapshot:
    """Uncertainties as last observed by the monitor."""
    topology: Topology
    traffic: Mapping[int, float]
    snr_sigma: Sequence[float]
    queue: Mapping[int, int] = field(default_factory=dict)
    slots: Sequence[int] = ()
    packets_per_cycle: int = 10
    listening: float = 0.0


def topology_bindings(topology: Topology) -> Dict[str, Any]:
    """Slots describing the routing structure; arrays over motes are indexed by mote id."""
    return {
        'n_motes': topology.max_mote + 1,
        'n_links': len(topology.links),
        'n_sensors': len(topology.sensors),
        'gateway': topology.gateway,
        'link_source': [l.source for l in topology.links],
        'link_dest': [l.dest for l in topology.links],
        'order': topology.child_first_order(),
    }


def uncertainty_bindings(snapshot: UncertaintySnapshot, option) -> Dict[str, Any]:
    """
    All slot values for ``option`` under ``snapshot``.

    Args:
        snapshot: Observed uncertainties
        option: Object with per-link ``power``, ``distribution`` and expected ``snr``
    """
    topology = snapshot.topology
    size = topology.max_mote + 1
    values = topology_bindings(topology)
    values.update({
        'power': [int(p) for p in option.power],
        'distribution': [int(d) for d in option.distribution],
        'snr_mean': [float(s) for s in option.snr],
        'snr_sigma': [float(s) for s in snapshot.snr_sigma],
        'traffic': [float(snapshot.traffic.get(m, 0.0)) if m != topology.gateway else 0.0
                    for m in range(size)],
        'queue': [int(snapshot.queue.get(m, 0)) for m in range(size)],
        'slots': [int(s) for s in snapshot.slots] or [40] * len(topology.links),
        'packets': int(snapshot.packets_per_cycle),
        'listening': float(snapshot.listening),
    })
    return values


def bind_uncertainties(template: ModelNetwork, snapshot: UncertaintySnapshot, option) -> ModelNetwork:
    """
    Close a quality-model template for one adaptation option.

    Only the slots the template references are bound, so two options give
    networks that differ in their power, distribution and SNR constants alone.

    Raises:
        UnboundParameter: the template uses slots this binder cannot fill
    """
    values = uncertainty_bindings(snapshot, option)
    wanted = template.slots()
    missing = [s for s in wanted if s not in values and s not in template.binding_map()]
    if missing:
        raise UnboundParameter(missing)
    return template.bind({name: values[name] for name in wanted if name in values})
