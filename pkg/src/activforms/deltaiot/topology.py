#!/usr/bin/env python
"""
DeltaIoT network topology: motes, directed links towards the gateway and the
per-link SNR calibration ``SNR = alpha + beta * power``.

Links keep a global index (their order in the topology file); every array
in the feedback-loop model and the quality models is indexed by it.

USAGE EXAMPLES:
    topology = load_topology('configs/topology_default.yaml')
    topology.parent_links(7)          # [5, 6]
    scaled_topology(25).option_count  # 7776
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Tuple, Union

import networkx as nx
import yaml

from src.activforms.deltaiot.errors import CycleDetected, DeltaIoTError, UnknownMote

logger = logging.getLogger(__name__)

MAX_POWER = 15
DISTRIBUTION_STEPS = (0, 20, 40, 60, 80, 100)
MAX_PARENTS = 2


@dataclass(frozen=True)
class Link:
    source: int
    dest: int
    snr_alpha: float
    snr_beta: float

    def predicted_snr(self, power: int) -> float:
        return self.snr_alpha + self.snr_beta * power


@dataclass(frozen=True)
class Topology:
    gateway: int
    motes: Tuple[int, ...]
    links: Tuple[Link, ...]
    name: str = field(default='topology', compare=False)

    def __post_init__(self):
        known = set(self.motes)
        if self.gateway not in known:
            raise UnknownMote(f"Gateway {self.gateway} is not a mote of {self.name}")
        for link in self.links:
            if link.source not in known or link.dest not in known:
                raise UnknownMote(f"Link {link.source}->{link.dest} refers to an unknown mote")
            if link.snr_beta <= 0:
                raise DeltaIoTError(f"Link {link.source}->{link.dest}: snr_beta must be positive")
        if not nx.is_directed_acyclic_graph(self.graph):
            raise CycleDetected(f"Routing graph of {self.name} contains a cycle: "
                                f"{nx.find_cycle(self.graph)}")
        for mote in self.sensors:
            parents = self.parent_links(mote)
            if not parents:
                raise DeltaIoTError(f"Mote {mote} has no route to the gateway")
            if len(parents) > MAX_PARENTS:
                raise DeltaIoTError(f"Mote {mote} has {len(parents)} parents (at most {MAX_PARENTS})")

    @cached_property
    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.motes)
        for index, link in enumerate(self.links):
            graph.add_edge(link.source, link.dest, index=index)
        return graph

    @property
    def sensors(self) -> List[int]:
        """Every mote except the gateway, in id order."""
        return [m for m in self.motes if m != self.gateway]

    @property
    def max_mote(self) -> int:
        return max(self.motes)

    def check_mote(self, mote: int) -> None:
        if mote not in self.motes:
            raise UnknownMote(f"Unknown mote {mote}")

    def parent_links(self, mote: int) -> List[int]:
        """Indices of the links leaving ``mote``, in global order."""
        self.check_mote(mote)
        return [i for i, link in enumerate(self.links) if link.source == mote]

    def parents(self, mote: int) -> List[int]:
        return [self.links[i].dest for i in self.parent_links(mote)]

    def children(self, mote: int) -> List[int]:
        self.check_mote(mote)
        return sorted(self.graph.predecessors(mote))

    @property
    def multi_parent_motes(self) -> List[int]:
        return [m for m in self.sensors if len(self.parent_links(m)) > 1]

    @property
    def option_count(self) -> int:
        return len(DISTRIBUTION_STEPS) ** len(self.multi_parent_motes)

    def child_first_order(self) -> List[int]:
        """Sensors ordered so that every mote comes before all of its parents."""
        order = list(nx.lexicographical_topological_sort(self.graph))
        return [m for m in order if m != self.gateway]

    def hops_to_gateway(self, mote: int) -> int:
        """Length of the shortest route from ``mote`` to the gateway."""
        return nx.shortest_path_length(self.graph, mote, self.gateway)

    def split_index(self) -> Dict[int, int]:
        """Multi-parent mote -> its digit position in an option number."""
        return {mote: k for k, mote in enumerate(self.multi_parent_motes)}

    def to_dict(self) -> Dict:
        return {'gateway': self.gateway, 'motes': list(self.motes),
                'links': [{'source': l.source, 'dest': l.dest, 'snr_alpha': l.snr_alpha,
                           'snr_beta': l.snr_beta} for l in self.links]}


def topology_from_dict(data: Dict, name: str = 'topology') -> Topology:
    try:
        links = tuple(Link(int(l['source']), int(l['dest']), float(l['snr_alpha']), float(l['snr_beta']))
                      for l in data['links'])
        motes = tuple(int(m) for m in data.get('motes') or
                      sorted({l.source for l in links} | {l.dest for l in links}))
        return Topology(gateway=int(data['gateway']), motes=motes, links=links, name=name)
    except KeyError as e:
        raise DeltaIoTError(f"Topology {name} lacks required field {e}") from None


def load_topology(path: Union[str, Path]) -> Topology:
    """Read a topology YAML file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Topology file not found: {path}")
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    topology = topology_from_dict(data, name=path.stem)
    logger.debug(f"Loaded {path}: {len(topology.motes)} motes, {len(topology.links)} links, "
                 f"{topology.option_count} adaptation options")
    return topology


# Default 15-mote deployment: (source, dest, alpha, beta) in global link order
DEFAULT_LINKS = (
    (2, 4, -3.6, 0.80), (3, 1, -2.2, 0.90), (4, 1, -4.2, 0.80), (5, 9, -2.9, 0.85),
    (6, 4, -4.85, 0.75), (7, 2, -7.29, 0.83), (7, 3, -3.9, 0.90), (8, 1, -1.4, 0.95),
    (9, 1, -2.5, 0.80), (10, 6, -6.0, 0.80), (10, 5, -4.6, 0.85), (11, 7, -3.5, 0.80),
    (12, 7, -6.0, 0.90), (12, 3, -2.8, 0.85), (13, 11, -2.2, 0.90), (14, 12, -4.4, 0.80),
    (15, 12, -3.8, 0.85),
)


def default_topology() -> Topology:
    links = tuple(Link(s, d, a, b) for s, d, a, b in DEFAULT_LINKS)
    return Topology(gateway=1, motes=tuple(range(1, 16)), links=links, name='default')


def scaled_topology(motes: int) -> Topology:
    """
    Synthetic topology with ``motes`` motes (gateway included).

    Mote i routes to the gateway when it is among the first four sensors,
    otherwise to mote i-4. Every mote whose id is a multiple of five gets a
    second parent, so each block of five motes holds one two-parent mote and
    the adaptation space has 6^(motes/5) options. 15 motes gives the default
    deployment.
    """
    if motes == 15:
        return default_topology()
    if motes < 2:
        raise DeltaIoTError("A scaled topology needs the gateway and at least one mote")
    links = []
    for mote in range(2, motes + 1):
        primary = 1 if mote - 2 < 4 else mote - 4
        alpha = -2.0 - (mote % 4) * 1.1
        beta = 0.8 + (mote % 3) * 0.05
        links.append(Link(mote, primary, alpha, beta))
        if mote % 5 == 0:
            second = mote - 1 if mote - 1 != primary and mote - 1 >= 2 else 1
            if second == primary:
                second = mote - 2
            links.append(Link(mote, second, alpha + 1.0, beta))
    return Topology(gateway=1, motes=tuple(range(1, motes + 1)), links=tuple(links),
                    name=f"scaled_{motes}")
