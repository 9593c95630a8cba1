#!/usr/bin/env python
"""
Planning and execution of network reconfigurations.

A plan holds one CHANGE_POWER step per link whose power changes and one
CHANGE_DISTRIBUTION step per link whose distribution changes, grouped by
mote. Execution sends each mote's new link settings to the effector once.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

from src.activforms.deltaiot.probe import DeltaIoTEffector
from src.activforms.deltaiot.quality import check_distribution, check_power
from src.activforms.deltaiot.simulator import LinkSetting
from src.activforms.deltaiot.topology import Topology
from src.activforms.mapek.errors import TopologyMismatch
from src.activforms.mapek.knowledge import NetworkSettings

logger = logging.getLogger(__name__)

CHANGE_POWER, CHANGE_DISTRIBUTION = 'CHANGE_POWER', 'CHANGE_DISTRIBUTION'


@dataclass(frozen=True)
class Step:
    kind: str
    mote: int
    link: int
    value: int

    def __str__(self) -> str:
        return f"{{{self.kind}, mote{self.mote}, link{self.link}, {self.value}}}"


@dataclass
class Plan:
    target: NetworkSettings
    steps: List[Step] = field(default_factory=list)
    failsafe: bool = False

    @property
    def empty(self) -> bool:
        return not self.steps and not self.failsafe

    def motes(self) -> List[int]:
        return list(dict.fromkeys(step.mote for step in self.steps))

    def for_mote(self, mote: int) -> 'Plan':
        return Plan(self.target, [s for s in self.steps if s.mote == mote])

    def apply(self, settings: NetworkSettings) -> NetworkSettings:
        """Settings after every step is enacted on ``settings``."""
        power, distribution = list(settings.power), list(settings.distribution)
        for step in self.steps:
            if step.kind == CHANGE_POWER:
                power[step.link] = step.value
            else:
                distribution[step.link] = step.value
        return NetworkSettings(tuple(power), tuple(distribution))


def build_plan(current: NetworkSettings, target: NetworkSettings, topology: Topology,
               failsafe: bool = False) -> Plan:
    """
    Steps that turn ``current`` into ``target``.

    Raises:
        TopologyMismatch: the settings do not cover the topology's links
        SettingsRangeError: a target value is out of range
    """
    current.check(topology)
    target.check(topology)
    plan = Plan(target, failsafe=failsafe)
    for mote in topology.sensors:
        for link in topology.parent_links(mote):
            if current.power[link] != target.power[link]:
                plan.steps.append(Step(CHANGE_POWER, mote, link, check_power(target.power[link])))
            if current.distribution[link] != target.distribution[link]:
                plan.steps.append(Step(CHANGE_DISTRIBUTION, mote, link,
                                       check_distribution(target.distribution[link])))
    logger.debug(f"Plan with {len(plan.steps)} steps over motes {plan.motes()}")
    return plan


def mote_settings(plan: Plan, mote: int, topology: Topology) -> List[LinkSetting]:
    """Target settings of the links of ``mote`` touched by the plan."""
    links = sorted({s.link for s in plan.steps if s.mote == mote})
    for link in links:
        if topology.links[link].source != mote:
            raise TopologyMismatch(f"Link {link} does not leave mote {mote}")
    return [LinkSetting(mote, topology.links[link].dest, plan.target.power[link], plan.target.distribution[link])
            for link in links]


def execute_plan(plan: Plan, effector: DeltaIoTEffector, topology: Topology) -> Tuple[int, ...]:
    """
    Issue one setMoteSettings per planned mote.

    A failsafe plan resets the network to its reference configuration.
    Effector failures are not retried; the monitor sees the drift next cycle.

    Returns:
        Motes the effector was invoked for
    """
    if plan.failsafe:
        effector.reset_default_configuration()
        return ()
    invoked = []
    for mote in plan.motes():
        effector.set_mote_settings(mote, mote_settings(plan, mote, topology))
        invoked.append(mote)
    if invoked:
        logger.info(f"Executed {len(plan.steps)} steps on motes {invoked}")
    return tuple(invoked)
