#!/usr/bin/env python
"""
Adaptation goals read from a line-oriented goal file.

    # packet loss in percent, energy in coulomb, latency in percent of the cycle
    satisfaction packetLoss < 10
    optimize energyConsumption min

Satisfaction goals are thresholds that filter the verified options, in file
order; the single optimization goal picks among the survivors.
"""

import logging
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

from src.activforms.utils.errors import ConfigError

logger = logging.getLogger(__name__)

PACKET_LOSS, ENERGY, LATENCY = 'packetLoss', 'energyConsumption', 'latency'
QUALITIES = (PACKET_LOSS, ENERGY, LATENCY)
COMPARATORS: Dict[str, Callable[[float, float], bool]] = {
    '<': operator.lt, '<=': operator.le, '>': operator.gt, '>=': operator.ge,
}
DIRECTIONS = ('min', 'max')


@dataclass(frozen=True)
class SatisfactionGoal:
    quality: str
    comparator: str
    threshold: float
    order: int = 0

    def satisfied_by(self, value: float) -> bool:
        return COMPARATORS[self.comparator](value, self.threshold)

    def __str__(self) -> str:
        return f"satisfaction {self.quality} {self.comparator} {self.threshold:g}"


@dataclass(frozen=True)
class OptimizationGoal:
    quality: str
    direction: str = 'min'
    order: int = 0

    def __str__(self) -> str:
        return f"optimize {self.quality} {self.direction}"


@dataclass(frozen=True)
class GoalSet:
    satisfaction: Tuple[SatisfactionGoal, ...]
    optimization: OptimizationGoal
    source: str = '<goals>'

    @property
    def qualities(self) -> Tuple[str, ...]:
        """Qualities that verification has to estimate."""
        used = {g.quality for g in self.satisfaction} | {self.optimization.quality}
        return tuple(q for q in QUALITIES if q in used)

    def threshold(self, quality: str) -> Optional[float]:
        """Threshold of the first satisfaction goal on ``quality``."""
        for goal in self.satisfaction:
            if goal.quality == quality:
                return goal.threshold
        return None

    def lines(self) -> Tuple[str, ...]:
        return tuple(str(g) for g in sorted([*self.satisfaction, self.optimization], key=lambda g: g.order))


def _quality(name: str, where: str) -> str:
    if name not in QUALITIES:
        raise ConfigError(f"{where}: unknown quality '{name}' (expected one of {', '.join(QUALITIES)})")
    return name


def parse_goals(text: str, source: str = '<goals>') -> GoalSet:
    """
    Parse goal lines.

    Raises:
        ConfigError: unknown keyword, quality, comparator or direction, a
            non-numeric threshold, or not exactly one optimization goal
    """
    satisfaction = []
    optimization = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{number}"
        words = line.split()
        order = len(satisfaction) + len(optimization)
        if words[0] == 'satisfaction' and len(words) == 4:
            quality = _quality(words[1], where)
            if words[2] not in COMPARATORS:
                raise ConfigError(f"{where}: unknown comparator '{words[2]}'")
            try:
                threshold = float(words[3])
            except ValueError:
                raise ConfigError(f"{where}: threshold '{words[3]}' is not a number") from None
            satisfaction.append(SatisfactionGoal(quality, words[2], threshold, order))
        elif words[0] == 'optimize' and len(words) == 3:
            if words[2] not in DIRECTIONS:
                raise ConfigError(f"{where}: direction must be 'min' or 'max', got '{words[2]}'")
            optimization.append(OptimizationGoal(_quality(words[1], where), words[2], order))
        else:
            raise ConfigError(f"{where}: cannot read goal '{line}'")
    if len(optimization) != 1:
        raise ConfigError(f"{source}: expected exactly one optimization goal, found {len(optimization)}")
    goals = GoalSet(tuple(satisfaction), optimization[0], source)
    logger.debug(f"Goals from {source}: {'; '.join(goals.lines())}")
    return goals


def load_goals(path: Union[str, Path]) -> GoalSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Goals file not found: {path}")
    return parse_goals(path.read_text(), source=str(path))
