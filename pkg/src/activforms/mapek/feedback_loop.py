#!/usr/bin/env python
"""
The managing system: the feedback-loop model on the engine, wired to the
simulated network through the probe, verifier and effector connectors.

One call to ``run_cycle`` simulates a network cycle, hands the probe sample
to the monitor and lets the model analyze, plan and execute in virtual time.

USAGE EXAMPLES:
    topology, goals = load_topology(...), load_goals(...)
    model = load_mape_model(config.get_path('mape_model'), topology, goals)
    system = ManagingSystem(simulator, model, goals, QualityModels.load(config),
                            LoopSettings.from_config(config))
    for _ in range(76):
        record = system.run_cycle()
    system.close()
"""

import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from tqdm import tqdm

from src.activforms.deltaiot.probe import DeltaIoTEffector, DeltaIoTProbe
from src.activforms.deltaiot.simulator import DeltaIoTSimulator
from src.activforms.deltaiot.topology import Topology
from src.activforms.engine.engine import EngineInstance, ExecutionConfig, load_model as load_engine
from src.activforms.mapek.analyzer import QualityModels, select_best_option
from src.activforms.mapek.connectors import EffectorConnector, ProbeConnector, VerifierConnector
from src.activforms.mapek.goals import LATENCY, PACKET_LOSS, GoalSet
from src.activforms.mapek.knowledge import Knowledge, NetworkSettings, observe
from src.activforms.model.network import ModelNetwork
from src.activforms.model.parser import load_model

logger = logging.getLogger(__name__)

DEFAULT_MAX_PACKET_LOSS = 10.0
DEFAULT_MAX_LATENCY = 5.0


@dataclass
class LoopSettings:
    verification_budget: float = 20.0
    epsilon: float = 0.05
    alpha: float = 0.05
    simulation_runs: int = 30
    seed: int = 42
    snr_dead_band: float = 1.0
    traffic_dead_band: float = 0.05
    snr_window: int = 5
    real_time_unit_millis: int = 1000
    tie_break: str = 'declarationOrder'
    max_steps: int = 100_000
    progress: bool = False

    @property
    def max_verif_ticks(self) -> int:
        """Verification budget in model time units."""
        return max(1, math.ceil(self.verification_budget * 1000 / self.real_time_unit_millis))

    @classmethod
    def from_config(cls, config) -> 'LoopSettings':
        return cls(verification_budget=float(config.get('verification_budget_seconds')),
                   epsilon=float(config.get('smc_epsilon')), alpha=float(config.get('smc_alpha')),
                   simulation_runs=int(config.get('simulation_runs')), seed=int(config.get('seed')),
                   snr_dead_band=float(config.get('snr_dead_band')),
                   traffic_dead_band=float(config.get('traffic_dead_band')),
                   snr_window=int(config.get('snr_history_window')),
                   real_time_unit_millis=int(config.get('real_time_unit_millis')),
                   tie_break=config.get('tie_break'))


def mape_bindings(topology: Topology, goals: Optional[GoalSet] = None,
                  settings: Optional[NetworkSettings] = None, max_verif_time: int = 20,
                  snr_dead_band: float = 1.0, traffic_dead_band: float = 0.05) -> Dict[str, Any]:
    """Slot values of the feedback-loop model for a topology and goal set."""
    settings = settings or NetworkSettings.reference(topology)
    settings.check(topology)
    split = topology.split_index()
    link_split, link_first = [], []
    for index, link in enumerate(topology.links):
        link_split.append(split.get(link.source, -1))
        link_first.append(int(link.source in split and topology.parent_links(link.source)[0] == index))
    max_loss = goals.threshold(PACKET_LOSS) if goals is not None else None
    max_latency = goals.threshold(LATENCY) if goals is not None else None
    return {
        'n_motes': topology.max_mote + 1,
        'n_links': len(topology.links),
        'gateway': topology.gateway,
        'max_options': topology.option_count,
        'link_source': [l.source for l in topology.links],
        'link_dest': [l.dest for l in topology.links],
        'link_split': link_split,
        'link_first': link_first,
        'snr_alpha': [float(l.snr_alpha) for l in topology.links],
        'snr_beta': [float(l.snr_beta) for l in topology.links],
        'initial_power': list(settings.power),
        'initial_distribution': list(settings.distribution),
        'max_verif_time': int(max_verif_time),
        'max_packet_loss': float(DEFAULT_MAX_PACKET_LOSS if max_loss is None else max_loss),
        'max_latency': float(DEFAULT_MAX_LATENCY if max_latency is None else max_latency),
        'snr_dead_band': float(snr_dead_band),
        'traffic_dead_band': float(traffic_dead_band),
    }


def load_mape_model(path: Union[str, Path], topology: Topology, goals: Optional[GoalSet] = None,
                    **kwargs) -> ModelNetwork:
    """Parse a feedback-loop model and bind its slots (see ``mape_bindings``)."""
    network = load_model(path)
    values = mape_bindings(topology, goals, **kwargs)
    return network.bind({name: values[name] for name in network.slots() if name in values})


@dataclass
class CycleRecord:
    cycle: int
    packet_loss: float
    energy: float
    latency: float
    configuration: int
    analysis_required: bool = False
    adapted: bool = False
    failsafe: bool = False
    best_option: int = -1
    options_verified: int = 0
    options_skipped: int = 0
    verification_millis: float = 0.0
    adapted_motes: int = 0
    cycle_millis: float = 0.0

    def as_row(self) -> Dict[str, Any]:
        return asdict(self)


class ManagingSystem:
    """
    Feedback loop over a simulated DeltaIoT network.

    Args:
        simulator: Managed system
        model: Feedback-loop model with its slots bound
        goals: Adaptation goals; the latency model is verified when they
            carry a latency goal
        quality_models: Quality-model templates
        settings: Loop settings
    """

    def __init__(self, simulator: DeltaIoTSimulator, model: ModelNetwork, goals: GoalSet,
                 quality_models: QualityModels, settings: Optional[LoopSettings] = None):
        self.simulator = simulator
        self.settings = settings or LoopSettings()
        self.logger = logging.getLogger(__name__)
        self.goals = goals
        self.quality_models = quality_models
        self.knowledge = Knowledge.initial(simulator.topology, NetworkSettings(*map(tuple, simulator.settings())),
                                           snr_window=self.settings.snr_window)
        self.probe = DeltaIoTProbe(simulator)
        self.effector = DeltaIoTEffector(simulator)
        self.probe_connector = ProbeConnector(self)
        self.verifier_connector = VerifierConnector(self)
        self.effector_connector = EffectorConnector(self)
        self.records: List[CycleRecord] = []
        self.stats = Counter()
        self.engine: Optional[EngineInstance] = None
        self.attach_engine(load_engine(model, ExecutionConfig(real_time_unit_millis=self.settings.real_time_unit_millis,
                                                              seed=self.settings.seed,
                                                              tie_break=self.settings.tie_break,
                                                              keep_trace=False)))

    @property
    def cycle(self) -> int:
        return self.simulator.cycle

    @property
    def latency_goal(self) -> bool:
        return self.goals.threshold(LATENCY) is not None

    @property
    def max_options(self) -> int:
        return int(self.engine.evaluate('MAX_OPTIONS'))

    def attach_engine(self, engine: EngineInstance) -> None:
        """Bind every connector to ``engine``; used at start-up and after a hot swap."""
        self.engine = engine
        for connector in (self.probe_connector, self.verifier_connector, self.effector_connector):
            connector.attach(engine)
        self.engine.run_until_stable(self.settings.max_steps)

    def set_goals(self, goals: GoalSet, quality_models: Optional[QualityModels] = None) -> None:
        self.goals = goals
        if quality_models is not None:
            self.quality_models = quality_models
        self.logger.info(f"Goals now: {'; '.join(goals.lines())}")

    def run_cycle(self) -> CycleRecord:
        """Simulate one network cycle and run the feedback loop on its sample."""
        started = time.perf_counter()
        qos = self.simulator.simulate_cycle()
        observation = observe(self.simulator.topology, self.probe.get_all_motes(), qos)
        self.effector_connector.reset()
        analysis = self.probe_connector.publish(observation)
        record = CycleRecord(cycle=qos.period, packet_loss=observation.packet_loss, energy=qos.energy_consumption,
                             latency=observation.latency, configuration=qos.configuration,
                             analysis_required=analysis)
        engine = self.engine
        engine.run_until_stable(self.settings.max_steps)

        if self.verifier_connector.pending:
            outcome = self.verifier_connector.collect()
            engine.run_until_stable(self.settings.max_steps)
            if outcome.partial:
                engine.advance_time(int(engine.evaluate('MAX_VERIF_TIME')))
                engine.run_until_stable(self.settings.max_steps)
            record.options_verified = outcome.verified
            record.options_skipped = outcome.skipped
            record.verification_millis = outcome.millis
            self._cross_check(outcome.options)

        result = self.effector_connector.plan_result
        if result is not None:
            record.adapted = True
            record.best_option = int(result['bestOption'])
            record.failsafe = record.best_option == -1
        elif record.options_verified or record.options_skipped:
            record.best_option = int(engine.variable('bestOption'))
        record.adapted_motes = len(self.effector_connector.adapted_motes)
        record.cycle_millis = (time.perf_counter() - started) * 1000
        self.records.append(record)
        self.stats['cycles'] += 1
        self.stats['analyses'] += int(record.analysis_required)
        self.stats['adaptations'] += int(record.adapted)
        self.stats['failsafe'] += int(record.failsafe)
        self.stats['partial_verifications'] += int(record.options_skipped > 0)
        return record

    def _cross_check(self, options) -> None:
        best = select_best_option(options, self.goals)
        expected = -1 if best is None else best.index
        chosen = int(self.engine.variable('bestOption'))
        if chosen != expected:
            self.logger.warning(f"Cycle {self.cycle - 1}: model chose option {chosen}, goals select {expected}")
            self.stats['selection_mismatches'] += 1

    def run(self, cycles: int, progress: bool = False) -> List[CycleRecord]:
        for _ in tqdm(range(cycles), desc="Adaptation cycles", disable=not progress):
            self.run_cycle()
        return self.records

    def close(self) -> None:
        self.verifier_connector.shutdown()

    def print_statistics(self) -> None:
        cycles = self.stats['cycles']
        print(f"\nManaging system ({self.simulator.topology.name}):")
        print(f"  Cycles: {cycles}, analyses: {self.stats['analyses']}, adaptations: {self.stats['adaptations']}")
        print(f"  Failsafe: {self.stats['failsafe']}, partial verifications: {self.stats['partial_verifications']}")
        if self.stats['selection_mismatches']:
            print(f"  ❌ Selection mismatches: {self.stats['selection_mismatches']}")
