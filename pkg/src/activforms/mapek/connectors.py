#!/usr/bin/env python
"""
Glue between the feedback-loop model running on the engine and the managed
system.

    probe      probe sample -> knowledge -> monitor signal
    verifier   invokeVerifier -> worker thread -> verificationCompleted or
               partialResults; stopVerification cancels the worker
    effector   adaptMote -> setMoteSettings -> ack; with no best option the
               first adaptMote of a plan resets the reference configuration

Every connector binds its ports on ``attach`` and can be re-attached to the
engine that replaces the running one after a hot swap.
"""

import logging
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import replace
from typing import TYPE_CHECKING, Any, Dict, List, Optional

from src.activforms.engine.engine import INTO_MODEL, OUT_OF_MODEL, EngineInstance, ExternalPort, Subscription
from src.activforms.mapek.analyzer import VerificationOutcome, verify_adaptation_options
from src.activforms.mapek.goals import ENERGY, LATENCY, PACKET_LOSS
from src.activforms.mapek.knowledge import NetworkSettings, Observation, update_knowledge
from src.activforms.mapek.options import compose_adaptation_options
from src.activforms.mapek.planner import Plan, build_plan, execute_plan

if TYPE_CHECKING:
    from src.activforms.mapek.feedback_loop import ManagingSystem

PROBE_PAYLOAD = ('probePower', 'probeDistribution', 'probeSnr', 'probeTraffic',
                 'probePacketLoss', 'probeEnergy', 'probeLatency')
RESULT_PAYLOAD = ('optPacketLoss', 'optEnergy', 'optLatency', 'optVerified')


def _has(engine: EngineInstance, name: str) -> bool:
    return name in engine.compiled.layout.names


class ProbeConnector:
    def __init__(self, system: 'ManagingSystem'):
        self.system = system
        self.logger = logging.getLogger(__name__)
        self.port: Optional[Subscription] = None
        self.last_update = None

    def attach(self, engine: EngineInstance) -> None:
        payload = PROBE_PAYLOAD + (('probeQueue',) if _has(engine, 'probeQueue') else ())
        self.port = engine.bind_external_port(ExternalPort('monitor', INTO_MODEL, payload))

    def publish(self, observation: Observation) -> bool:
        """Fold a sample into the knowledge and signal the monitor. Returns analysisRequired."""
        system = self.system
        update = update_knowledge(system.knowledge, observation, system.settings.snr_dead_band,
                                  system.settings.traffic_dead_band, latency=system.latency_goal)
        system.knowledge = update.knowledge
        self.last_update = update
        knowledge = update.knowledge
        motes = range(knowledge.topology.max_mote + 1)
        payload: Dict[str, Any] = {
            'probePower': list(observation.settings.power),
            'probeDistribution': list(observation.settings.distribution),
            'probeSnr': knowledge.snr,
            'probeTraffic': [float(knowledge.traffic.get(m, 0.0)) for m in motes],
            'probePacketLoss': float(observation.packet_loss),
            'probeEnergy': float(observation.energy),
            'probeLatency': float(observation.latency),
        }
        if 'probeQueue' in self.port.port.payload:
            payload['probeQueue'] = [int(knowledge.queue.get(m, 0)) for m in motes]
        self.port.inject(payload)
        return update.analysis_required


class VerifierConnector:
    def __init__(self, system: 'ManagingSystem'):
        self.system = system
        self.logger = logging.getLogger(__name__)
        self.pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix='verifier')
        self.cancel = threading.Event()
        self.future: Optional[Future] = None
        self.results_port: Optional[Subscription] = None
        self.partial_port: Optional[Subscription] = None

    def attach(self, engine: EngineInstance) -> None:
        engine.bind_external_port(ExternalPort('invokeVerifier', OUT_OF_MODEL, ('optPower',)),
                                  self.on_invoke)
        engine.bind_external_port(ExternalPort('stopVerification', OUT_OF_MODEL), self.on_stop)
        self.results_port = engine.bind_external_port(
            ExternalPort('verificationCompleted', INTO_MODEL, RESULT_PAYLOAD))
        self.partial_port = engine.bind_external_port(ExternalPort('partialResults', INTO_MODEL, RESULT_PAYLOAD))

    def on_invoke(self, channel: str, payload: Dict[str, Any]) -> None:
        system = self.system
        knowledge = system.knowledge
        options = compose_adaptation_options(knowledge, powers=payload['optPower'])
        own = compose_adaptation_options(knowledge)[0].power if options else ()
        if own and tuple(own) != options[0].power:
            self.logger.warning(f"Model powers {list(options[0].power)} differ from {list(own)}")
        self.cancel = threading.Event()
        snapshot = knowledge.snapshot(system.simulator.profile.packets_per_cycle, system.simulator.slots,
                                      system.simulator.listening)
        settings = system.settings
        self.future = self.pool.submit(verify_adaptation_options, options, system.quality_models, snapshot,
                                       settings.verification_budget, settings.seed + system.cycle,
                                       settings.epsilon, settings.alpha, settings.simulation_runs,
                                       self.cancel, progress=settings.progress)
        self.logger.debug(f"Verification of {len(options)} options submitted")

    def on_stop(self, channel: str, payload: Dict[str, Any]) -> None:
        self.cancel.set()

    @property
    def pending(self) -> bool:
        return self.future is not None

    def collect(self) -> VerificationOutcome:
        """Wait for the worker and hand its results to the model."""
        outcome: VerificationOutcome = self.future.result()
        self.future = None
        payload = self.results_payload(outcome, self.system.max_options)
        port = self.partial_port if outcome.partial else self.results_port
        port.inject(payload)
        return outcome

    @staticmethod
    def results_payload(outcome: VerificationOutcome, size: int) -> Dict[str, List]:
        loss, energy, latency, verified = [0.0] * size, [0.0] * size, [0.0] * size, [False] * size
        for option in outcome.options:
            if option.verified and option.index < size:
                loss[option.index] = float(option.estimates.get(PACKET_LOSS, 0.0))
                energy[option.index] = float(option.estimates.get(ENERGY, 0.0))
                latency[option.index] = float(option.estimates.get(LATENCY, 0.0))
                verified[option.index] = True
        return {'optPacketLoss': loss, 'optEnergy': energy, 'optLatency': latency, 'optVerified': verified}

    def shutdown(self) -> None:
        self.cancel.set()
        self.pool.shutdown(wait=True)


class EffectorConnector:
    def __init__(self, system: 'ManagingSystem'):
        self.system = system
        self.logger = logging.getLogger(__name__)
        self.ack_port: Optional[Subscription] = None
        self.adapted_motes: List[int] = []
        self.plan_result: Optional[Dict[str, Any]] = None
        self.reset_issued = False

    def attach(self, engine: EngineInstance) -> None:
        engine.bind_external_port(ExternalPort(
            'adaptMote', OUT_OF_MODEL,
            ('currentMote', 'power', 'distribution', 'targetPower', 'targetDistribution', 'bestOption')),
            self.on_adapt_mote)
        engine.bind_external_port(ExternalPort('planExecuted', OUT_OF_MODEL, ('bestOption', 'failSafe')),
                                  self.on_plan_executed)
        self.ack_port = engine.bind_external_port(ExternalPort('ack', INTO_MODEL))

    def on_adapt_mote(self, channel: str, payload: Dict[str, Any]) -> None:
        system = self.system
        topology = system.knowledge.topology
        mote = int(payload['currentMote'])
        target = NetworkSettings(tuple(payload['targetPower']), tuple(payload['targetDistribution']))
        if int(payload['bestOption']) == -1:
            if not self.reset_issued:
                execute_plan(Plan(target, failsafe=True), system.effector, topology)
                system.knowledge = replace(system.knowledge, applied=target)
                self.reset_issued = True
            self.adapted_motes.append(mote)
            self.ack_port.inject()
            return
        plan = build_plan(NetworkSettings(tuple(payload['power']), tuple(payload['distribution'])),
                          target, topology).for_mote(mote)
        execute_plan(plan, system.effector, topology)
        system.knowledge = replace(system.knowledge, applied=plan.apply(system.knowledge.applied))
        self.adapted_motes.append(mote)
        self.ack_port.inject()

    def on_plan_executed(self, channel: str, payload: Dict[str, Any]) -> None:
        self.plan_result = dict(payload)
        if payload['bestOption'] == -1:
            self.logger.warning("Failsafe: reference configuration enacted")
        else:
            self.logger.info(f"Plan executed: option {payload['bestOption']} on motes {self.adapted_motes}")

    def reset(self) -> None:
        self.adapted_motes = []
        self.plan_result = None
        self.reset_issued = False
