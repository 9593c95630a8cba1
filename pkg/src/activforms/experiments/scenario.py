#!/usr/bin/env python
"""
End-to-end adaptation experiments in virtual time.

Scenarios:
    adaptive    feedback loop with the default goals
    reference   no feedback loop; the network keeps the reference
                configuration (maximum power, duplication to every parent)
    evolution   feedback loop with the default goals on a queuing profile;
                at the swap cycle a bundle adding the latency goal is
                hot-swapped into the running loop

Each run writes to ``<scenario_dir>/<scenario>_seed<seed>/``:
    cycles.csv    one row per cycle (qualities, chosen option, options verified/skipped)
    timings.csv   wall-clock milliseconds per cycle
    summary.csv   mean and quartiles per quality (and per phase for evolution)
    swap.csv      evolution only: the swap report
    config.yaml   the experiment configuration

USAGE EXAMPLES:
    cfg = ExperimentConfig.from_config(get_config(), 'adaptive', cycles=76)
    run_dir = run_scenario(cfg)
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import yaml
from tqdm import tqdm

from src.activforms.checker.suite import load_bindings, run_verification_suite
from src.activforms.deltaiot.binding import UncertaintySnapshot, bind_uncertainties
from src.activforms.deltaiot.profiles import UncertaintyProfile, load_profile
from src.activforms.deltaiot.quality import listening_energy
from src.activforms.deltaiot.simulator import DeltaIoTSimulator
from src.activforms.deltaiot.topology import Topology, load_topology
from src.activforms.engine.engine import EngineInstance
from src.activforms.experiments.errors import ScenarioError
from src.activforms.mapek.analyzer import QualityModels, model_query
from src.activforms.mapek.feedback_loop import CycleRecord, LoopSettings, ManagingSystem, load_mape_model
from src.activforms.mapek.goals import load_goals
from src.activforms.mapek.knowledge import Knowledge
from src.activforms.mapek.options import compose_adaptation_options
from src.activforms.model.parser import load_model
from src.activforms.smc.estimator import runs_for_rsem
from src.activforms.update.bundle import create_bundle
from src.activforms.update.manager import (
    QuiescencePredicate, UpdateManager, UpdateRequest, request_from_bundle, submit_model_update,
)
from src.activforms.utils.config_utils import get_scenario_config
from src.activforms.utils.errors import ConfigError

logger = logging.getLogger(__name__)

SCENARIOS = ('adaptive', 'reference', 'evolution')
QUALITY_COLUMNS = ('packet_loss', 'energy', 'latency')
TIMING_COLUMNS = ('verification_millis', 'cycle_millis')
PATH_FIELDS = ('topology', 'profiles', 'goals', 'model', 'output_root', 'evolved_model', 'evolved_goals',
               'bundle')
SETTINGS_KEYS = (
    'snr_dead_band', 'traffic_dead_band', 'snr_history_window', 'real_time_unit_millis', 'tie_break',
    'listening_slots', 'reception_time', 'receive_current_ma', 'listening_duty_cycle', 'max_states',
    'max_quiescence_wait_seconds', 'stub_models', 'bindings_file', 'packet_loss_model', 'energy_model',
    'latency_model', 'wandb_project', 'wandb_entity',
)


@dataclass
class ExperimentConfig:
    scenario: str
    topology: Path
    profiles: Path
    goals: Path
    model: Path
    output_root: Path
    cycles: int = 76
    seed: int = 42
    epsilon: float = 0.05
    alpha: float = 0.05
    simulation_runs: int = 30
    rsem_target: Optional[float] = None
    verification_budget: float = 20.0
    evolved_model: Optional[Path] = None
    evolved_goals: Optional[Path] = None
    swap_cycle: int = 38
    bundle: Optional[Path] = None
    settings: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """
        Raises:
            ConfigError: unknown scenario, cycles < 1, or a missing file
        """
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario '{self.scenario}', expected one of {SCENARIOS}")
        if self.cycles < 1:
            raise ConfigError(f"cycles must be at least 1, got {self.cycles}")
        files = {'topology': self.topology, 'profiles': self.profiles, 'goals': self.goals}
        if self.scenario != 'reference':
            files['model'] = self.model
        if self.scenario == 'evolution':
            if self.bundle is not None:
                files['bundle'] = self.bundle
            else:
                files.update({'evolved_model': self.evolved_model, 'evolved_goals': self.evolved_goals})
            if not 0 <= self.swap_cycle <= self.cycles:
                raise ConfigError(f"swap_cycle {self.swap_cycle} outside 0..{self.cycles}")
        missing = [f"{name}: {path}" for name, path in files.items() if path is None or not Path(path).exists()]
        if missing:
            raise ConfigError(f"Missing experiment files: {', '.join(missing)}")

    @property
    def run_dir(self) -> Path:
        return self.output_root / f"{self.scenario}_seed{self.seed}"

    @classmethod
    def from_config(cls, config, scenario: str, **overrides) -> 'ExperimentConfig':
        files = get_scenario_config(scenario)
        values = dict(
            scenario=scenario, topology=files['topology'], profiles=files['profiles'], goals=files['goals'],
            model=files['model'], output_root=config.get_path('scenario_dir'),
            cycles=int(config.get('cycles')), seed=int(config.get('seed')),
            epsilon=float(config.get('smc_epsilon')), alpha=float(config.get('smc_alpha')),
            simulation_runs=int(config.get('simulation_runs')),
            verification_budget=float(config.get('verification_budget_seconds')),
            evolved_model=files.get('evolved_model'), evolved_goals=files.get('evolved_goals'),
            swap_cycle=int(config.get('swap_cycle')),
            settings={key: config.get(key) for key in SETTINGS_KEYS},
        )
        for key, value in overrides.items():
            if value is not None:
                values[key] = Path(value) if key in PATH_FIELDS else value
        return cls(**values)

    def loop_settings(self) -> LoopSettings:
        s = self.settings
        return LoopSettings(verification_budget=self.verification_budget, epsilon=self.epsilon, alpha=self.alpha,
                            simulation_runs=self.simulation_runs, seed=self.seed,
                            snr_dead_band=float(s.get('snr_dead_band', 1.0)),
                            traffic_dead_band=float(s.get('traffic_dead_band', 0.05)),
                            snr_window=int(s.get('snr_history_window', 5)),
                            real_time_unit_millis=int(s.get('real_time_unit_millis', 1000)),
                            tie_break=s.get('tie_break', 'declarationOrder'))

    def as_dict(self) -> Dict[str, Any]:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(self).items()}


def setup_wandb(cfg: ExperimentConfig, enabled: bool):
    """Initialize Weights & Biases logging if enabled; the run continues without it otherwise."""
    if not enabled:
        return None
    try:
        import wandb

        run = wandb.init(project=cfg.settings.get('wandb_project') or 'activforms',
                         entity=cfg.settings.get('wandb_entity'),
                         name=f"{cfg.scenario}_seed{cfg.seed}",
                         tags=[cfg.scenario], config=cfg.as_dict())
        print("✓ wandb initialized successfully")
        return run
    except ImportError:
        print("WARNING: wandb not installed. The experiment will continue without wandb logging.")
    except Exception as e:
        print(f"WARNING: wandb initialization failed: {e}. The experiment will continue without wandb logging.")
    return None


def build_simulator(topology: Topology, profile: UncertaintyProfile, cfg: ExperimentConfig) -> DeltaIoTSimulator:
    s = cfg.settings
    listening = listening_energy(int(s.get('listening_slots', 40)), float(s.get('reception_time', 2.0)),
                                 float(s.get('receive_current_ma', 14.2)), float(s.get('listening_duty_cycle', 0.1)))
    return DeltaIoTSimulator(topology, profile, seed=cfg.seed, listening=listening)


def calibrate_runs(models: QualityModels, topology: Topology, profile: UncertaintyProfile,
                   target_rsem: float, seed: int) -> int:
    """Simulation runs reaching ``target_rsem`` on the energy model for the first option."""
    option = compose_adaptation_options(Knowledge.initial(topology))[0]
    snapshot = UncertaintySnapshot(topology=topology,
                                   traffic={m: profile.traffic_at(m, 0) for m in topology.sensors},
                                   snr_sigma=profile.noise_sigmas(topology), slots=profile.slots(topology),
                                   packets_per_cycle=profile.packets_per_cycle)
    network = bind_uncertainties(models.energy, snapshot, option)
    runs = runs_for_rsem(network, model_query(network, 'Energy'), target_rsem, seed=seed)
    logger.info(f"RSEM {target_rsem}% reached with {runs} simulation runs")
    return runs


def reference_record(simulator: DeltaIoTSimulator) -> CycleRecord:
    qos = simulator.simulate_cycle()
    return CycleRecord(cycle=qos.period, packet_loss=qos.packet_loss * 100.0, energy=qos.energy_consumption,
                       latency=qos.latency * 100.0, configuration=qos.configuration)


def prepare_bundle(cfg: ExperimentConfig, topology: Topology) -> Path:
    """Verify the evolved model offline and pack it with its goals into an update bundle."""
    if cfg.bundle is not None:
        return cfg.bundle
    goals = load_goals(cfg.evolved_goals)
    model = load_mape_model(cfg.evolved_model, topology, goals)
    stubs = [load_model(p, closed=False) for p in cfg.settings.get('stub_models') or []]
    bindings_file = cfg.settings.get('bindings_file')
    bindings = load_bindings(bindings_file) if bindings_file and Path(bindings_file).exists() else {}
    report = run_verification_suite(model, stubs, bindings, max_states=int(cfg.settings.get('max_states', 1_000_000)))
    report_path = report.to_csv(cfg.run_dir / 'evolved_verification.csv')
    if not report.passed:
        report.print_report()
    return create_bundle(cfg.run_dir / 'evolved_update.zip', cfg.evolved_model, cfg.evolved_goals, report_path)


def summarize_records(frame: pd.DataFrame, scenario: str, group: Optional[str] = None) -> pd.DataFrame:
    """Mean and quartiles of every quality, optionally per ``group`` value."""
    rows = []
    groups = frame.groupby(group, sort=False) if group else [('all', frame)]
    for label, part in groups:
        for metric in QUALITY_COLUMNS + ('verification_millis',):
            if metric not in part.columns:
                continue
            values = part[metric].astype(float)
            rows.append({'scenario': scenario, 'phase': label, 'metric': metric, 'count': int(values.count()),
                         'mean': values.mean(), 'min': values.min(), 'q1': values.quantile(0.25),
                         'median': values.median(), 'q3': values.quantile(0.75), 'max': values.max()})
    return pd.DataFrame(rows)


def run_scenario(cfg: ExperimentConfig, progress: bool = True, use_wandb: bool = False) -> Path:
    """
    Run one scenario end-to-end and write its result files.

    Returns:
        The experiment directory

    Raises:
        ConfigError: invalid configuration
        ScenarioError: the run failed; wraps the underlying error
    """
    cfg.validate()
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / 'config.yaml', 'w') as f:
        yaml.safe_dump(cfg.as_dict(), f, sort_keys=True)

    topology = load_topology(cfg.topology)
    profile = load_profile(cfg.profiles)
    simulator = build_simulator(topology, profile, cfg)
    wandb_run = setup_wandb(cfg, use_wandb)
    logger.info(f"Scenario {cfg.scenario}: {cfg.cycles} cycles, seed {cfg.seed}, topology {topology.name}")

    records: List[Dict[str, Any]] = []
    swap_rows: List[Dict[str, Any]] = []
    system: Optional[ManagingSystem] = None
    try:
        if cfg.scenario != 'reference':
            goals = load_goals(cfg.goals)
            settings = cfg.loop_settings()
            models = QualityModels.from_paths(cfg.settings.get('packet_loss_model', 'models/quality/packet_loss.ta'),
                                              cfg.settings.get('energy_model', 'models/quality/energy.ta'))
            if cfg.rsem_target is not None:
                settings.simulation_runs = calibrate_runs(models, topology, profile, cfg.rsem_target, cfg.seed)
            system = ManagingSystem(simulator, load_mape_model(cfg.model, topology, goals,
                                                               max_verif_time=settings.max_verif_ticks,
                                                               snr_dead_band=settings.snr_dead_band,
                                                               traffic_dead_band=settings.traffic_dead_band),
                                    goals, models, settings)
        phase = 'initial'
        for cycle in tqdm(range(cfg.cycles), desc=f"{cfg.scenario} cycles", disable=not progress):
            if cfg.scenario == 'evolution' and cycle == cfg.swap_cycle:
                swap_rows.append(_evolve(cfg, system, topology))
                phase = 'evolved' if swap_rows[-1]['status'] == 'swapped' else phase
            try:
                record = reference_record(simulator) if system is None else system.run_cycle()
            except Exception as e:
                raise ScenarioError(f"{cfg.scenario} cycle {cycle}: {e}") from e
            row = record.as_row()
            row['phase'] = phase
            records.append(row)
            if wandb_run is not None:
                wandb_run.log({k: row[k] for k in QUALITY_COLUMNS + ('options_verified', 'options_skipped')},
                              step=cycle)
    finally:
        if system is not None:
            system.close()
            system.print_statistics()

    frame = pd.DataFrame(records)
    timing = frame[['cycle', *TIMING_COLUMNS]]
    frame.drop(columns=list(TIMING_COLUMNS)).to_csv(run_dir / 'cycles.csv', index=False)
    timing.to_csv(run_dir / 'timings.csv', index=False)
    summary = summarize_records(frame, cfg.scenario, group='phase' if cfg.scenario == 'evolution' else None)
    summary.to_csv(run_dir / 'summary.csv', index=False)
    if swap_rows:
        pd.DataFrame(swap_rows).to_csv(run_dir / 'swap.csv', index=False)
    if wandb_run is not None:
        wandb_run.summary.update({f"mean_{m}": float(frame[m].mean()) for m in QUALITY_COLUMNS})
        wandb_run.finish()

    means = frame[list(QUALITY_COLUMNS)].mean()
    print(f"\n✓ Scenario {cfg.scenario} finished: {len(frame)} cycles written to {run_dir}")
    print(f"  Mean packet loss {means['packet_loss']:.2f}%, energy {means['energy']:.2f} C, "
          f"latency {means['latency']:.2f}%")
    return run_dir


def _evolve(cfg: ExperimentConfig, system: ManagingSystem, topology: Topology) -> Dict[str, Any]:
    """Hot-swap the evolved model and goals into the running loop."""
    bundle = prepare_bundle(cfg, topology)
    settings = system.settings
    request = request_from_bundle(bundle, topology, max_verif_time=settings.max_verif_ticks,
                                  snr_dead_band=settings.snr_dead_band,
                                  traffic_dead_band=settings.traffic_dead_band)
    latency_models = QualityModels(system.quality_models.packet_loss, system.quality_models.energy,
                                   load_model(cfg.settings.get('latency_model', 'models/quality/latency.ta')))

    def on_swap(engine: EngineInstance, req: UpdateRequest) -> None:
        system.set_goals(req.goals, latency_models)
        system.attach_engine(engine)

    manager = UpdateManager(system.engine, QuiescencePredicate(),
                            max_wait=float(cfg.settings.get('max_quiescence_wait_seconds', 60.0)),
                            on_swap=on_swap)
    submit_model_update(manager, request)
    report = manager.swap_when_quiescent()
    if report is None:
        logger.error(f"Cycle {cfg.swap_cycle}: update not applied, loop continues with the initial model")
        return {'ticket': 1, 'status': 'pending', 'cycle': cfg.swap_cycle}
    report.print_report()
    row = report.as_row()
    row['cycle'] = cfg.swap_cycle
    return row
