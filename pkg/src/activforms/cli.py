#!/usr/bin/env python
"""
Command-line entry point of the ActivFORMS runtime.

Exit codes: 0 ok, 1 verification failure, 2 scenario error, 3 config error.
ACTIVFORMS_SEED overrides the configured seed.

USAGE EXAMPLES:
    python -m src.activforms.cli verify --cross-check
    python -m src.activforms.cli verify --model models/examples/handshake.ta --query Responds
    python -m src.activforms.cli run --scenario adaptive --cycles 76
    python -m src.activforms.cli run --scenario evolution
    python -m src.activforms.cli smc --model models/examples/fair_branch.ta --query Heads --epsilon 0.01
    python -m src.activforms.cli bundle --model models/deltaiot_mape_latency.ta \\
        --goals configs/goals_latency.txt --output updates/latency.zip
    python -m src.activforms.cli update push updates/latency.zip
    python -m src.activforms.cli report results/scenarios
    python -m src.activforms.cli scale
    python -m src.activforms.cli tradeoff --model models/examples/fair_branch.ta --query Heads --truth 0.5
"""

import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.activforms.checker.properties import verify_query
from src.activforms.checker.suite import ALL_PROPERTIES, load_bindings, run_verification_suite
from src.activforms.deltaiot.profiles import load_profile
from src.activforms.deltaiot.topology import load_topology
from src.activforms.experiments.report import emit_report, print_report
from src.activforms.experiments.scalability import SIZES, VERIFIED_SIZES, print_scalability, run_scalability
from src.activforms.experiments.scenario import SCENARIOS, ExperimentConfig, run_scenario
from src.activforms.experiments.tradeoff import run_tradeoff
from src.activforms.mapek.analyzer import QualityModels
from src.activforms.mapek.feedback_loop import load_mape_model
from src.activforms.mapek.goals import load_goals
from src.activforms.mapek.templates import MAPE_TEMPLATES, validate_template_instantiation
from src.activforms.model.network import ModelNetwork
from src.activforms.model.parser import load_model
from src.activforms.smc.estimator import estimate_probability, run_simulation_query
from src.activforms.update.bundle import create_bundle, load_bundle
from src.activforms.update.errors import MissingVerificationReport
from src.activforms.utils.config_utils import Config, get_config
from src.activforms.utils.errors import ActivFormsError, ConfigError
from src.activforms.utils.log_utils import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFICATION, EXIT_SCENARIO, EXIT_CONFIG = 0, 1, 2, 3


def resolve_query(network: ModelNetwork, query: str) -> str:
    """A query name declared in the model, or the query text itself."""
    for named in network.queries:
        if named.name == query:
            return named.text
    return query


def _verify_mape(args, config) -> int:
    topology = load_topology(args.topology or config.get_path('topology_file'))
    goals_path = args.goals or config.get_path('latency_goals_file' if args.latency else 'goals_file')
    model_path = args.model or config.get_path('mape_latency_model' if args.latency else 'mape_model')
    model = load_mape_model(model_path, topology, load_goals(goals_path))
    stubs = [load_model(p, closed=False) for p in config.get('stub_models')]
    bindings = load_bindings(args.bindings or config.get_path('bindings_file'))

    diagnostics = validate_template_instantiation(MAPE_TEMPLATES, model, stubs, bindings)
    for diagnostic in diagnostics:
        print(f"❌ {diagnostic}")
    report = run_verification_suite(model, stubs, bindings, max_states=int(config.get('max_states')),
                                    properties=args.properties or ALL_PROPERTIES,
                                    cross_check=args.cross_check, progress=args.verbose)
    report.print_report()
    output = Path(args.output) if args.output else config.get_path('verification_dir') / f"{Path(model_path).stem}.csv"
    report.to_csv(output)
    print(f"Report written to {output}")
    return EXIT_OK if report.passed and not diagnostics else EXIT_VERIFICATION


def cmd_verify(args, config) -> int:
    if args.query is None:
        return _verify_mape(args, config)
    if args.model is None:
        raise ConfigError("--query needs --model")
    network = load_model(args.model)
    result = verify_query(network, resolve_query(network, args.query), max_states=int(config.get('max_states')))
    mark = "✓" if result.holds else "❌"
    print(f"{mark} {result.query}: {result.verdict} ({result.states} states, {result.millis:.1f} ms)")
    if result.trace and not result.holds:
        print(result.format_trace())
    return EXIT_OK if result.holds else EXIT_VERIFICATION


def cmd_run(args, config) -> int:
    cfg = ExperimentConfig.from_config(
        config, args.scenario, cycles=args.cycles, seed=args.seed, topology=args.topology, profiles=args.profiles,
        goals=args.goals, model=args.model, output_root=args.output, bundle=args.bundle,
        verification_budget=args.budget, rsem_target=args.rsem, swap_cycle=args.swap_cycle)
    run_scenario(cfg, progress=not args.quiet, use_wandb=args.wandb)
    return EXIT_OK


def cmd_smc(args, config) -> int:
    network = load_model(args.model)
    text = resolve_query(network, args.query)
    seed = args.seed if args.seed is not None else int(config.get('seed'))
    if text.lstrip().startswith('simulate'):
        stats = run_simulation_query(network, text, seed=seed, runs=args.runs,
                                     max_run_steps=int(config.get('max_run_steps')))
        frame = pd.DataFrame(stats.as_rows())
        print(f"\n{text} ({stats.runs} runs, {stats.millis:.1f} ms)")
        for s in stats.expressions:
            rsem = 'n/a' if s.rsem is None else f"{s.rsem:.2f}%"
            print(f"  {s.expression}: mean {s.mean:.4f}, sd {s.sd:.4f}, RSEM {rsem}")
    else:
        estimate = estimate_probability(network, text, args.epsilon or float(config.get('smc_epsilon')),
                                        args.alpha or float(config.get('smc_alpha')), seed=seed,
                                        min_runs=int(config.get('smc_min_runs')),
                                        max_run_steps=int(config.get('max_run_steps')))
        frame = pd.DataFrame([estimate.as_row()])
        low, high = estimate.interval
        print(f"\n{text}: {estimate.point:.4f} in [{low:.4f}, {high:.4f}] "
              f"({estimate.runs} runs, {estimate.stopping_rule}, {estimate.millis:.1f} ms)")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.output, index=False)
    return EXIT_OK


def cmd_bundle(args, config) -> int:
    if args.report is None:
        topology = load_topology(args.topology or config.get_path('topology_file'))
        model = load_mape_model(args.model, topology, load_goals(args.goals))
        stubs = [load_model(p, closed=False) for p in config.get('stub_models')]
        report = run_verification_suite(model, stubs, load_bindings(config.get_path('bindings_file')),
                                        max_states=int(config.get('max_states')))
        report.print_report()
        report_path = report.to_csv(Path(args.output).with_suffix('.csv'))
        if not report.passed:
            print("❌ Bundle not created: the model does not pass verification")
            return EXIT_VERIFICATION
    else:
        report_path = Path(args.report)
    path = create_bundle(args.output, args.model, args.goals, report_path)
    print(f"✓ Update bundle written to {path}")
    return EXIT_OK


def cmd_update(args, config) -> int:
    bundle = load_bundle(args.bundle)
    try:
        bundle.check_report()
    except MissingVerificationReport as e:
        print(f"❌ {e}")
        return EXIT_VERIFICATION
    watch = Path(args.watch_dir) if args.watch_dir else config.get_path('update_watch_dir')
    watch.mkdir(parents=True, exist_ok=True)
    target = watch / Path(args.bundle).name
    shutil.copy2(args.bundle, target)
    print(f"✓ Update queued at {target}")
    return EXIT_OK


def cmd_report(args, config) -> int:
    directory = args.directory or config.get_path('scenario_dir')
    print_report(emit_report(directory))
    print(f"\nComparison written to {Path(directory) / 'comparison.csv'}")
    return EXIT_OK


def cmd_scale(args, config) -> int:
    models = None if args.no_verify else QualityModels.load(config)
    profile = load_profile(args.profiles or config.get_path('profiles_file'))
    frame = run_scalability(models, profile, sizes=args.sizes, verified_sizes=args.verify_sizes,
                            seed=int(config.get('seed')), epsilon=float(config.get('smc_epsilon')),
                            alpha=float(config.get('smc_alpha')), runs=int(config.get('simulation_runs')))
    print_scalability(frame)
    output = Path(args.output) if args.output else config.get_path('scalability_dir') / 'scalability.csv'
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False)
    return EXIT_OK


def cmd_tradeoff(args, config) -> int:
    network = load_model(args.model)
    frame, summary = run_tradeoff(network, resolve_query(network, args.query), seed=int(config.get('seed')),
                                  repetitions=args.repetitions, truth=args.truth)
    print(summary.round(4).to_string(index=False))
    output = Path(args.output) if args.output else config.get_path('tradeoff_dir') / f"{Path(args.model).stem}.csv"
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False)
    summary.to_csv(output.with_name(output.stem + '_summary.csv'), index=False)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='ActivFORMS: verified feedback loops for self-adaptive systems')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    parser.add_argument('--config', type=str, default=None, help='Local configuration file')
    sub = parser.add_subparsers(dest='command', required=True)

    verify = sub.add_parser('verify', help='Offline verification of the feedback-loop model (P1-P12)')
    verify.add_argument('--model', type=str, help='Model file (default: configured MAPE model)')
    verify.add_argument('--latency', action='store_true', help='Verify the latency-goal model')
    verify.add_argument('--query', type=str, help='Check one query (name or text) on a closed model')
    verify.add_argument('--properties', nargs='+', choices=ALL_PROPERTIES, help='Subset of P1-P12')
    verify.add_argument('--topology', type=str)
    verify.add_argument('--goals', type=str)
    verify.add_argument('--bindings', type=str, help='P8/P9/P11 placeholder bindings')
    verify.add_argument('--cross-check', action='store_true', help='Also decide with the naive oracle')
    verify.add_argument('--output', type=str, help='Report CSV')
    verify.set_defaults(handler=cmd_verify)

    run = sub.add_parser('run', help='Run an adaptation scenario in virtual time')
    run.add_argument('--scenario', choices=SCENARIOS, default='adaptive')
    run.add_argument('--cycles', type=int)
    run.add_argument('--seed', type=int)
    run.add_argument('--topology', type=str)
    run.add_argument('--profiles', type=str)
    run.add_argument('--goals', type=str)
    run.add_argument('--model', type=str)
    run.add_argument('--bundle', type=str, help='Evolution: update bundle to swap in')
    run.add_argument('--swap-cycle', type=int)
    run.add_argument('--budget', type=float, help='Verification budget per cycle (seconds)')
    run.add_argument('--rsem', type=float, help='Calibrate simulation runs to this RSEM (percent)')
    run.add_argument('--output', type=str, help='Scenario output root')
    run.add_argument('--wandb', action='store_true', help='Log per-cycle qualities to Weights & Biases')
    run.add_argument('--quiet', action='store_true', help='No progress bar')
    run.set_defaults(handler=cmd_run)

    smc = sub.add_parser('smc', help='Statistical model checking of one query')
    smc.add_argument('--model', type=str, required=True)
    smc.add_argument('--query', type=str, required=True, help='Query name or text')
    smc.add_argument('--epsilon', type=float)
    smc.add_argument('--alpha', type=float)
    smc.add_argument('--runs', type=int, help='Simulation queries: number of runs')
    smc.add_argument('--seed', type=int)
    smc.add_argument('--output', type=str)
    smc.set_defaults(handler=cmd_smc)

    bundle = sub.add_parser('bundle', help='Verify a model and pack it into an update bundle')
    bundle.add_argument('--model', type=str, required=True)
    bundle.add_argument('--goals', type=str, required=True)
    bundle.add_argument('--report', type=str, help='Existing verification report (skips verification)')
    bundle.add_argument('--topology', type=str)
    bundle.add_argument('--output', type=str, required=True)
    bundle.set_defaults(handler=cmd_bundle)

    update = sub.add_parser('update', help='Online model updates')
    update_sub = update.add_subparsers(dest='update_command', required=True)
    push = update_sub.add_parser('push', help='Submit an update bundle to the running loop')
    push.add_argument('bundle', type=str)
    push.add_argument('--watch-dir', type=str)
    push.set_defaults(handler=cmd_update)

    report = sub.add_parser('report', help='Compare completed scenario runs')
    report.add_argument('directory', type=str, nargs='?')
    report.set_defaults(handler=cmd_report)

    scale = sub.add_parser('scale', help='Adaptation-space scalability sweep')
    scale.add_argument('--sizes', type=int, nargs='+', default=list(SIZES))
    scale.add_argument('--verify-sizes', type=int, nargs='+', default=list(VERIFIED_SIZES))
    scale.add_argument('--no-verify', action='store_true', help='Only count options')
    scale.add_argument('--profiles', type=str)
    scale.add_argument('--output', type=str)
    scale.set_defaults(handler=cmd_scale)

    tradeoff = sub.add_parser('tradeoff', help='SMC accuracy/time trade-off sweep')
    tradeoff.add_argument('--model', type=str, required=True)
    tradeoff.add_argument('--query', type=str, required=True)
    tradeoff.add_argument('--truth', type=float, help='Known probability, adds coverage')
    tradeoff.add_argument('--repetitions', type=int, default=1)
    tradeoff.add_argument('--output', type=str)
    tradeoff.set_defaults(handler=cmd_tradeoff)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging('DEBUG' if args.verbose else 'INFO')
    try:
        config = get_config() if args.config is None else _load_config(args.config)
        return args.handler(args, config)
    except (ConfigError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except MissingVerificationReport as e:
        logger.error(f"Verification failure: {e}")
        return EXIT_VERIFICATION
    except ActivFormsError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_SCENARIO


def _load_config(path: str):
    if not Path(path).exists():
        raise ConfigError(f"Configuration file not found: {path}")
    return Config(path)


if __name__ == "__main__":
    sys.exit(main())
