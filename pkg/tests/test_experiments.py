#!/usr/bin/env python
"""
Tests for the experiment drivers: scenario runs, summaries, the comparison
report, scalability and the accuracy trade-off.
"""

import math
from pathlib import Path

import pandas as pd
import pytest

from src.activforms.deltaiot.profiles import load_profile
from src.activforms.experiments.errors import EmptyDirectory
from src.activforms.experiments.report import STATISTICS, emit_report
from src.activforms.experiments.scalability import expected_option_count, linearity_ratio, run_scalability
from src.activforms.experiments.scenario import ExperimentConfig, run_scenario, summarize_records
from src.activforms.experiments.tradeoff import default_grid, run_tradeoff
from src.activforms.model.parser import load_model
from src.activforms.utils.config_utils import get_config
from src.activforms.utils.errors import ConfigError


def _reference(tmp_path, seed=1, **kwargs) -> ExperimentConfig:
    values = dict(scenario='reference', topology=Path('configs/topology_default.yaml'),
                  profiles=Path('configs/profiles_default.yaml'), goals=Path('configs/goals_default.txt'),
                  model=Path('models/deltaiot_mape.ta'), output_root=tmp_path, cycles=3, seed=seed)
    values.update(kwargs)
    return ExperimentConfig(**values)


def test_config_validation(tmp_path):
    _reference(tmp_path).validate()
    with pytest.raises(ConfigError):
        _reference(tmp_path, scenario='chaos').validate()
    with pytest.raises(ConfigError):
        _reference(tmp_path, cycles=0).validate()
    with pytest.raises(ConfigError):
        _reference(tmp_path, profiles=tmp_path / 'missing.yaml').validate()
    with pytest.raises(ConfigError):
        _reference(tmp_path, scenario='evolution', swap_cycle=10,
                   evolved_model=Path('models/deltaiot_mape_latency.ta'),
                   evolved_goals=Path('configs/goals_latency.txt')).validate()


def test_config_from_settings(tmp_path):
    cfg = ExperimentConfig.from_config(get_config(), 'adaptive', cycles=5, output_root=str(tmp_path))
    assert cfg.cycles == 5
    assert cfg.output_root == tmp_path
    assert cfg.run_dir == tmp_path / f"adaptive_seed{cfg.seed}"
    settings = cfg.loop_settings()
    assert settings.verification_budget == cfg.verification_budget
    assert settings.seed == cfg.seed


def test_reference_scenario(tmp_path):
    run_dir = run_scenario(_reference(tmp_path), progress=False)
    assert run_dir == tmp_path / 'reference_seed1'

    cycles = pd.read_csv(run_dir / 'cycles.csv')
    assert list(cycles['cycle']) == [0, 1, 2]
    assert 'cycle_millis' not in cycles.columns
    assert (cycles['best_option'] == -1).all()
    assert list(pd.read_csv(run_dir / 'timings.csv').columns) == ['cycle', 'verification_millis', 'cycle_millis']

    summary = pd.read_csv(run_dir / 'summary.csv')
    assert {'packet_loss', 'energy', 'latency'} <= set(summary['metric'])
    assert (summary['phase'] == 'all').all()
    assert (run_dir / 'config.yaml').exists()


def test_summarize_records():
    frame = pd.DataFrame({'packet_loss': [1.0, 2.0, 3.0, 4.0], 'energy': [10.0, 10.0, 12.0, 12.0],
                          'latency': 0.0, 'phase': ['initial', 'initial', 'evolved', 'evolved']})
    summary = summarize_records(frame, 'evolution', group='phase')
    loss = summary[summary['metric'] == 'packet_loss'].set_index('phase')
    assert loss.loc['initial', 'mean'] == 1.5
    assert loss.loc['evolved', 'max'] == 4.0
    assert loss.loc['evolved', 'count'] == 2

    overall = summarize_records(frame, 'adaptive')
    assert set(overall['phase']) == {'all'}
    assert overall.set_index('metric').loc['energy', 'median'] == 11.0


def test_emit_report(tmp_path):
    with pytest.raises(EmptyDirectory):
        emit_report(tmp_path)

    for seed in (1, 2):
        run_scenario(_reference(tmp_path, seed=seed), progress=False)
    tables = emit_report(tmp_path)

    assert set(tables) >= {'packet_loss', 'energy', 'latency'}
    assert list(tables['energy'].columns) == ['reference_seed1', 'reference_seed2']
    assert list(tables['energy'].index) == list(STATISTICS)
    comparison = pd.read_csv(tmp_path / 'comparison.csv')
    assert list(comparison.columns[:2]) == ['metric', 'statistic']
    plot = pd.read_csv(tmp_path / 'plot_data.csv')
    assert len(plot) == 6
    assert 'verification_millis' in plot.columns


def test_option_counts_without_verification():
    assert [expected_option_count(m) for m in (5, 10, 15, 20, 25)] == [6, 36, 216, 1296, 7776]

    frame = run_scalability(None, load_profile('configs/profiles_default.yaml'), sizes=(5, 10))
    assert list(frame['options']) == [6, 36]
    assert (frame['options'] == frame['expected_options']).all()
    assert (frame['verified'] == 0).all()
    assert math.isnan(linearity_ratio(frame))

    timed = pd.DataFrame({'millis_per_option': [2.0, 3.0, math.nan]})
    assert linearity_ratio(timed) == pytest.approx(1.5)


def test_tradeoff_on_fair_branch():
    network = load_model('models/examples/fair_branch.ta')
    frame, summary = run_tradeoff(network, 'Pr[<=10](<> Coin.Heads)', grid=[(0.1, 0.1), (0.1, 0.05)],
                                  repetitions=2, truth=0.5)
    assert len(frame) == 4
    assert len(summary) == 2
    assert 'coverage' in summary.columns
    assert len(default_grid()) == 12


@pytest.mark.slow
def test_adaptation_saves_energy_within_loss_goal(tmp_path):
    """76 adaptive cycles keep packet loss under 10% and use at least 15% less energy than the reference."""
    config = get_config()
    adaptive = ExperimentConfig.from_config(config, 'adaptive', cycles=76, output_root=str(tmp_path))
    reference = ExperimentConfig.from_config(config, 'reference', cycles=76, output_root=str(tmp_path))
    adaptive_cycles = pd.read_csv(run_scenario(adaptive, progress=False) / 'cycles.csv')
    reference_cycles = pd.read_csv(run_scenario(reference, progress=False) / 'cycles.csv')

    loss = adaptive_cycles['packet_loss'].mean()
    energy = adaptive_cycles['energy'].mean()
    baseline = reference_cycles['energy'].mean()
    print(f"  adaptive loss {loss:.2f}%, energy {energy:.2f} C vs reference {baseline:.2f} C")
    assert len(adaptive_cycles) == 76
    assert loss <= 10.0
    assert energy <= 0.85 * baseline


@pytest.mark.slow
def test_evolution_meets_latency_goal_after_swap(tmp_path):
    """After the hot swap the loop also keeps latency under 5% of the cycle."""
    cfg = ExperimentConfig.from_config(get_config(), 'evolution', cycles=76, swap_cycle=38,
                                       output_root=str(tmp_path))
    run_dir = run_scenario(cfg, progress=False)

    swap = pd.read_csv(run_dir / 'swap.csv').iloc[0]
    assert swap['status'] == 'swapped'
    assert bool(swap['quiescent'])
    assert swap['buffered_signals'] == swap['delivered_signals']

    cycles = pd.read_csv(run_dir / 'cycles.csv')
    before = cycles[cycles['phase'] == 'initial']['latency'].mean()
    after = cycles[cycles['phase'] == 'evolved']['latency'].mean()
    print(f"  latency before swap {before:.2f}%, after {after:.2f}%")
    assert len(cycles[cycles['phase'] == 'evolved']) == 38
    assert after <= 5.0


if __name__ == "__main__":
    test_summarize_records()
    test_option_counts_without_verification()
