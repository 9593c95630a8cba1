#!/usr/bin/env python
"""
Test script to verify the configuration system works properly
"""

import pytest

from src.activforms.utils.config_utils import Config, get_config, get_scenario_config, verify_paths
from src.activforms.utils.errors import ConfigError


def test_configuration():
    """Test the configuration system."""
    print("=== Testing Configuration System ===\n")

    config = get_config()
    config.print_config()

    assert config.get('seed') is not None
    assert config.get_path('scenario_dir').name == 'scenarios'
    assert config.get_path('verification_dir').parent == config.get_path('results_root')

    print("\n=== Path Verification Test (config only) ===")
    test_paths = ['mape_model', 'topology_file', 'profiles_file', 'goals_file']
    assert verify_paths(test_paths, check_exists=False)
    assert not verify_paths(['no_such_key'], check_exists=False)

    print("\n=== Configuration Test Complete ===")


def test_local_override(tmp_path):
    local = tmp_path / 'local_config.yaml'
    local.write_text("cycles: 5\nresults_dir: out\n")
    config = Config(str(local))
    assert config.get('cycles') == 5
    assert config.get_path('scenario_dir').as_posix() == 'out/scenarios'
    # untouched defaults survive
    assert config.get('swap_cycle') == 38


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv('ACTIVFORMS_SEED', '7')
    assert Config(str(tmp_path / 'missing.yaml')).get('seed') == 7

    monkeypatch.setenv('ACTIVFORMS_SEED', 'seven')
    with pytest.raises(ConfigError):
        Config(str(tmp_path / 'missing.yaml'))


def test_scenario_files():
    adaptive = get_scenario_config('adaptive')
    assert set(adaptive) == {'model', 'topology', 'profiles', 'goals'}

    evolution = get_scenario_config('evolution')
    assert evolution['profiles'].name == 'profiles_queuing.yaml'
    assert evolution['evolved_model'].name == 'deltaiot_mape_latency.ta'

    with pytest.raises(ConfigError):
        get_scenario_config('nonsense')


if __name__ == "__main__":
    test_configuration()
