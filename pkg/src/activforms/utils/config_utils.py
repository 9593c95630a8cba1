#!/usr/bin/env python
"""
Configuration utilities for the ActivFORMS runtime and experiments
Provides a centralized way to manage paths and settings with local overrides
"""

import os
import yaml
from pathlib import Path
from typing import Dict, Any

from src.activforms.utils.errors import ConfigError


class Config:
    """Configuration manager with local override support."""

    # Default configuration values
    DEFAULTS = {
        # Model corpus
        'models_dir': 'models',
        'mape_model': 'models/deltaiot_mape.ta',
        'mape_latency_model': 'models/deltaiot_mape_latency.ta',
        'stub_models': ['models/stubs/probe_stub.ta',
                        'models/stubs/verifier_stub.ta',
                        'models/stubs/effector_stub.ta'],
        'packet_loss_model': 'models/quality/packet_loss.ta',
        'energy_model': 'models/quality/energy.ta',
        'latency_model': 'models/quality/latency.ta',

        # Managed system configuration
        'configs_dir': 'configs',
        'topology_file': 'configs/topology_default.yaml',
        'profiles_file': 'configs/profiles_default.yaml',
        'queuing_profiles_file': 'configs/profiles_queuing.yaml',
        'goals_file': 'configs/goals_default.txt',
        'latency_goals_file': 'configs/goals_latency.txt',
        'bindings_file': 'configs/verification_bindings.yaml',

        # Output directories
        'results_dir': 'results',
        'update_watch_dir': 'updates/incoming',

        # Experiment settings
        'cycles': 76,
        'seed': 42,
        'swap_cycle': 38,

        # Engine settings
        'real_time_unit_millis': 1000,
        'tie_break': 'declarationOrder',
        'max_ticks_per_cycle': 100,

        # Offline verification
        'max_states': 1_000_000,

        # Statistical model checking
        'smc_epsilon': 0.05,
        'smc_alpha': 0.05,
        'smc_min_runs': 30,
        'simulation_runs': 30,
        'max_run_steps': 100_000,

        # Analysis
        'verification_budget_seconds': 20.0,
        'snr_dead_band': 1.0,
        'traffic_dead_band': 0.05,
        'snr_history_window': 5,

        # Energy calibration: 40 slots, 2 ms reception, 14.2 mA receive current
        'listening_slots': 40,
        'reception_time': 2.0,
        'receive_current_ma': 14.2,
        'listening_duty_cycle': 0.1,

        # Update manager
        'max_quiescence_wait_seconds': 60.0,
        'watch_poll_seconds': 1.0,

        # Experiment tracking (optional)
        'wandb_project': 'activforms',
        'wandb_entity': None,
    }

    def __init__(self, local_config_path: str = 'local_config.yaml'):
        """Initialize configuration with optional local overrides."""
        self.config = self.DEFAULTS.copy()
        self.local_config_path = local_config_path
        self._load_local_config()
        self._apply_environment()
        self._setup_derived_paths()

    def _load_local_config(self):
        """Load local configuration if it exists."""
        if Path(self.local_config_path).exists():
            try:
                with open(self.local_config_path, 'r') as f:
                    local_config = yaml.safe_load(f) or {}
                self.config.update(local_config)
                print(f"✓ Loaded local configuration from {self.local_config_path}")
            except Exception as e:
                print(f"Warning: Could not load local config: {e}")

    def _apply_environment(self):
        """ACTIVFORMS_SEED overrides the configured seed."""
        seed = os.environ.get('ACTIVFORMS_SEED')
        if seed is not None:
            try:
                self.config['seed'] = int(seed)
            except ValueError:
                raise ConfigError(f"ACTIVFORMS_SEED must be an integer, got {seed!r}")

    def _setup_derived_paths(self):
        """Setup derived paths based on configuration."""
        results_root = Path(self.config['results_dir'])
        self.config.update({
            'results_root': results_root,
            'scenario_dir': results_root / 'scenarios',
            'verification_dir': results_root / 'verification',
            'scalability_dir': results_root / 'scalability',
            'tradeoff_dir': results_root / 'tradeoff',
        })

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value."""
        return self.config.get(key, default)

    def get_path(self, key: str) -> Path:
        """Get configuration value as Path object."""
        value = self.config.get(key)
        if value is None:
            raise KeyError(f"Configuration key '{key}' not found")
        return Path(value)

    def print_config(self):
        """Print current configuration for debugging."""
        print("\n=== Current Configuration ===")
        for key, value in sorted(self.config.items()):
            print(f"  {key}: {value}")
        print("=" * 30)


# Global configuration instance
config = Config()


def get_config() -> Config:
    """Get the global configuration instance."""
    return config


def verify_paths(required_paths: list, check_exists: bool = True) -> bool:
    """
    Verify that required paths exist.

    Args:
        required_paths: List of path keys to check
        check_exists: Whether to check if paths actually exist

    Returns:
        True if all paths are valid
    """
    cfg = get_config()
    missing_paths = []

    for path_key in required_paths:
        try:
            path = cfg.get_path(path_key)
            if check_exists and not path.exists():
                missing_paths.append(f"{path_key}: {path}")
        except KeyError:
            missing_paths.append(f"{path_key}: Configuration key not found")

    if missing_paths:
        print("\n❌ Missing or invalid paths:")
        for path in missing_paths:
            print(f"  - {path}")
        return False

    return True


def get_scenario_config(scenario: str) -> Dict[str, Any]:
    """
    Get the file set used by one experiment scenario.

    Args:
        scenario: 'adaptive', 'reference', 'evolution' or 'scalability'

    Returns:
        Dictionary with model, topology, profile and goal paths
    """
    cfg = get_config()
    files = {
        'model': cfg.get_path('mape_model'),
        'topology': cfg.get_path('topology_file'),
        'profiles': cfg.get_path('profiles_file'),
        'goals': cfg.get_path('goals_file'),
    }
    if scenario == 'evolution':
        files.update({
            'profiles': cfg.get_path('queuing_profiles_file'),
            'evolved_model': cfg.get_path('mape_latency_model'),
            'evolved_goals': cfg.get_path('latency_goals_file'),
        })
    elif scenario not in ('adaptive', 'reference', 'scalability'):
        raise ConfigError(f"Unknown scenario: {scenario}")
    return files
