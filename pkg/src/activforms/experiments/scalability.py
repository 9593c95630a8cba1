#!/usr/bin/env python
"""
Adaptation-space scalability: option counts and verification time for
scaled topologies of 5 to 25 motes.

USAGE EXAMPLES:
    frame = run_scalability(QualityModels.load(config), load_profile('configs/profiles_default.yaml'))
    frame.to_csv('results/scalability/scalability.csv', index=False)
"""

import logging
import math
import time
from typing import Iterable, Optional

import pandas as pd
from tqdm import tqdm

from src.activforms.deltaiot.binding import UncertaintySnapshot
from src.activforms.deltaiot.profiles import UncertaintyProfile
from src.activforms.deltaiot.topology import DISTRIBUTION_STEPS, Topology, scaled_topology
from src.activforms.mapek.analyzer import QualityModels, verify_adaptation_options
from src.activforms.mapek.knowledge import Knowledge
from src.activforms.mapek.options import compose_adaptation_options

logger = logging.getLogger(__name__)

SIZES = (5, 10, 15, 20, 25)
VERIFIED_SIZES = (5, 10, 15)


def expected_option_count(motes: int) -> int:
    """6^(m/5): one two-parent mote per block of five."""
    return len(DISTRIBUTION_STEPS) ** (motes // 5)


def profile_snapshot(topology: Topology, profile: UncertaintyProfile) -> UncertaintySnapshot:
    """Uncertainties of a profile's first cycle, as the monitor would report them."""
    return UncertaintySnapshot(topology=topology,
                               traffic={m: profile.traffic_at(m, 0) for m in topology.sensors},
                               snr_sigma=profile.noise_sigmas(topology), slots=profile.slots(topology),
                               packets_per_cycle=profile.packets_per_cycle)


def run_scalability(models: Optional[QualityModels], profile: UncertaintyProfile,
                    sizes: Iterable[int] = SIZES, verified_sizes: Iterable[int] = VERIFIED_SIZES,
                    seed: int = 42, epsilon: float = 0.05, alpha: float = 0.05, runs: int = 30) -> pd.DataFrame:
    """
    Compose (and for ``verified_sizes`` verify) every adaptation option per size.

    Returns:
        One row per size: motes, links, options, expected_options,
        compose_millis, verified, verification_millis, millis_per_option
    """
    verified_sizes = set(verified_sizes) if models is not None else set()
    rows = []
    for motes in tqdm(list(sizes), desc="Topology sizes"):
        topology = scaled_topology(motes)
        started = time.perf_counter()
        options = compose_adaptation_options(Knowledge.initial(topology))
        compose_millis = (time.perf_counter() - started) * 1000
        row = {'motes': motes, 'links': len(topology.links), 'options': len(options),
               'expected_options': expected_option_count(motes), 'compose_millis': round(compose_millis, 3),
               'verified': 0, 'verification_millis': math.nan, 'millis_per_option': math.nan}
        if motes in verified_sizes:
            outcome = verify_adaptation_options(options, models, profile_snapshot(topology, profile),
                                                budget=math.inf, seed=seed, epsilon=epsilon, alpha=alpha, runs=runs)
            row.update(verified=outcome.verified, verification_millis=round(outcome.millis, 3),
                       millis_per_option=round(outcome.millis / max(1, outcome.verified), 3))
        logger.info(f"{motes} motes: {len(options)} options")
        rows.append(row)
    return pd.DataFrame(rows)


def linearity_ratio(frame: pd.DataFrame) -> float:
    """Largest over smallest per-option verification time; 1.0 means perfectly linear growth."""
    per_option = frame['millis_per_option'].dropna()
    per_option = per_option[per_option > 0]
    if per_option.empty:
        return math.nan
    return float(per_option.max() / per_option.min())


def print_scalability(frame: pd.DataFrame) -> None:
    print("\nAdaptation space:")
    for row in frame.itertuples():
        mark = "✓" if row.options == row.expected_options else "❌"
        timing = '' if math.isnan(row.verification_millis) else f", verified in {row.verification_millis:.0f} ms"
        print(f"  {mark} {row.motes:>2} motes: {row.options} options{timing}")
    ratio = linearity_ratio(frame)
    if not math.isnan(ratio):
        print(f"  Per-option time ratio (max/min): {ratio:.2f}")
