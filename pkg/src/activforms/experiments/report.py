#!/usr/bin/env python
"""
Side-by-side comparison of completed scenario runs.

Reads every ``summary.csv`` below an experiment directory and writes
    comparison.csv   one row per (metric, statistic), one column per run
                     (evolution runs contribute one column per phase)
    plot_data.csv    every run's cycles in long format, with the
                     adaptation time joined from timings.csv

USAGE EXAMPLES:
    tables = emit_report('results/scenarios')
    print(tables['packet_loss'])
"""

import logging
from pathlib import Path
from typing import Dict, Union

import pandas as pd

from src.activforms.experiments.errors import EmptyDirectory

logger = logging.getLogger(__name__)

STATISTICS = ('mean', 'min', 'q1', 'median', 'q3', 'max')
METRICS = ('packet_loss', 'energy', 'latency', 'verification_millis')


def _column(run: str, phase: str) -> str:
    return run if phase == 'all' else f"{run}:{phase}"


def emit_report(directory: Union[str, Path]) -> Dict[str, pd.DataFrame]:
    """
    Build quartile tables across the runs under ``directory``.

    Returns:
        Metric name -> table (statistics as rows, runs as columns)

    Raises:
        EmptyDirectory: no run with a summary.csv
    """
    directory = Path(directory)
    summaries = sorted(directory.glob('*/summary.csv')) or sorted(directory.glob('summary.csv'))
    if not summaries:
        raise EmptyDirectory(f"No completed experiment under {directory}")

    frames, cycles = [], []
    for path in summaries:
        run = path.parent.name
        summary = pd.read_csv(path)
        summary['column'] = [_column(run, str(p)) for p in summary['phase']]
        frames.append(summary)
        cycles_path = path.parent / 'cycles.csv'
        if cycles_path.exists():
            frame = pd.read_csv(cycles_path)
            timings = path.parent / 'timings.csv'
            if timings.exists():
                frame = frame.merge(pd.read_csv(timings)[['cycle', 'verification_millis']], on='cycle', how='left')
            frame.insert(0, 'run', run)
            cycles.append(frame)
    combined = pd.concat(frames, ignore_index=True)

    tables: Dict[str, pd.DataFrame] = {}
    for metric in METRICS:
        part = combined[combined['metric'] == metric]
        if part.empty:
            continue
        table = part.set_index('column')[list(STATISTICS)].T
        table.columns.name = None
        tables[metric] = table

    long = pd.concat([t.assign(metric=m).rename_axis('statistic').reset_index() for m, t in tables.items()],
                     ignore_index=True)
    long = long[['metric', 'statistic', *[c for c in long.columns if c not in ('metric', 'statistic')]]]
    long.to_csv(directory / 'comparison.csv', index=False)
    if cycles:
        pd.concat(cycles, ignore_index=True).to_csv(directory / 'plot_data.csv', index=False)

    logger.info(f"Compared {len(summaries)} run(s) from {directory}")
    return tables


def print_report(tables: Dict[str, pd.DataFrame]) -> None:
    for metric, table in tables.items():
        print(f"\n=== {metric} ===")
        print(table.round(3).to_string())
