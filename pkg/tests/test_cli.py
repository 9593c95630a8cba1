#!/usr/bin/env python
"""
Tests for the command line: exit codes and the files each command writes.
"""

import pandas as pd

from src.activforms.cli import EXIT_CONFIG, EXIT_OK, EXIT_SCENARIO, EXIT_VERIFICATION, main


def _report(path, verdicts=('holds', 'holds')):
    pd.DataFrame({'property': ['P1', 'P2'], 'verdict': list(verdicts), 'states': 4, 'millis': 1.0}) \
        .to_csv(path, index=False)
    return path


def test_verify_single_query(capsys):
    assert main(['verify', '--model', 'models/examples/handshake.ta', '--query', 'Responds']) == EXIT_OK
    assert main(['verify', '--model', 'models/examples/starving.ta', '--query', 'Progress']) == EXIT_VERIFICATION
    out = capsys.readouterr().out
    assert 'loop start' in out


def test_configuration_errors(tmp_path):
    assert main(['verify', '--model', str(tmp_path / 'missing.ta'), '--query', 'E<> true']) == EXIT_CONFIG
    assert main(['verify', '--query', 'Responds']) == EXIT_CONFIG
    assert main(['--config', str(tmp_path / 'missing.yaml'), 'report', str(tmp_path)]) == EXIT_CONFIG


def test_report_on_empty_directory(tmp_path):
    assert main(['report', str(tmp_path)]) == EXIT_SCENARIO


def test_reference_run_and_report(tmp_path):
    code = main(['run', '--scenario', 'reference', '--cycles', '2', '--seed', '3', '--output', str(tmp_path),
                 '--quiet'])
    assert code == EXIT_OK
    assert (tmp_path / 'reference_seed3' / 'summary.csv').exists()

    assert main(['report', str(tmp_path)]) == EXIT_OK
    assert (tmp_path / 'comparison.csv').exists()


def test_smc_command(tmp_path):
    output = tmp_path / 'heads.csv'
    code = main(['smc', '--model', 'models/examples/fair_branch.ta', '--query', 'Heads',
                 '--epsilon', '0.1', '--alpha', '0.1', '--seed', '1', '--output', str(output)])
    assert code == EXIT_OK
    row = pd.read_csv(output).iloc[0]
    assert row['low'] <= row['estimate'] <= row['high']


def test_bundle_and_push(tmp_path):
    watch = tmp_path / 'watch'
    bundle = tmp_path / 'latency.zip'
    code = main(['bundle', '--model', 'models/deltaiot_mape_latency.ta', '--goals', 'configs/goals_latency.txt',
                 '--report', str(_report(tmp_path / 'ok.csv')), '--output', str(bundle)])
    assert code == EXIT_OK
    assert main(['update', 'push', str(bundle), '--watch-dir', str(watch)]) == EXIT_OK
    assert (watch / 'latency.zip').exists()

    failing = tmp_path / 'failing.zip'
    main(['bundle', '--model', 'models/deltaiot_mape_latency.ta', '--goals', 'configs/goals_latency.txt',
          '--report', str(_report(tmp_path / 'bad.csv', ('holds', 'violated'))), '--output', str(failing)])
    assert main(['update', 'push', str(failing), '--watch-dir', str(watch)]) == EXIT_VERIFICATION
    assert not (watch / 'failing.zip').exists()


def test_scale_without_verification(tmp_path):
    output = tmp_path / 'scale.csv'
    assert main(['scale', '--no-verify', '--sizes', '5', '10', '--output', str(output)]) == EXIT_OK
    assert list(pd.read_csv(output)['options']) == [6, 36]


if __name__ == "__main__":
    main(['verify', '--model', 'models/examples/handshake.ta', '--query', 'Responds'])
