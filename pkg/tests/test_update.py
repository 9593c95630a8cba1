#!/usr/bin/env python
"""
Tests for online updates: bundles, the pending-update queue, hot swaps with
signal buffering and the bundle watcher.
"""

import zipfile

import pandas as pd
import pytest

from src.activforms.deltaiot.topology import default_topology
from src.activforms.engine.engine import load_model
from src.activforms.mapek.goals import load_goals
from src.activforms.model.parser import parse_model
from src.activforms.update.bundle import MANIFEST, create_bundle, load_bundle, sha256
from src.activforms.update.errors import MissingVerificationReport, UpdateError, UpdateParseError
from src.activforms.update.manager import (
    ABORTED, SWAPPED, QuiescencePredicate, UpdateManager, UpdateRequest, UpdateWatcher, perform_hot_swap,
    request_from_bundle, submit_model_update,
)

ECHO = """
broadcast chan ping, pong;
int value = 0;
int echoed = 0;

automaton Echo {
    location Wait initial;
    location Reply committed;

    edge Wait -> Reply { sync ping?; update echoed = value * 2; }
    edge Reply -> Wait { sync pong!; }
}

system Echo;
"""

EVOLVED = ECHO.replace("int echoed = 0;", "int extra = 7;").replace("update echoed = value * 2;",
                                                                      "update extra = value;")
ECHO_IDLE = QuiescencePredicate(pairs=(('Echo', 'Wait'),))


def _report(verdicts=('holds', 'holds')) -> pd.DataFrame:
    return pd.DataFrame({'property': [f"P{i + 1}" for i in range(len(verdicts))],
                         'verdict': list(verdicts), 'states': 10, 'millis': 1.0})


def _request(text=EVOLVED, report=None) -> UpdateRequest:
    return UpdateRequest(model=parse_model(text), goals=load_goals('configs/goals_default.txt'),
                         report=_report() if report is None else report, source='test')


def _bundle(tmp_path, name='update.zip', verdicts=('holds', 'holds'), model_text=EVOLVED):
    model = tmp_path / 'model.ta'
    model.write_text(model_text)
    report = tmp_path / 'report.csv'
    _report(verdicts).to_csv(report, index=False)
    return create_bundle(tmp_path / 'out' / name, model, 'configs/goals_default.txt', report)


def test_bundle_round_trip(tmp_path):
    bundle = load_bundle(_bundle(tmp_path))
    assert bundle.model_text == EVOLVED
    assert bundle.manifest['report_sha256'] == sha256(bundle.report_bytes)
    assert list(bundle.check_report()['verdict']) == ['holds', 'holds']


def test_bundle_report_checks(tmp_path):
    with pytest.raises(MissingVerificationReport):
        load_bundle(_bundle(tmp_path, verdicts=('holds', 'violated'))).check_report()

    # altered report: the manifest hash no longer matches
    path = _bundle(tmp_path, name='altered.zip')
    with zipfile.ZipFile(path) as archive:
        members = {name: archive.read(name) for name in archive.namelist()}
    members['report.csv'] = members['report.csv'].replace(b'P2', b'P9')
    with zipfile.ZipFile(path, 'w') as archive:
        for name, data in members.items():
            archive.writestr(name, data)
    with pytest.raises(MissingVerificationReport):
        load_bundle(path).check_report()

    # no report at all
    bare = tmp_path / 'bare.zip'
    with zipfile.ZipFile(bare, 'w') as archive:
        archive.writestr(MANIFEST, 'model: model.ta\ngoals: goals.txt\n')
        archive.writestr('model.ta', EVOLVED)
        archive.writestr('goals.txt', 'optimize energyConsumption min\n')
    with pytest.raises(MissingVerificationReport):
        load_bundle(bare).check_report()


def test_unreadable_bundles(tmp_path):
    junk = tmp_path / 'junk.zip'
    junk.write_text('not an archive')
    with pytest.raises(UpdateParseError):
        load_bundle(junk)

    broken = _bundle(tmp_path, name='broken.zip', model_text='automaton {')
    with pytest.raises(UpdateParseError):
        request_from_bundle(broken, default_topology())


def test_submit_requires_passing_report():
    manager = UpdateManager(load_model(parse_model(ECHO)), predicate=ECHO_IDLE)
    with pytest.raises(MissingVerificationReport):
        submit_model_update(manager, _request(report=pd.DataFrame()))
    with pytest.raises(MissingVerificationReport):
        submit_model_update(manager, _request(report=_report(('holds', 'violated'))))
    assert manager.pending is None


def test_newer_update_supersedes_pending():
    manager = UpdateManager(load_model(parse_model(ECHO)), predicate=ECHO_IDLE)
    first = submit_model_update(manager, _request())
    second = submit_model_update(manager, _request())

    assert (first, second) == (1, 2)
    assert manager.pending[0] == 2
    assert manager.stats['superseded'] == 1


def test_hot_swap_hands_over_buffered_signals():
    engine = load_model(parse_model(ECHO))
    engine.inject('ping', {'value': 3})
    engine.inject('ping', {'value': 5})
    swapped = []
    manager = UpdateManager(engine, predicate=ECHO_IDLE, on_swap=lambda new, request: swapped.append(new))
    submit_model_update(manager, _request())

    report = manager.swap_when_quiescent()
    report.print_report()

    assert report.status == SWAPPED
    assert report.initialized == ['extra']
    assert report.dropped == ['echoed']
    assert (report.buffered_signals, report.delivered_signals, report.lost_signals) == (2, 2, 0)
    assert manager.pending is None
    assert swapped == [manager.engine]
    assert engine.pending_signals == 0

    new_engine = manager.engine
    assert new_engine.status == 'running'
    assert new_engine.pending_signals == 2
    new_engine.run_until_stable()
    assert new_engine.variable('extra') == 5
    assert new_engine.variable('value') == 5


def test_type_mismatch_aborts_swap():
    engine = load_model(parse_model(ECHO))
    manager = UpdateManager(engine, predicate=ECHO_IDLE)
    changed = ECHO.replace("int value = 0;", "bool value = false;").replace("update echoed = value * 2;",
                                                                             "update echoed = 1;")
    submit_model_update(manager, _request(changed))

    report = manager.swap_when_quiescent()
    assert report.status == ABORTED
    assert 'value' in report.reason
    assert manager.engine is engine
    assert engine.status == 'running'
    assert manager.stats['aborted'] == 1


def test_swap_waits_for_quiescence():
    engine = load_model(parse_model(ECHO))
    manager = UpdateManager(engine, predicate=QuiescencePredicate(pairs=(('Echo', 'Reply'),)))
    assert manager.swap_when_quiescent() is None

    submit_model_update(manager, _request())
    assert manager.swap_when_quiescent() is None
    assert manager.stats['quiescence_timeouts'] == 1
    assert manager.pending is not None

    report = perform_hot_swap(manager, engine, _request())
    assert report.status == ABORTED
    assert not report.quiescent

    with pytest.raises(UpdateError):
        UpdateManager(engine, predicate=QuiescencePredicate(pairs=(('Echo', 'Nowhere'),)))
    with pytest.raises(UpdateError):
        UpdateManager(engine)


def test_watcher_submits_and_rejects(tmp_path):
    watched = tmp_path / 'updates'
    manager = UpdateManager(load_model(parse_model(ECHO)), predicate=ECHO_IDLE)
    watcher = UpdateWatcher(watched, manager, default_topology())

    good = _bundle(tmp_path)
    good.replace(watched / 'good.zip')
    (watched / 'junk.zip').write_text('not an archive')

    tickets = watcher.poll_once()
    assert tickets == [1]
    assert (watched / 'processed' / 'good.zip').exists()
    assert (watched / 'rejected' / 'junk.zip').exists()
    assert watcher.stats['rejected'] == 1
    assert watcher.poll_once() == []


if __name__ == "__main__":
    test_newer_update_supersedes_pending()
    test_hot_swap_hands_over_buffered_signals()
