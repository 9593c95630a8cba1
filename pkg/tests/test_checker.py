#!/usr/bin/env python
"""
Tests for the exhaustive checker, the naive oracle and the property suite.
"""

from pathlib import Path

import pytest

from src.activforms.checker.errors import InstantiationError
from src.activforms.checker.explorer import explore_states
from src.activforms.checker.oracle import naive_check
from src.activforms.checker.properties import HOLDS, INCOMPLETE, VIOLATED, check_property, verify_query, \
    replay_counterexample
from src.activforms.checker.suite import (
    ALL_PROPERTIES, instantiate_property, load_bindings, placeholders, run_verification_suite,
)
from src.activforms.model.parser import load_model

EXAMPLES = Path('models/examples')


@pytest.fixture(scope='module')
def handshake():
    return load_model(EXAMPLES / 'handshake.ta')


@pytest.fixture(scope='module')
def starving():
    return load_model(EXAMPLES / 'starving.ta')


def test_handshake_properties_hold(handshake):
    graph = explore_states(handshake)
    assert graph.complete
    for named in handshake.queries:
        result = check_property(graph, named.text)
        print(f"  {named.name}: {result.verdict} ({result.states} states)")
        assert result.verdict == HOLDS, named.name


def test_reachability_witness(handshake):
    result = verify_query(handshake, 'E<> Client.Done')
    assert result.holds
    assert result.trace[0].label == 'initial'
    assert result.trace[-1].locations['Client'] == 'Done'


def test_invariant_violation_has_trace(handshake):
    result = verify_query(handshake, 'A[] served < 1')
    assert result.verdict == VIOLATED
    assert result.trace
    assert result.loop_start is None


def test_leads_to_lasso(starving):
    result = verify_query(starving, 'Worker.Trying --> Worker.Done')
    print(result.format_trace())

    assert result.verdict == VIOLATED
    assert result.loop_start is not None
    assert result.trace[-1].locations['Worker'] == 'Trying'
    assert 'loop start' in result.format_trace()
    assert verify_query(starving, 'A[] !(Worker.Done && Trigger.Start)').holds


def test_replay_counterexample(starving):
    result = verify_query(starving, 'Worker.Trying --> Worker.Done')
    engine = replay_counterexample(starving, result)
    assert engine.active_locations() == result.trace[-1].locations


def test_state_bound_gives_incomplete(handshake):
    result = verify_query(handshake, 'A[] served <= 3', max_states=2)
    assert result.verdict == INCOMPLETE
    assert not result.holds


def test_oracle_agrees(handshake, starving):
    for network in (handshake, starving):
        graph = explore_states(network)
        for named in network.queries:
            expected = check_property(graph, named.text).verdict
            assert naive_check(network, named.text) == expected, named.name


def test_instantiate_properties(handshake):
    assert len(ALL_PROPERTIES) == 12
    assert placeholders("E<> <Model>.<Location>") == ['Model', 'Location']

    text = instantiate_property('P11', {'Model': 'Client', 'Location': 'Done'}, handshake)
    assert text == 'E<> Client.Done'
    assert instantiate_property('P12') == 'A[] no deadlock'

    with pytest.raises(InstantiationError):
        instantiate_property('P11', {'Model': 'Client'})
    with pytest.raises(InstantiationError):
        instantiate_property('P11', {'Model': 'Client', 'Location': 'Nowhere'}, handshake)
    with pytest.raises(InstantiationError):
        instantiate_property('P13')


def test_load_bindings(tmp_path):
    bindings = load_bindings('configs/verification_bindings.yaml')
    assert set(bindings) == {'P8', 'P9', 'P11'}
    assert bindings['P11'] == {'Model': 'Planner', 'Location': 'UseFailSafeStrategy'}

    with pytest.raises(FileNotFoundError):
        load_bindings(tmp_path / 'missing.yaml')


@pytest.mark.slow
def test_mape_suite_passes(tmp_path):
    """Every generic property holds on the packet-loss/energy feedback loop."""
    from src.activforms.deltaiot.topology import default_topology
    from src.activforms.mapek.feedback_loop import load_mape_model
    from src.activforms.mapek.goals import load_goals

    model = load_mape_model('models/deltaiot_mape.ta', default_topology(), load_goals('configs/goals_default.txt'))
    stubs = [load_model(f'models/stubs/{name}.ta', closed=False)
             for name in ('probe_stub', 'verifier_stub', 'effector_stub')]
    report = run_verification_suite(model, stubs, load_bindings('configs/verification_bindings.yaml'))
    report.print_report()

    assert report.passed
    frame = report.to_frame()
    assert list(frame['property']) == list(ALL_PROPERTIES)
    assert report.to_csv(tmp_path / 'suite.csv').exists()


def test_verdicts_independent_of_clock_cap(handshake, starving):
    for network in (handshake, starving):
        default = explore_states(network)
        widened = explore_states(network, extra_cap=3)
        assert widened.complete
        for named in network.queries:
            assert check_property(widened, named.text).verdict == check_property(default, named.text).verdict, \
                named.name


def _mutated_suite(tmp_path, original: str, replacement: str):
    from src.activforms.deltaiot.topology import default_topology
    from src.activforms.mapek.feedback_loop import load_mape_model
    from src.activforms.mapek.goals import load_goals

    text = Path('models/deltaiot_mape.ta').read_text()
    assert original in text
    path = tmp_path / 'mutated_mape.ta'
    path.write_text(text.replace(original, replacement))

    model = load_mape_model(path, default_topology(), load_goals('configs/goals_default.txt'))
    stubs = [load_model(f'models/stubs/{name}.ta', closed=False)
             for name in ('probe_stub', 'verifier_stub', 'effector_stub')]
    report = run_verification_suite(model, stubs, load_bindings('configs/verification_bindings.yaml'))
    report.print_report()
    return model, stubs, report


@pytest.mark.slow
def test_dropped_plan_executed_signal_is_caught(tmp_path):
    """An executor that never signals completion leaves the effector waiting."""
    from src.activforms.model.parser import merge_networks

    model, stubs, report = _mutated_suite(
        tmp_path, '    edge PlanExecuted -> Waiting { sync planExecuted!; }\n', '')
    verdicts = {e.property: e.verdict for e in report.entries}

    assert not report.passed
    assert verdicts['P7'] == VIOLATED
    assert verdicts['P12'] == VIOLATED

    p7 = next(e.result for e in report.entries if e.property == 'P7')
    assert p7.trace
    engine = replay_counterexample(merge_networks(model, *stubs), p7)
    assert engine.active_locations() == p7.trace[-1].locations


@pytest.mark.slow
def test_inverted_goal_selection_is_caught(tmp_path):
    """Choosing options that miss the packet-loss goal fails the effector's result check."""
    from src.activforms.model.parser import merge_networks

    model, stubs, report = _mutated_suite(
        tmp_path, 'optVerified[o] && satisfies(o) &&', 'optVerified[o] && !satisfies(o) &&')
    verdicts = {e.property: e.verdict for e in report.entries}

    assert not report.passed
    assert verdicts['P10'] == VIOLATED

    p10 = next(e.result for e in report.entries if e.property == 'P10')
    assert p10.trace[-1].locations['Effector'] == 'ResultsIncorrect'
    engine = replay_counterexample(merge_networks(model, *stubs), p10)
    assert engine.active_locations() == p10.trace[-1].locations


if __name__ == "__main__":
    network = load_model(EXAMPLES / 'handshake.ta')
    test_handshake_properties_hold(network)
    test_leads_to_lasso(load_model(EXAMPLES / 'starving.ta'))
