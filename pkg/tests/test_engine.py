#!/usr/bin/env python
"""
Tests for the execution engine: stepping, external ports, halting and state
transfer between models.
"""

from pathlib import Path

import pytest

from src.activforms.engine.engine import (
    INTO_MODEL, OUT_OF_MODEL, ExecutionConfig, ExternalPort, load_model, restore_state,
)
from src.activforms.engine.errors import InvariantViolation, SchemaMismatch, TypeMismatch
from src.activforms.model.errors import UnknownChannel
from src.activforms.model.parser import load_model as load_network
from src.activforms.model.parser import parse_model

ECHO = """
broadcast chan ping, pong;
chan internal;
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


def _echo_engine():
    engine = load_model(parse_model(ECHO))
    received = []
    port = engine.bind_external_port(ExternalPort('ping', INTO_MODEL, ('value',)))
    engine.bind_external_port(ExternalPort('pong', OUT_OF_MODEL, ('echoed',)),
                              handler=lambda channel, payload: received.append(payload['echoed']))
    return engine, port, received


def test_signal_round_trip():
    engine, port, received = _echo_engine()
    assert engine.active_locations() == {'Echo': 'Wait'}

    port.inject({'value': 3})
    steps = engine.run_until_stable()

    assert steps == 2
    assert received == [6]
    assert engine.variable('echoed') == 6
    assert engine.evaluate('Echo.Wait')
    print(f"✓ signal delivered and answered in {steps} steps")


def test_signals_are_delivered_in_order():
    engine, port, received = _echo_engine()
    for value in (1, 2, 3):
        port.inject({'value': value})
    assert engine.pending_signals == 3

    engine.run_until_stable()
    assert received == [2, 4, 6]
    assert engine.stats['signals_delivered'] == 3


def test_port_validation():
    engine, port, _ = _echo_engine()
    with pytest.raises(UnknownChannel):
        engine.bind_external_port(ExternalPort('missing', INTO_MODEL))
    with pytest.raises(SchemaMismatch):
        engine.bind_external_port(ExternalPort('internal', INTO_MODEL))
    with pytest.raises(SchemaMismatch):
        engine.bind_external_port(ExternalPort('ping', INTO_MODEL, ('nothing',)))
    with pytest.raises(SchemaMismatch):
        port.inject({'echoed': 1})
    with pytest.raises(UnknownChannel):
        engine.inject('missing', {})


def test_halt_and_resume():
    engine, port, received = _echo_engine()
    engine.halt()
    port.inject({'value': 5})

    assert engine.run_until_stable() == 0
    assert received == []
    assert engine.pending_signals == 1

    engine.resume()
    engine.run_until_stable()
    assert received == [10]


def test_time_advances_in_ticks():
    engine, _, _ = _echo_engine()
    engine.advance_time(5)
    assert engine.store.time == 5
    assert engine.stats['delays'] == 5


def test_invariant_blocks_time():
    network = parse_model("automaton A { clock x; location L initial { invariant x <= 2; } }")
    engine = load_model(network)
    with pytest.raises(InvariantViolation):
        engine.advance_time(5)
    assert engine.store.time == 2
    assert engine.status == 'halted'


def test_seeded_branching_is_reproducible():
    network = load_network(Path('models/examples/fair_branch.ta'))
    outcomes = []
    for _ in range(2):
        engine = load_model(network, ExecutionConfig(seed=7))
        engine.advance_time(3)
        outcomes.append(engine.active_locations()['Coin'])
    assert outcomes[0] == outcomes[1]
    assert outcomes[0] in ('Heads', 'Tails')


def test_restore_into_new_model():
    engine, port, _ = _echo_engine()
    port.inject({'value': 4})
    engine.run_until_stable()
    engine.advance_time(2)
    snapshot = engine.snapshot_state()

    evolved = parse_model(ECHO.replace("int echoed = 0;", "int extra = 7;")
                              .replace("update echoed = value * 2;", "update extra = value;"))
    restored = restore_state(engine, snapshot, evolved)

    report = restored.restore_report
    assert 'value' in report.transferred
    assert report.initialized == ['extra']
    assert report.dropped == ['echoed']
    assert restored.variable('value') == 4
    assert restored.variable('extra') == 7
    assert restored.active_locations() == {'Echo': 'Wait'}
    assert restored.store.time == 2


def test_restore_rejects_type_change():
    engine, _, _ = _echo_engine()
    snapshot = engine.snapshot_state()
    changed = parse_model(ECHO.replace("int value = 0;", "bool value = false;")
                              .replace("update echoed = value * 2;", "update echoed = 1;"))
    with pytest.raises(TypeMismatch) as info:
        restore_state(engine, snapshot, changed)
    assert info.value.names == ['value']


if __name__ == "__main__":
    test_signal_round_trip()
    test_signals_are_delivered_in_order()
    test_restore_into_new_model()
