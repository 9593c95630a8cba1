#!/usr/bin/env python
"""
Tests for the model container format: parsing, type checking, expression
evaluation and printing.
"""

from pathlib import Path

import pytest

from src.activforms.model.errors import (
    ArrayIndexOutOfBounds, DivisionByZero, DuplicateDeclaration, EvaluationError,
    ModelSyntaxError, UnknownChannel,
)
from src.activforms.model.evaluator import eval_expression
from src.activforms.model.network import (
    DeadlockFreedomQuery, InvariantQuery, LeadsToQuery, ProbabilityQuery, ReachabilityQuery,
    SimulationQuery,
)
from src.activforms.model.parser import load_model, merge_networks, parse_model, parse_query
from src.activforms.model.printer import format_model
from src.activforms.model.typecheck import typecheck_model

EXAMPLES = Path('models/examples')


def test_parse_handshake():
    """The example network parses into two automata and four named queries."""
    network = load_model(EXAMPLES / 'handshake.ta')

    assert [a.name for a in network.automata] == ['Client', 'Server']
    assert network.process_names() == ('Client', 'Server')
    assert set(network.channels()) == {'request', 'reply'}
    assert [q.name for q in network.queries] == ['Responds', 'Bounded', 'Reachable', 'NoDeadlock']

    server = network.automaton('Server')
    assert server.initial == 'Ready'
    assert server.location('Busy').kind == 'committed'
    assert typecheck_model(network) == []
    print("✓ handshake parsed and type-checked")


def test_syntax_error_reports_position():
    text = "int x = 0\nautomaton A { location L initial; }\n"
    with pytest.raises(ModelSyntaxError) as info:
        parse_model(text, source='broken.ta')
    error = info.value
    assert error.line >= 1
    assert error.expected
    assert 'broken.ta' in str(error)


def test_duplicate_declaration():
    with pytest.raises(DuplicateDeclaration):
        parse_model("int a; int a;")
    with pytest.raises(DuplicateDeclaration):
        parse_model("automaton A { location L initial; location L; }")


def test_unknown_channel():
    text = "automaton A { location L initial; edge L -> L { sync ping!; } }"
    with pytest.raises(UnknownChannel):
        parse_model(text)
    # stubs may refer to channels declared by the model they complete
    assert parse_model(text, closed=False).automaton('A') is not None


def test_merge_rejects_clashing_names():
    model = parse_model("int shared = 1; automaton A { location L initial; }")
    stub = parse_model("int shared = 2; automaton B { location M initial; }")
    with pytest.raises(DuplicateDeclaration):
        merge_networks(model, stub)

    other = parse_model("automaton B { location M initial; }")
    merged = merge_networks(model, other)
    assert merged.process_names() == ('A', 'B')


def test_typecheck_diagnostics():
    """Structural problems are collected, not raised."""
    text = """
    int x;
    automaton A {
        location L initial;
        location K initial;
        branchpoint B;
        edge L -> Missing;
        edge L -> B;
        edge B -> L { weight 1; }
        edge B -> K;
    }
    """
    diagnostics = typecheck_model(parse_model(text))
    messages = ' | '.join(d.message for d in diagnostics)
    print(messages)

    assert 'exactly one initial location' in messages
    assert "'Missing' does not exist" in messages
    assert 'all or none' in messages


def test_typecheck_type_errors():
    text = """
    bool flag;
    int count;
    automaton A {
        location L initial;
        edge L -> L { guard flag; update count = 1.5; }
    }
    """
    diagnostics = typecheck_model(parse_model(text))
    assert len(diagnostics) == 1
    assert 'cannot assign' in diagnostics[0].message


def test_parameter_slots():
    network = parse_model("int n = $count; automaton A { location L initial; }")
    assert network.slots() == ('count',)
    assert typecheck_model(network)  # unbound slot

    bound = network.bind({'count': 3})
    assert typecheck_model(bound) == []
    assert bound.binding_map() == {'count': 3}


def test_integer_arithmetic():
    """Division and modulo truncate toward zero."""
    assert eval_expression('7 / 2') == 3
    assert eval_expression('-7 / 2') == -3
    assert eval_expression('-7 % 2') == -1
    assert eval_expression('7.0 / 2') == pytest.approx(3.5)
    assert eval_expression('3 <? 5') == 3
    assert eval_expression('true ? 1 : 2') == 1


def test_evaluation_errors():
    with pytest.raises(DivisionByZero):
        eval_expression('1 / zero', {'zero': 0})
    with pytest.raises(ArrayIndexOutOfBounds):
        eval_expression('values[3]', {'values': [1, 2, 3]})
    with pytest.raises(EvaluationError):
        eval_expression('random(1.0)')


def test_assignment_writes_back():
    env = {'x': 1, 'values': [0, 0]}
    eval_expression('values[1] = x + 4', env)
    assert env['values'] == [0, 5]
    eval_expression('x += 2', env)
    assert env['x'] == 3


def test_query_kinds():
    assert isinstance(parse_query('Pr[<=10](<> Coin.Heads)'), ProbabilityQuery)
    assert isinstance(parse_query('simulate 30 [<=5] { x, y }'), SimulationQuery)
    assert isinstance(parse_query('A[] no deadlock'), DeadlockFreedomQuery)
    assert isinstance(parse_query('A[] served <= 3'), InvariantQuery)
    assert isinstance(parse_query('E<> Client.Done'), ReachabilityQuery)
    assert isinstance(parse_query('Client.Waiting --> Client.Done'), LeadsToQuery)
    assert parse_query('simulate 30 [<=5] { x, y }').runs == 30


def test_print_then_parse():
    for name in ('handshake.ta', 'fair_branch.ta', 'starving.ta'):
        network = load_model(EXAMPLES / name)
        printed = format_model(network)
        again = parse_model(printed)
        assert again == network, name
        assert format_model(again) == printed


if __name__ == "__main__":
    test_parse_handshake()
    test_integer_arithmetic()
    test_print_then_parse()
