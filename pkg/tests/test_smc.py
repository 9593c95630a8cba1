#!/usr/bin/env python
"""
Tests for statistical model checking: sample-size bounds, intervals,
probability estimation and simulation queries.
"""

import threading
from pathlib import Path

import pytest

from src.activforms.model.parser import load_model, parse_model
from src.activforms.smc.errors import Cancelled, DomainError, InsufficientSamples, SMCError
from src.activforms.smc.estimator import (
    SEQUENTIAL, estimate_probability, run_simulation_query, runs_for_rsem, sweep_accuracy,
)
from src.activforms.smc.statistics import compute_rsem, required_runs_chernoff, summarize, wilson_interval

HEADS = 'Pr[<=10](<> Coin.Heads)'

SAMPLER = """
double total = 0.0;

automaton Sampler {
    clock t;
    location Draw initial { invariant t <= 1; }
    edge Draw -> Draw { guard t >= 1; update total = total + random(2.0), t = 0; }
}

system Sampler;
"""


@pytest.fixture(scope='module')
def coin():
    return load_model(Path('models/examples/fair_branch.ta'))


def test_chernoff_bound():
    assert required_runs_chernoff(0.05, 0.05) == 738
    assert required_runs_chernoff(0.01, 0.05) == 18445
    assert required_runs_chernoff(0.1, 0.05) < required_runs_chernoff(0.05, 0.05)
    for epsilon in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            required_runs_chernoff(epsilon, 0.05)
    with pytest.raises(DomainError):
        required_runs_chernoff(0.05, 1.5)


def test_wilson_interval():
    low, high = wilson_interval(48, 100, 0.05)
    assert low == pytest.approx(0.3846, abs=1e-3)
    assert high == pytest.approx(0.5768, abs=1e-3)
    assert wilson_interval(0, 0, 0.05) == (0.0, 1.0)
    low, high = wilson_interval(0, 50, 0.05)
    assert low == 0.0 and 0.0 < high < 0.1
    low, high = wilson_interval(50, 50, 0.05)
    assert high == 1.0 and 0.9 < low < 1.0


def test_rsem():
    assert compute_rsem([1, 2, 3, 4, 5]) == pytest.approx(23.57, abs=0.01)
    assert compute_rsem([0.0, 0.0, 0.0]) is None
    with pytest.raises(InsufficientSamples):
        compute_rsem([1.0])

    stats = summarize('x', [2.0, 4.0])
    assert stats.mean == 3.0
    assert stats.n == 2
    assert not stats.zero_mean


def test_fair_branch_estimate(coin):
    estimate = estimate_probability(coin, HEADS, epsilon=0.05, alpha=0.001, seed=42)
    print(f"Pr estimate {estimate.point:.3f} after {estimate.runs} runs ({estimate.stopping_rule})")

    assert estimate.contains(0.5)
    assert estimate.stopping_rule == SEQUENTIAL
    assert estimate.runs < required_runs_chernoff(0.05, 0.001)
    assert set(estimate.as_row()) == {'estimate', 'low', 'high', 'epsilon', 'alpha', 'runs',
                                      'stopping_rule', 'millis'}


def test_estimates_are_reproducible(coin):
    first = estimate_probability(coin, HEADS, epsilon=0.1, alpha=0.05, seed=3)
    second = estimate_probability(coin, HEADS, epsilon=0.1, alpha=0.05, seed=3)
    assert (first.point, first.runs) == (second.point, second.runs)


def test_runs_grow_as_epsilon_shrinks(coin):
    loose = estimate_probability(coin, HEADS, epsilon=0.1, alpha=0.05)
    tight = estimate_probability(coin, HEADS, epsilon=0.05, alpha=0.05)
    assert loose.stopping_rule == SEQUENTIAL
    assert loose.runs < tight.runs


def test_certain_event_stops_early():
    network = parse_model("automaton A { location Done initial; } system A;")
    estimate = estimate_probability(network, 'Pr[<=5](<> A.Done)', epsilon=0.01, alpha=0.05)
    assert estimate.point == 1.0
    assert estimate.stopping_rule == SEQUENTIAL
    assert estimate.runs < required_runs_chernoff(0.01, 0.05)


def test_strict_invariant_stops_short_of_bound():
    timer = """
    automaton Timer {
        clock x;
        location Armed initial { invariant x %s 2; }
        location Fired;
        edge Armed -> Fired { guard x >= 2; }
    }
    system Timer;
    """
    closed = estimate_probability(parse_model(timer % '<='), 'Pr[<=5](<> Timer.Fired)', epsilon=0.05, alpha=0.05)
    strict = estimate_probability(parse_model(timer % '<'), 'Pr[<=5](<> Timer.Fired)', epsilon=0.05, alpha=0.05)
    assert closed.point == 1.0
    # x may only approach 2, so the guard never holds
    assert strict.point == 0.0


def test_cancel(coin):
    cancel = threading.Event()
    cancel.set()
    with pytest.raises(Cancelled):
        estimate_probability(coin, HEADS, cancel=cancel)


def test_wrong_query_kind(coin):
    with pytest.raises(SMCError):
        estimate_probability(coin, 'A[] true')
    with pytest.raises(SMCError):
        run_simulation_query(coin, HEADS)


def test_simulation_query():
    network = parse_model(SAMPLER)
    stats = run_simulation_query(network, 'simulate 50 [<=10] { total }', seed=1)

    assert stats.runs == 50
    total = stats['total']
    print(f"total: mean={total.mean:.2f} sd={total.sd:.2f} rsem={total.rsem:.2f}%")
    assert 8.0 < total.mean < 12.0
    assert total.rsem < 10.0
    assert stats.as_rows()[0]['expression'] == 'total'

    # a query written with one run falls back to the default run count
    assert run_simulation_query(network, 'simulate 1 [<=2] { total }').runs == 30


def test_runs_for_rsem():
    network = parse_model(SAMPLER)
    assert runs_for_rsem(network, 'simulate 1 [<=10] { total }', target_rsem=50.0) == 10


def test_sweep_accuracy(coin):
    frame = sweep_accuracy(coin, HEADS, [(0.1, 0.1), (0.1, 0.05)], repetitions=2)
    assert len(frame) == 4
    assert {'epsilon', 'alpha', 'runs', 'repetition'} <= set(frame.columns)


@pytest.mark.slow
def test_interval_coverage_and_cost(coin):
    """Repeated estimates cover the true probability at the requested confidence."""
    estimates = [estimate_probability(coin, HEADS, epsilon=0.05, alpha=0.05, seed=rep << 16) for rep in range(200)]
    coverage = sum(e.contains(0.5) for e in estimates) / len(estimates)
    loose_runs = sum(e.runs for e in estimates) / len(estimates)
    print(f"  coverage {coverage:.3f}, mean runs {loose_runs:.0f}")
    assert coverage >= 0.9

    tight = [estimate_probability(coin, HEADS, epsilon=0.01, alpha=0.05, seed=rep << 16) for rep in range(3)]
    tight_runs = sum(e.runs for e in tight) / len(tight)
    assert tight_runs >= 5 * loose_runs


@pytest.mark.slow
def test_packet_loss_model_matches_oracle():
    """The stochastic packet-loss model agrees with the closed-form expectation."""
    import numpy as np

    from src.activforms.deltaiot.binding import UncertaintySnapshot, bind_uncertainties
    from src.activforms.deltaiot.quality import oracle_expected_packet_loss
    from src.activforms.deltaiot.topology import default_topology
    from src.activforms.mapek.analyzer import model_query
    from src.activforms.mapek.options import AdaptationOption, option_distribution

    topology = default_topology()
    template = load_model(Path('models/quality/packet_loss.ta'))
    n_links = len(topology.links)
    close = 0
    for instance in range(20):
        rng = np.random.default_rng(instance)
        distribution = option_distribution(topology, int(rng.integers(0, topology.option_count)))
        snr = tuple(float(s) for s in rng.uniform(-12.0, 8.0, n_links))
        sigmas = [float(s) for s in rng.uniform(0.0, 3.0, n_links)]
        traffic = {m: float(rng.uniform(0.2, 1.0)) for m in topology.sensors}

        option = AdaptationOption(instance, (15,) * n_links, distribution, snr)
        snapshot = UncertaintySnapshot(topology=topology, traffic=traffic, snr_sigma=sigmas)
        network = bind_uncertainties(template, snapshot, option)
        estimate = estimate_probability(network, model_query(network, 'PacketLoss'), epsilon=0.01, alpha=0.05,
                                        seed=instance)
        expected = oracle_expected_packet_loss(topology, distribution, traffic, snr, sigmas)
        print(f"  instance {instance}: estimate {estimate.point:.4f}, oracle {expected:.4f}")
        close += abs(estimate.point - expected) <= 0.02
    assert close >= 18


if __name__ == "__main__":
    test_chernoff_bound()
    test_wilson_interval()
    test_fair_branch_estimate(load_model(Path('models/examples/fair_branch.ta')))
