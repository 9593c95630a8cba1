#!/usr/bin/env python
"""
Tests for the feedback loop: goals, adaptation options, knowledge updates,
selection, planning and template validation.
"""

import pytest

from src.activforms.deltaiot.errors import SettingsRangeError
from src.activforms.deltaiot.probe import DeltaIoTEffector, DeltaIoTProbe
from src.activforms.deltaiot.profiles import SNRNoise, UncertaintyProfile, load_profile
from src.activforms.deltaiot.simulator import DeltaIoTSimulator, LinkSetting
from src.activforms.deltaiot.topology import MAX_POWER, default_topology, topology_from_dict
from src.activforms.mapek.analyzer import select_best_option, survivors
from src.activforms.mapek.errors import TopologyMismatch
from src.activforms.mapek.feedback_loop import load_mape_model, mape_bindings
from src.activforms.mapek.goals import ENERGY, LATENCY, PACKET_LOSS, load_goals, parse_goals
from src.activforms.mapek.knowledge import Knowledge, NetworkSettings, observe, update_knowledge
from src.activforms.mapek.options import (
    PENDING, SKIPPED, VERIFIED, AdaptationOption, compose_adaptation_options, compute_power_setting,
    option_distribution,
)
from src.activforms.mapek.planner import CHANGE_DISTRIBUTION, CHANGE_POWER, build_plan, execute_plan, \
    mote_settings
from src.activforms.mapek.templates import MAPE_TEMPLATES, validate_template_instantiation
from src.activforms.model.parser import parse_model
from src.activforms.utils.errors import ConfigError

CHAIN = {'gateway': 1, 'links': [
    {'source': 2, 'dest': 1, 'snr_alpha': 5.0, 'snr_beta': 1.0},
    {'source': 3, 'dest': 2, 'snr_alpha': 5.0, 'snr_beta': 1.0},
]}


def _option(index, loss, energy, status=VERIFIED):
    option = AdaptationOption(index=index, power=(15,), distribution=(100,), snr=(0.0,), status=status)
    if status == VERIFIED:
        option.estimates.update({PACKET_LOSS: loss, ENERGY: energy})
    return option


def test_goal_files():
    goals = load_goals('configs/goals_default.txt')
    assert goals.qualities == (PACKET_LOSS, ENERGY)
    assert goals.threshold(PACKET_LOSS) == 10.0
    assert goals.threshold(LATENCY) is None
    assert goals.lines() == ('satisfaction packetLoss < 10', 'optimize energyConsumption min')

    latency = load_goals('configs/goals_latency.txt')
    assert latency.qualities == (PACKET_LOSS, ENERGY, LATENCY)
    assert latency.threshold(LATENCY) == 5.0


@pytest.mark.parametrize('text', [
    'satisfaction throughput < 10\noptimize energyConsumption min',
    'satisfaction packetLoss ~ 10\noptimize energyConsumption min',
    'satisfaction packetLoss < ten\noptimize energyConsumption min',
    'optimize energyConsumption sideways',
    'satisfaction packetLoss < 10',
    'optimize energyConsumption min\noptimize packetLoss min',
    'minimize energyConsumption',
])
def test_goal_errors(text):
    with pytest.raises(ConfigError):
        parse_goals(text)


def test_compute_power_setting():
    assert compute_power_setting(-7.29, 0.83, measured_snr=-7.29 + 0.83 * 15, current_power=15) == 9
    # 3 dB of extra interference asks for more power
    assert compute_power_setting(-7.29, 0.83, measured_snr=-7.29 + 0.83 * 15 - 3.0, current_power=15) == 13
    assert compute_power_setting(-30.0, 0.5, measured_snr=-22.5, current_power=15) == MAX_POWER
    assert compute_power_setting(5.0, 1.0, measured_snr=20.0, current_power=15) == 0
    with pytest.raises(ValueError):
        compute_power_setting(0.0, 0.0, 0.0, 15)


def test_option_distribution():
    topology = default_topology()
    first = option_distribution(topology, 0)
    assert (first[5], first[6]) == (0, 100)

    one = option_distribution(topology, 1)
    assert (one[5], one[6]) == (20, 80)

    # the second digit belongs to mote 10
    six = option_distribution(topology, 6)
    a, b = topology.parent_links(10)
    assert (six[5], six[6]) == (0, 100)
    assert (six[a], six[b]) == (20, 80)

    last = option_distribution(topology, topology.option_count - 1)
    for mote in topology.multi_parent_motes:
        a, b = topology.parent_links(mote)
        assert (last[a], last[b]) == (100, 0)
    single = [i for i, link in enumerate(topology.links) if link.source not in topology.multi_parent_motes]
    assert all(last[i] == 100 for i in single)


def test_compose_adaptation_options():
    topology = default_topology()
    knowledge = Knowledge.initial(topology)
    options = compose_adaptation_options(knowledge)

    assert len(options) == 216
    assert [o.index for o in options] == list(range(216))
    assert all(o.status == PENDING for o in options)
    for i, link in enumerate(topology.links):
        expected = compute_power_setting(link.snr_alpha, link.snr_beta, link.predicted_snr(MAX_POWER), MAX_POWER)
        assert options[0].power[i] == expected
    assert len({o.distribution for o in options}) == 216

    fixed = compose_adaptation_options(knowledge, powers=[3] * len(topology.links))
    assert fixed[0].power == (3,) * len(topology.links)
    with pytest.raises(TopologyMismatch):
        compose_adaptation_options(knowledge, powers=[3])


def test_update_knowledge():
    topology = topology_from_dict(CHAIN)
    profile = UncertaintyProfile(noise=SNRNoise(0.0, 0.0), default_traffic=(1.0,))
    simulator = DeltaIoTSimulator(topology, profile, seed=1)
    probe = DeltaIoTProbe(simulator)
    knowledge = Knowledge.initial(topology)

    qos = simulator.simulate_cycle()
    observation = observe(topology, probe.get_all_motes(), qos)
    assert observation.packet_loss == 0.0
    assert observation.settings == NetworkSettings.reference(topology)
    first = update_knowledge(knowledge, observation)
    assert first.analysis_required
    assert 'uncertainties' in first.reasons
    assert first.knowledge.initialized
    assert not knowledge.initialized

    qos = simulator.simulate_cycle()
    second = update_knowledge(first.knowledge, observe(topology, probe.get_all_motes(), qos))
    assert not second.analysis_required
    assert second.knowledge.snr == pytest.approx([20.0, 20.0])


def test_settings_drift_requires_analysis():
    topology = topology_from_dict(CHAIN)
    profile = UncertaintyProfile(noise=SNRNoise(0.0, 0.0), default_traffic=(1.0,))
    simulator = DeltaIoTSimulator(topology, profile, seed=1)
    probe = DeltaIoTProbe(simulator)
    record = simulator.simulate_cycle()
    update = update_knowledge(Knowledge.initial(topology), observe(topology, probe.get_all_motes(), record))

    DeltaIoTEffector(simulator).set_mote_settings(3, [LinkSetting(3, 2, 10, 100)])
    record = simulator.simulate_cycle()
    drifted = update_knowledge(update.knowledge, observe(topology, probe.get_all_motes(), record))
    assert drifted.analysis_required
    assert 'settings' in drifted.reasons


def test_select_best_option():
    goals = parse_goals('satisfaction packetLoss < 10\noptimize energyConsumption min')
    options = [
        _option(0, loss=12.0, energy=10.0),
        _option(1, loss=5.0, energy=12.5),
        _option(2, loss=8.0, energy=12.5),
        _option(3, loss=1.0, energy=13.0),
        _option(4, 0.0, 0.0, status=SKIPPED),
    ]
    assert [o.index for o in survivors(options, goals)] == [1, 2, 3]
    # equal energy: lowest index wins
    assert select_best_option(options, goals).index == 1

    maximize = parse_goals('optimize packetLoss max')
    assert select_best_option(options, maximize).index == 0

    strict = parse_goals('satisfaction packetLoss < 0.5\noptimize energyConsumption min')
    assert select_best_option(options, strict) is None


def test_build_and_execute_plan():
    topology = default_topology()
    current = NetworkSettings.reference(topology)
    power, distribution = list(current.power), list(current.distribution)
    power[5], distribution[5], distribution[6] = 9, 40, 60
    target = NetworkSettings(tuple(power), tuple(distribution))

    plan = build_plan(current, target, topology)
    assert [(s.kind, s.link) for s in plan.steps] == [(CHANGE_POWER, 5), (CHANGE_DISTRIBUTION, 5),
                                                      (CHANGE_DISTRIBUTION, 6)]
    assert plan.motes() == [7]
    assert plan.apply(current) == target
    assert mote_settings(plan, 7, topology) == [LinkSetting(7, 2, 9, 40), LinkSetting(7, 3, 15, 60)]
    assert build_plan(target, target, topology).empty

    simulator = DeltaIoTSimulator(topology, load_profile('configs/profiles_default.yaml'))
    assert execute_plan(plan, DeltaIoTEffector(simulator), topology) == (7,)
    simulator.simulate_cycle()
    assert NetworkSettings(*map(tuple, simulator.settings())) == target

    failsafe = build_plan(target, target, topology, failsafe=True)
    assert not failsafe.empty
    assert execute_plan(failsafe, DeltaIoTEffector(simulator), topology) == ()
    simulator.simulate_cycle()
    assert simulator.settings() == simulator.reference_settings()


def test_plan_rejects_bad_settings():
    topology = default_topology()
    current = NetworkSettings.reference(topology)
    with pytest.raises(TopologyMismatch):
        build_plan(current, NetworkSettings((15,), (100,)), topology)
    power = list(current.power)
    power[0] = MAX_POWER + 1
    with pytest.raises(SettingsRangeError):
        build_plan(current, NetworkSettings(tuple(power), current.distribution), topology)
    with pytest.raises(TopologyMismatch):
        NetworkSettings((15, 15), (100,))


def test_mape_bindings():
    topology = default_topology()
    values = mape_bindings(topology, load_goals('configs/goals_default.txt'))
    assert values['n_links'] == 17
    assert values['max_options'] == 216
    assert values['max_packet_loss'] == 10.0
    assert values['max_latency'] == 5.0
    assert values['link_split'][5] == values['link_split'][6] == 0
    assert (values['link_first'][5], values['link_first'][6]) == (1, 0)


def test_mape_model_instantiates_templates():
    topology = default_topology()
    for path, goals in (('models/deltaiot_mape.ta', 'configs/goals_default.txt'),
                        ('models/deltaiot_mape_latency.ta', 'configs/goals_latency.txt')):
        model = load_mape_model(path, topology, load_goals(goals))
        assert set(model.slots()) <= set(model.binding_map())
        diagnostics = validate_template_instantiation(MAPE_TEMPLATES, model)
        assert diagnostics == [], path


def test_template_rules():
    model = parse_model("""
    automaton Monitor { location Waiting initial; }
    automaton Thing { location L initial; }
    lineage {
        Monitor = [Monitor];
        Thing = [Analyzer];
        Thing.Gone = <AdaptElement>;
        Thing.L = [Bogus];
    }
    """)
    diagnostics = validate_template_instantiation(MAPE_TEMPLATES, model)
    for diagnostic in diagnostics:
        print(f"  {diagnostic}")

    rules = {(d.rule, d.element) for d in diagnostics}
    assert (1, 'Thing') in rules
    assert (2, 'Thing.Gone') in rules
    assert (5, 'Thing.L') in rules
    assert (5, 'Planner') in rules
    assert (5, 'Monitor') not in rules


@pytest.mark.slow
def test_managing_system_cycles():
    from src.activforms.mapek.analyzer import QualityModels
    from src.activforms.mapek.feedback_loop import LoopSettings, ManagingSystem

    topology = default_topology()
    goals = load_goals('configs/goals_default.txt')
    simulator = DeltaIoTSimulator(topology, load_profile('configs/profiles_default.yaml'), seed=5)
    system = ManagingSystem(simulator, load_mape_model('models/deltaiot_mape.ta', topology, goals), goals,
                            QualityModels.from_paths('models/quality/packet_loss.ta', 'models/quality/energy.ta'),
                            LoopSettings(simulation_runs=5, epsilon=0.2, alpha=0.2))
    try:
        records = system.run(2)
    finally:
        system.close()
    system.print_statistics()

    assert len(records) == 2
    assert records[0].analysis_required
    assert system.stats['selection_mismatches'] == 0


@pytest.mark.slow
def test_failsafe_resets_reference_configuration():
    from src.activforms.mapek.analyzer import QualityModels
    from src.activforms.mapek.feedback_loop import LoopSettings, ManagingSystem

    topology = default_topology()
    # no estimate is below zero, so every option fails the goals
    goals = parse_goals('satisfaction packetLoss < 0\noptimize energyConsumption min')
    simulator = DeltaIoTSimulator(topology, load_profile('configs/profiles_default.yaml'), seed=5)
    mote = topology.sensors[0]
    link = topology.links[topology.parent_links(mote)[0]]
    simulator.set_mote_settings(mote, [LinkSetting(mote, link.dest, 5, 100)])
    system = ManagingSystem(simulator, load_mape_model('models/deltaiot_mape.ta', topology, goals), goals,
                            QualityModels.from_paths('models/quality/packet_loss.ta', 'models/quality/energy.ta'),
                            LoopSettings(simulation_runs=5, epsilon=0.2, alpha=0.2))
    resets = []
    reset = system.effector.reset_default_configuration
    system.effector.reset_default_configuration = lambda: (resets.append(simulator.cycle), reset())
    try:
        record = system.run_cycle()
    finally:
        system.close()

    assert record.adapted and record.failsafe
    assert record.best_option == -1
    assert resets == [1]
    assert simulator.pending == {i: [MAX_POWER, 100] for i in range(len(topology.links))}
    assert system.knowledge.applied == NetworkSettings.reference(topology)


if __name__ == "__main__":
    test_goal_files()
    test_compose_adaptation_options()
    test_build_and_execute_plan()
