#!/usr/bin/env python
"""
Tests for the DeltaIoT managed system: topology, quality formulas,
uncertainty profiles, the cycle simulator and its probe/effector.
"""

import numpy as np
import pandas as pd
import pytest

from src.activforms.deltaiot.errors import CycleDetected, DeltaIoTError, SettingsRangeError, UnknownMote, \
    UnknownPeriod
from src.activforms.deltaiot.probe import DeltaIoTEffector, DeltaIoTProbe, period_cycles
from src.activforms.deltaiot.profiles import UncertaintyProfile, SNRNoise, load_profile, profile_from_dict
from src.activforms.deltaiot.quality import (
    PCR, analytic_cycle_energy, apportion, expected_link_failure, link_failure_rate, listening_energy,
    oracle_expected_packet_loss,
    transmission_energy,
)
from src.activforms.deltaiot.simulator import DeltaIoTSimulator, LinkSetting
from src.activforms.deltaiot.topology import (
    default_topology, load_topology, scaled_topology, topology_from_dict,
)

# gateway 1 <- 2 <- 3, both links far above the failure threshold
CHAIN = {'gateway': 1, 'links': [
    {'source': 2, 'dest': 1, 'snr_alpha': 5.0, 'snr_beta': 1.0},
    {'source': 3, 'dest': 2, 'snr_alpha': 5.0, 'snr_beta': 1.0},
]}


def _quiet_profile(**kwargs) -> UncertaintyProfile:
    return UncertaintyProfile(noise=SNRNoise(0.0, 0.0), default_traffic=(1.0,), **kwargs)


def test_default_topology():
    topology = default_topology()
    assert len(topology.motes) == 15
    assert len(topology.links) == 17
    assert topology.multi_parent_motes == [7, 10, 12]
    assert topology.option_count == 216
    assert topology.parent_links(7) == [5, 6]
    assert topology.parents(12) == [7, 3]
    assert topology.hops_to_gateway(8) == 1

    order = topology.child_first_order()
    for index, link in enumerate(topology.links):
        if link.dest != topology.gateway:
            assert order.index(link.source) < order.index(link.dest), index


def test_topology_file_matches_default():
    assert load_topology('configs/topology_default.yaml') == default_topology()


def test_scaled_topologies():
    for motes, options in ((5, 6), (10, 36), (15, 216), (20, 1296), (25, 7776)):
        topology = scaled_topology(motes)
        assert topology.option_count == options, motes
        assert len(topology.motes) == motes


def test_topology_validation():
    with pytest.raises(CycleDetected):
        topology_from_dict({'gateway': 1, 'links': [
            {'source': 2, 'dest': 3, 'snr_alpha': 0, 'snr_beta': 1},
            {'source': 3, 'dest': 2, 'snr_alpha': 0, 'snr_beta': 1},
            {'source': 2, 'dest': 1, 'snr_alpha': 0, 'snr_beta': 1}]})
    with pytest.raises(DeltaIoTError):
        topology_from_dict({'gateway': 1, 'links': [{'source': 2, 'dest': 1}]})
    with pytest.raises(UnknownMote):
        default_topology().parent_links(99)


def test_link_failure_rate():
    assert link_failure_rate(5.0) == 0.0
    assert link_failure_rate(0.0) == 0.0
    assert link_failure_rate(-10.0) == pytest.approx(0.5)
    assert link_failure_rate(-20.0) == pytest.approx(1.0)
    assert link_failure_rate(-50.0) == 1.0
    assert link_failure_rate(-80.0) == 1.0


def test_expected_link_failure_matches_sampling():
    rng = np.random.default_rng(0)
    for mean, sigma in ((-5.0, 3.0), (2.0, 2.0), (-19.0, 4.0)):
        samples = rng.normal(mean, sigma, 200_000)
        empirical = np.mean([link_failure_rate(s) for s in samples])
        assert expected_link_failure(mean, sigma) == pytest.approx(empirical, abs=0.005)
    assert expected_link_failure(-10.0, 0.0) == pytest.approx(0.5)


def test_energy_formulas():
    assert PCR[0] == 20.2
    assert PCR[15] == 38.9
    assert transmission_energy(10, 15) == pytest.approx(0.100362)
    assert transmission_energy(0, 0) == 0.0
    assert listening_energy() == pytest.approx(0.1136)
    with pytest.raises(SettingsRangeError):
        transmission_energy(10, 16)


def test_apportion():
    assert apportion(10, [40, 60]) == [4, 6]
    assert apportion(7, [50, 50]) == [3, 4]
    assert apportion(10, [0, 100]) == [0, 10]
    # a sum above 100 duplicates
    assert apportion(10, [100, 100]) == [10, 10]
    assert apportion(10, [100, 40]) == [10, 4]


def test_oracle_packet_loss():
    topology = default_topology()
    splits = [100] * len(topology.links)
    traffic = {m: 1.0 for m in topology.sensors}
    assert oracle_expected_packet_loss(topology, splits, traffic, [30.0] * 17) == pytest.approx(0.0)
    assert oracle_expected_packet_loss(topology, splits, traffic, [-60.0] * 17) == pytest.approx(1.0)

    chain = topology_from_dict(CHAIN)
    # mote 3's packets cross a half-failing link, mote 2's do not
    loss = oracle_expected_packet_loss(chain, [100, 100], {2: 1.0, 3: 1.0}, [10.0, -10.0])
    assert loss == pytest.approx(0.25)


def test_profiles():
    profile = load_profile('configs/profiles_default.yaml')
    assert profile.traffic_at(10, 0) == 1.0
    assert profile.traffic_at(10, 12) == 1.0      # schedules wrap around
    assert profile.traffic_at(10, 6) == 0.0
    assert profile.traffic_at(2, 40) == 0.75
    assert profile.link_noise_for(5).sigma == 3.0
    assert profile.noise_sigmas(default_topology())[0] == 2.0

    queuing = load_profile('configs/profiles_queuing.yaml')
    assert queuing.slots(default_topology())[8] == 24
    assert queuing.send_queue_capacity == queuing.receive_queue_capacity == 60

    with pytest.raises(DeltaIoTError):
        profile_from_dict({'traffic': {'default': [1.5]}})
    with pytest.raises(DeltaIoTError):
        profile_from_dict({'send_queue_capacity': 120})
    with pytest.raises(FileNotFoundError):
        load_profile('configs/no_such_profile.yaml')


def test_lossless_cycle():
    simulator = DeltaIoTSimulator(topology_from_dict(CHAIN), _quiet_profile(), seed=1)
    record = simulator.simulate_cycle()

    assert record.packet_loss == 0.0
    assert record.latency == 0.0
    # 10 packets over 3->2 and 20 over 2->1 at power 15, plus two listening sensors
    expected = transmission_energy(30, 15) + 2 * listening_energy()
    assert record.energy_consumption == pytest.approx(expected)
    assert simulator.counters[0].balanced


def test_analytic_energy_matches_lossless_cycle(tmp_path):
    topology = topology_from_dict(CHAIN)
    simulator = DeltaIoTSimulator(topology, _quiet_profile(), seed=1)
    record = simulator.simulate_cycle()

    analytic = analytic_cycle_energy(topology, [15, 15], [100, 100], {2: 10, 3: 10}, listening=listening_energy())
    assert record.energy_consumption == pytest.approx(analytic)

    simulator.export_qos(tmp_path / "qos.csv")
    frame = pd.read_csv(tmp_path / "qos.csv")
    assert len(frame) == 1
    assert frame["packet_loss"][0] == 0.0


def test_failing_link_loses_packets():
    topology = topology_from_dict({'gateway': 1, 'links': [
        {'source': 2, 'dest': 1, 'snr_alpha': 5.0, 'snr_beta': 1.0},
        {'source': 3, 'dest': 2, 'snr_alpha': -100.0, 'snr_beta': 1.0}]})
    record = DeltaIoTSimulator(topology, _quiet_profile()).simulate_cycle()
    assert record.packet_loss == pytest.approx(0.5)


def test_slot_limit_delays_packets():
    simulator = DeltaIoTSimulator(topology_from_dict(CHAIN), _quiet_profile(link_slots={0: 5}))
    first = simulator.simulate_cycle()
    second = simulator.simulate_cycle()

    assert first.packet_loss == 0.0
    assert first.latency == 0.0
    assert second.latency == 1.0
    assert all(c.balanced for c in simulator.counters)


def test_simulator_is_reproducible():
    runs = []
    for _ in range(2):
        simulator = DeltaIoTSimulator(default_topology(), load_profile('configs/profiles_default.yaml'), seed=9)
        runs.append(simulator.run(5))
    assert runs[0] == runs[1]
    simulator.print_statistics()
    assert list(simulator.history_frame().columns) == ['cycle', 'packet_loss', 'energy', 'latency',
                                                       'configuration']


def test_every_cycle_balances():
    simulator = DeltaIoTSimulator(default_topology(), load_profile('configs/profiles_queuing.yaml'), seed=3)
    simulator.run(10)
    assert all(c.balanced for c in simulator.counters)
    for record in simulator.history:
        assert 0.0 <= record.packet_loss <= 1.0
        assert 0.0 <= record.latency <= 1.0


def test_probe_and_effector():
    simulator = DeltaIoTSimulator(default_topology(), load_profile('configs/profiles_default.yaml'))
    probe, effector = DeltaIoTProbe(simulator), DeltaIoTEffector(simulator)
    assert probe.get_network_qos(1) == []
    simulator.run(3)

    motes = probe.get_all_motes()
    assert [m.moteid for m in motes] == list(range(2, 16))
    mote7 = next(m for m in motes if m.moteid == 7)
    assert [l.destination for l in mote7.links] == [2, 3]
    assert all(l.power == 15 and l.distribution == 100 for l in mote7.links)

    assert len(probe.get_network_qos(2)) == 2
    aggregated = probe.get_network_qos(3, aggregate=True)
    assert len(aggregated) == 1
    assert aggregated[0].energy_consumption == pytest.approx(
        sum(r.energy_consumption for r in simulator.history))

    effector.set_mote_settings(7, [LinkSetting(7, 2, 5, 40), LinkSetting(7, 3, 5, 60)])
    assert simulator.settings()[0][5] == 15      # applies from the next cycle
    simulator.simulate_cycle()
    power, distribution = simulator.settings()
    assert (power[5], distribution[5], distribution[6]) == (5, 40, 60)

    with pytest.raises(UnknownMote):
        effector.set_mote_settings(1, [])
    with pytest.raises(UnknownMote):
        effector.set_mote_settings(7, [LinkSetting(7, 9, 5, 40)])
    with pytest.raises(SettingsRangeError):
        effector.set_mote_settings(7, [LinkSetting(7, 2, 5, 30)])

    effector.reset_default_configuration()
    simulator.simulate_cycle()
    assert simulator.settings() == simulator.reference_settings()


def test_period_cycles():
    assert period_cycles(5) == 5
    assert period_cycles('570s') == 1
    assert period_cycles('12h') == 76
    for bad in ('soon', 0, '1s'):
        with pytest.raises(UnknownPeriod):
            period_cycles(bad)


if __name__ == "__main__":
    test_default_topology()
    test_lossless_cycle()
    test_probe_and_effector()
