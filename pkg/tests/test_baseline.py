import numpy as np
import pytest

from spacetime_ota.baseline import baseline_eta, baseline_evaluate
from spacetime_ota.network import (ChannelRealization, DataSamples, Topology, build_instance,
                                   generate_topology, draw_channels, draw_samples)

from conftest import make_instance


def test_unit_single_receiver():
    topo = Topology(1, 1, ((0, 0),))
    inst = build_instance(topo, ChannelRealization(np.ones((1, 1), complex)),
                          DataSamples(np.ones(1, complex)), 1.0, 0.3)
    assert baseline_eta(0, inst, 1.0) == 1.0
    res = baseline_evaluate(inst, 1)
    assert res.mse == pytest.approx(0.3)
    assert res.power_used[0] == pytest.approx(1.0)


def test_two_senders_by_hand():
    topo = Topology(2, 1, ((0, 0), (1, 0)))
    inst = build_instance(topo, ChannelRealization(np.array([[1.0], [2.0j]])),
                          DataSamples(np.ones(2, complex)), 1.0, 1.0)
    assert baseline_eta(0, inst, 1.0) == pytest.approx(2.0)


def test_uniform_power_split():
    rng = np.random.default_rng(0)
    topo = generate_topology(50, 30, 20, rng)
    inst = build_instance(topo, draw_channels(topo, rng), draw_samples(50, rng), 1.0, 0.1)
    res = baseline_evaluate(inst)
    assert res.per_receiver_power == pytest.approx(1.0 / 20)
    assert res.n_slots == 30
    j = 4
    assert res.eta[j] == pytest.approx(baseline_eta(j, inst, 1.0 / 20))


@pytest.mark.parametrize("seed", range(5))
def test_bottleneck_sender_hits_cap(seed):
    inst = make_instance(seed)
    res = baseline_evaluate(inst, 3)
    adj = inst.topology.adjacency
    for j in range(inst.n_receivers):
        col = res.slot_power[adj[:, j], j]
        assert col.max() == pytest.approx(res.per_receiver_power, rel=1e-12)
        assert np.all(col <= res.per_receiver_power * (1 + 1e-12))
    assert np.all(res.slot_power[~adj] == 0)
    assert np.all(res.power_used <= inst.p_max * (1 + 1e-12))
    assert np.allclose(res.mse_per_receiver * res.eta ** 2, inst.noise_var, rtol=1e-14)


def test_scaling_samples():
    inst = make_instance(2)
    c = 2.5
    scaled = build_instance(inst.topology, inst.channels, DataSamples(inst.s * c),
                            inst.p_max, inst.noise_var)
    a, b = baseline_evaluate(inst, 3), baseline_evaluate(scaled, 3)
    assert np.allclose(b.eta, a.eta / c, rtol=1e-14)
    assert np.allclose(b.mse_per_receiver, a.mse_per_receiver * c ** 2, rtol=1e-13)


def test_irregular_degree_needs_explicit_split():
    topo = Topology(2, 2, ((0, 0), (0, 1), (1, 1)))
    inst = build_instance(topo, ChannelRealization(np.ones((2, 2), complex)),
                          DataSamples(np.ones(2, complex)), 1.0, 1.0)
    with pytest.raises(ValueError):
        baseline_evaluate(inst)
    assert baseline_evaluate(inst, 2).n_slots == 2
