import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import THRESHOLD_CANDIDATES, noisy_phone_network
from supplynet import CommunicationNetwork, FirmRecord, SectorFlowTable, ValidationError
from supplynet.esri import esri_all
from supplynet.reconstruct import (
    ReconstructionConfig,
    assign_gravity_weights,
    direction_probabilities,
    member_seed,
    reconstruct_ensemble,
    sample_directions,
    select_threshold,
    threshold_network,
    with_config,
)
from supplynet.topology import pmf_from_degrees

IOT = SectorFlowTable(("A01", "C10"), np.array([[10.0, 3400.0], [450.0, 10.0]]))


def _firms(ids, sector="C10", devices=3, size=1.0):
    return [FirmRecord(i, sector, size, devices) for i in ids]


# ---------------------------------------------------------------- config


def test_config_defaults_and_validation():
    cfg = ReconstructionConfig()
    assert (cfg.duration_threshold, cfg.device_threshold, cfg.ensemble_size) == (30.0, 0, 1)
    for bad in ({"duration_threshold": -1}, {"ensemble_size": 0}, {"device_threshold": -2},
                {"duration_threshold": float("nan")}):
        with pytest.raises(ValidationError):
            ReconstructionConfig(**bad)


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "rc.ini"
    p.write_text("duration_threshold = 45\ndevice_threshold = 1\nrng_seed = 9\nensemble_size = 4\n")
    cfg = ReconstructionConfig.from_file(p)
    assert cfg == ReconstructionConfig(45.0, 1, 9, 4)
    assert ReconstructionConfig.from_file(p, rng_seed=3, ensemble_size=None).rng_seed == 3
    assert with_config(cfg, device_threshold=0, rng_seed=None) == ReconstructionConfig(45.0, 0, 9, 4)
    (tmp_path / "bad.ini").write_text("colour = red\n")
    with pytest.raises(ValidationError):
        ReconstructionConfig.from_file(tmp_path / "bad.ini")


# ---------------------------------------------------------------- thresholds


def test_threshold_is_strict():
    comm = CommunicationNetwork.from_edges([("a", "b", 10.0), ("b", "c", 30.0), ("c", "d", 40.0)])
    out = threshold_network(comm, _firms("abcd"), ReconstructionConfig(30.0, 0))
    assert out.edges() == [("c", "d", 40.0)]
    assert out.ids == comm.ids  # isolated nodes stay


def test_threshold_zero_is_identity():
    comm = CommunicationNetwork.from_edges([("a", "b", 0.5), ("b", "c", 3.0)])
    assert threshold_network(comm, _firms("abc", devices=1), ReconstructionConfig(0.0, 0)) == comm


def test_device_threshold_applies_to_both_ends():
    comm = CommunicationNetwork.from_edges([("a", "b", 50.0), ("b", "c", 50.0), ("c", "d", 50.0)])
    firms = [FirmRecord("a", "C10", 1, 1), FirmRecord("b", "C10", 1, 5), FirmRecord("c", "C10", 1, 5),
             FirmRecord("d", "C10", 1, 2)]
    assert threshold_network(comm, firms, ReconstructionConfig(30.0, 2)).edges() == [("b", "c", 50.0)]
    assert threshold_network(comm, _firms("abcd", devices=1), ReconstructionConfig(0.0, 4)).m == 0


def test_threshold_needs_every_firm():
    comm = CommunicationNetwork.from_edges([("a", "b", 50.0)])
    with pytest.raises(ValidationError):
        threshold_network(comm, _firms("a"), ReconstructionConfig())


def test_select_threshold_own_pmf():
    comm = CommunicationNetwork.from_edges([("a", "b", 5.0), ("b", "c", 6.0), ("c", "a", 7.0), ("c", "d", 1.0)])
    ref = pmf_from_degrees(comm.degrees(), positive_only=True)
    best, scores = select_threshold(comm, _firms("abcd"), ref, [(0, 0)])
    assert best == (0.0, 0) and scores[(0.0, 0)] == 0.0


def test_select_threshold_tie_break():
    # both candidates keep the same single edge, so the KL values coincide
    comm = CommunicationNetwork.from_edges([("a", "b", 100.0)])
    ref = {1: 1.0}
    best, scores = select_threshold(comm, _firms("ab"), ref, [(50, 1), (20, 2), (20, 1)])
    assert len(set(scores.values())) == 1
    assert best == (20.0, 1)
    with pytest.raises(ValidationError):
        select_threshold(comm, _firms("ab"), ref, [])


def test_select_threshold_recovers_signal_layer():
    comm, firms, ref = noisy_phone_network()
    best, scores = select_threshold(comm, firms, ref, THRESHOLD_CANDIDATES)
    assert best == (30.0, 0)
    assert scores[best] == 0.0
    # the scan is exhaustive and the optimum is unique
    assert sorted(scores.values())[1] > 0.1
    assert set(scores) == set(THRESHOLD_CANDIDATES)


# ---------------------------------------------------------------- directions


def test_direction_probability_rule():
    a = np.array([0, 1, 0])
    b = np.array([1, 0, 0])
    p = direction_probabilities(IOT, a, b)
    assert p[0] == pytest.approx(3400 / 3850) and p[1] == pytest.approx(450 / 3850) and p[2] == 0.5
    zero = SectorFlowTable(("x", "y"), np.zeros((2, 2)))
    assert direction_probabilities(zero, np.array([0]), np.array([1]))[0] == 0.5


def _single_edge_frequency(sec_a, sec_b, draws, seed=0):
    # many disjoint copies of the same edge sampled in one network
    ids = [f"n{i}" for i in range(2 * draws)]
    firms = [FirmRecord(x, sec_a if k % 2 == 0 else sec_b, 1.0) for k, x in enumerate(ids)]
    comm = CommunicationNetwork(ids, np.arange(0, 2 * draws, 2), np.arange(1, 2 * draws, 2), np.ones(draws))
    net = sample_directions(comm, firms, IOT, seed)
    return float(np.mean(net.src % 2 == 0)), net


def test_direction_frequency_matches_io_odds():
    freq, net = _single_edge_frequency("A01", "C10", 100_000)
    assert abs(freq - 3400 / 3850) <= 0.01
    assert np.all(net.weight == 1.0) and net.m == 100_000
    freq, _ = _single_edge_frequency("C10", "C10", 100_000, seed=1)
    assert abs(freq - 0.5) <= 0.005


def test_unknown_sector_rejected():
    comm = CommunicationNetwork.from_edges([("a", "b", 50.0)])
    with pytest.raises(ValidationError):
        sample_directions(comm, _firms("ab", sector="Q86"), IOT, 0)
    net = sample_directions(comm, _firms("ab", sector="Q86"), IOT, 0, sector_map={"Q86": "C10"})
    assert net.m == 1 and list(net.sectors) == ["Q86", "Q86"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 40), st.floats(0.05, 0.6))
def test_directions_preserve_skeleton(seed, n, density):
    rng = np.random.default_rng(seed)
    a, b = np.triu_indices(n, 1)
    keep = rng.random(a.size) < density
    ids = [f"n{i}" for i in range(n)]
    comm = CommunicationNetwork(ids, a[keep], b[keep], np.full(int(keep.sum()), 40.0))
    firms = [FirmRecord(i, rng.choice(["A01", "C10"]), 1.0) for i in ids]
    net = sample_directions(comm, firms, IOT, seed)
    assert net.undirected_pairs() == comm.edge_pairs()
    assert net.m == comm.m


# ---------------------------------------------------------------- weights


def test_gravity_weights():
    comm = CommunicationNetwork.from_edges([("a", "b", 40.0), ("b", "c", 40.0)])
    firms = [FirmRecord("a", "A01", 2.0), FirmRecord("b", "C10", 3.0), FirmRecord("c", "C10", 1.0)]
    net = assign_gravity_weights(sample_directions(comm, firms, IOT, 0))
    w = {frozenset((s, d)): x for s, d, x in net.arcs()}
    assert w == {frozenset("ab"): 6.0, frozenset("bc"): 3.0}
    flat = assign_gravity_weights(sample_directions(comm, _firms("abc"), IOT, 0))
    assert np.all(flat.weight == 1.0)


def test_gravity_rescaling_leaves_esri_unchanged():
    comm, firms, _ = noisy_phone_network(n=150, n_signal=200, n_noise=50)
    rng = np.random.default_rng(3)
    firms = [FirmRecord(f.id, rng.choice(["A01", "C10"]), float(rng.lognormal()), f.devices) for f in firms]
    net = assign_gravity_weights(sample_directions(comm, firms, IOT, 5))
    big = assign_gravity_weights(net.replace(sizes=net.sizes * 1000.0))
    assert np.allclose(big.weight, net.weight * 1e6, rtol=1e-12)
    np.testing.assert_allclose(esri_all(big).values, esri_all(net).values, atol=1e-12)


# ---------------------------------------------------------------- ensembles


def test_member_seeds_are_independent_streams():
    a = np.random.default_rng(member_seed(4, 0)).random(4)
    b = np.random.default_rng(member_seed(4, 1)).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, np.random.default_rng(member_seed(4, 0)).random(4))


def test_ensemble_members():
    comm, firms, _ = noisy_phone_network(n=200, n_signal=300, n_noise=100)
    rng = np.random.default_rng(1)
    firms = [FirmRecord(f.id, rng.choice(["A01", "C10"]), 1.0 + f.devices, f.devices) for f in firms]
    one = reconstruct_ensemble(comm, firms, IOT, ReconstructionConfig(30.0, 0, 11, 1))
    assert len(one) == 1
    cfg = ReconstructionConfig(30.0, 0, 11, 100)
    ens = reconstruct_ensemble(comm, firms, IOT, cfg)
    skeleton = threshold_network(comm, firms, cfg).edge_pairs()
    assert len(ens) == 100
    assert all(net.undirected_pairs() == skeleton for net in ens)
    assert ens[0] == one[0]
    assert len({net.src.tobytes() for net in ens}) > 90
    again = reconstruct_ensemble(comm, firms, IOT, cfg)
    assert all(x == y and x.weight.tobytes() == y.weight.tobytes() for x, y in zip(ens, again))
    # member k does not depend on how many members were requested
    assert reconstruct_ensemble(comm, firms, IOT, ReconstructionConfig(30.0, 0, 11, 5))[4] == ens[4]
