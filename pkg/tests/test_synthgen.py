import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supplynet import FirmRecord, LEONTIEF, LINEAR, ValidationError, build_supply_network
from supplynet.ingest import load_io_table, load_supply_network, write_firms, write_io_table, write_supply_edges
from supplynet.reconstruct import direction_probabilities
from supplynet.synthgen import aggregate_io_table, degree_pmf, generate_economy, pick_sectors
from supplynet.topology import degrees, powerlaw_tail_fit


@pytest.fixture(scope="module")
def sparse_economy():
    return generate_economy(10_000, 2.1, 2.4, seed=0)


@pytest.mark.parametrize("seed", range(4))
def test_degree_targets(seed):
    net, _ = generate_economy(10_000, 2.1, 2.4, seed=seed)
    k = degrees(net, "undirected")
    assert 1.9 <= k.mean() <= 2.3
    # stderr of the fit is about 0.2 here, from roughly 40 firms with k >= 30
    alpha, _ = powerlaw_tail_fit(k, 30)
    assert 2.1 <= alpha <= 2.7


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 3000), st.floats(1.0, 8.0), st.floats(1.5, 4.0))
def test_degree_pmf_hits_mean(n, mean, alpha):
    p = degree_pmf(n, mean, alpha)
    k = np.arange(1, p.size + 1)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    assert k @ p == pytest.approx(mean, rel=1e-6)


def test_degree_pmf_validation():
    with pytest.raises(ValidationError):
        degree_pmf(100, 2.0, 1.0)
    with pytest.raises(ValidationError):
        degree_pmf(100, 0.5, 2.4)


def test_economy_structure(sparse_economy):
    net, iot = sparse_economy
    assert net.n == 10_000
    assert np.all(net.sizes > 0)
    assert np.array_equal(net.weight, net.sizes[net.src] * net.sizes[net.dst])
    assert len(net.undirected_pairs()) == net.m  # one arc per linked pair
    assert np.all(net.src != net.dst)
    for s, r in zip(net.sectors, net.regimes):
        assert r == (LEONTIEF if s[0] <= "F" else LINEAR)
    assert set(net.sectors) <= set(iot.sectors)


def test_io_table_is_the_aggregate(sparse_economy):
    net, iot = sparse_economy
    again = aggregate_io_table(net, iot.sectors)
    assert np.array_equal(again.flows, iot.flows)
    assert iot.flows.sum() == pytest.approx(net.weight.sum(), rel=1e-12)


def test_aggregate_examples():
    firms = [FirmRecord("a", "A01", 1), FirmRecord("b", "C10", 1)]
    one = aggregate_io_table(build_supply_network(firms, [("a", "b", 5.0)]))
    assert one.flows.tolist() == [[0.0, 5.0], [0.0, 0.0]]
    two = aggregate_io_table(build_supply_network(firms, [("a", "b", 3.0), ("b", "a", 1.0)]))
    assert two.flows.tolist() == [[0.0, 3.0], [1.0, 0.0]]
    assert direction_probabilities(two, np.array([0]), np.array([1]))[0] == 0.75
    with pytest.raises(ValidationError):
        aggregate_io_table(build_supply_network(firms, []), ["A01"])


def test_single_sector():
    net, iot = generate_economy(300, 2.5, n_sectors=1, seed=3)
    assert iot.flows.shape == (1, 1)
    assert direction_probabilities(iot, net.src * 0, net.dst * 0).tolist() == [0.5] * net.m


def test_seeded(sparse_economy):
    net, iot = sparse_economy
    again, iot2 = generate_economy(10_000, 2.1, 2.4, seed=0)
    assert again == net and again.weight.tobytes() == net.weight.tobytes()
    assert iot2.flows.tobytes() == iot.flows.tobytes()
    assert generate_economy(10_000, 2.1, 2.4, seed=1)[0] != net


def test_parameter_validation():
    with pytest.raises(ValidationError):
        generate_economy(5)
    with pytest.raises(ValidationError):
        pick_sectors(0)
    assert pick_sectors(3) == ["A01", "G45", "S96"]


def test_csv_round_trip(tmp_path):
    net, iot = generate_economy(500, 3.0, seed=5)
    write_firms(tmp_path / "firms.csv", net.firms())
    write_supply_edges(tmp_path / "network.csv", net)
    write_io_table(tmp_path / "iot.csv", iot)
    back = load_supply_network(tmp_path / "network.csv", tmp_path / "firms.csv")
    assert back == net and back.weight.tobytes() == net.weight.tobytes()
    assert load_io_table(tmp_path / "iot.csv").flows.tobytes() == iot.flows.tobytes()
