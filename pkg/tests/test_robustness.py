import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from supplynet import FirmRecord, ValidationError, build_supply_network
from supplynet.robustness import (
    ExperimentResult,
    direction_recovery_experiment,
    full_pipeline_experiment,
    market_share_experiment,
    overlap_experiment,
    paired_difference,
    pearson,
    sector_link_ratios,
    spearman,
    synthetic_comm_layer,
)
from supplynet.synthgen import generate_economy


@pytest.fixture(scope="module")
def small_economy():
    return generate_economy(1500, 2.4, n_sectors=8, seed=11)


# ---------------------------------------------------------------- correlations


def test_correlation_examples():
    assert spearman([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([1, 2, 3, 4], [10, 20, 30, 400]) == 1.0
    assert pearson([1, 2, 3, 4], [10, 20, 30, 400]) < 1.0
    for bad in (([1, 1, 1], [1, 2, 3]), ([1], [1]), ([1, 2], [1, 2, 3])):
        with pytest.raises(ValidationError):
            spearman(*bad)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.floats(-1e3, 1e3)), min_size=3, max_size=40))
def test_correlations_match_scipy(rows):
    x = np.array([r[0] for r in rows], dtype=float)
    y = np.array([r[1] for r in rows])
    if np.all(x == x[0]) or np.all(y == y[0]):
        return
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-9)
    assert pearson(x, y) == pytest.approx(stats.pearsonr(x, y).statistic, abs=1e-9)
    assert pearson(y, y) == 1.0


def test_experiment_result_summary():
    res = ExperimentResult("x", {"a": 1}, ("rep", "v"), [(0, 1.0), (1, 2.0), (2, 3.0), (3, math.nan)])
    s = res.summary()
    assert s["reps"] == 4
    assert s["v"] == {"n": 3, "mean": 2.0, "sd": 1.0, "q25": 1.5, "median": 2.0, "q75": 2.5}
    assert res.as_table()["columns"] == ["rep", "v"]


def test_paired_difference():
    a = ExperimentResult("a", {}, ("rep", "spearman"), [(0, 0.9), (1, 0.8), (2, 0.7), (5, 0.1)])
    b = ExperimentResult("b", {}, ("rep", "spearman"), [(0, 0.8), (1, 0.8), (2, 0.6)])
    mean, se = paired_difference(a, b)
    d = np.array([0.1, 0.0, 0.1])
    assert mean == pytest.approx(d.mean()) and se == pytest.approx(d.std(ddof=1) / math.sqrt(3))


# ---------------------------------------------------------------- market share


def test_full_market_share_is_perfect(small_economy):
    net, _ = small_economy
    res = market_share_experiment(net, 1.0, 3)
    assert all(r[1] == 1.0 and r[2] == 1.0 for r in res.rows)


def test_market_share_matched_and_seeded(small_economy):
    net, _ = small_economy
    a = market_share_experiment(net, 0.5, 4, seed=3)
    assert a.rows == market_share_experiment(net, 0.5, 4, seed=3).rows
    assert a.rows != market_share_experiment(net, 0.5, 4, seed=4).rows
    with pytest.raises(ValidationError):
        market_share_experiment(net, 0.0, 1)


# ---------------------------------------------------------------- phone layer


def test_comm_layer_extremes(small_economy):
    net, _ = small_economy
    exact = synthetic_comm_layer(net, 1.0, 0.0, 0)
    assert exact.edge_pairs() == net.undirected_pairs()
    assert synthetic_comm_layer(net, 0.0, 0.0, 0).m == 0
    with pytest.raises(ValidationError):
        synthetic_comm_layer(net, 1.5, 0.0, 0)


def test_comm_layer_counts(small_economy):
    net, _ = small_economy
    truth = net.undirected_pairs()
    free = net.n * (net.n - 1) // 2 - len(truth)
    pcs, pcn = 0.3, 2e-3
    comm = synthetic_comm_layer(net, pcs, pcn, 8)
    pairs = comm.edge_pairs()
    kept = len(pairs & truth)
    fake = len(pairs - truth)
    assert abs(kept - pcs * len(truth)) <= 3 * math.sqrt(len(truth) * pcs * (1 - pcs))
    assert abs(fake - pcn * free) <= 3 * math.sqrt(free * pcn * (1 - pcn))
    assert comm.m == len(pairs) and set(comm.duration) == {60.0}


def test_comm_layer_dense_regime():
    firms = [FirmRecord(f"x{i}", "C10", 1.0) for i in range(12)]
    net = build_supply_network(firms, [("x0", "x1", 1.0)])
    comm = synthetic_comm_layer(net, 1.0, 0.9, 1)
    assert frozenset(("x0", "x1")) in comm.edge_pairs()
    assert comm.m > 40


# ---------------------------------------------------------------- pipelines


def test_overlap_without_noise_equals_market_share(small_economy):
    net, _ = small_economy
    ms = market_share_experiment(net, 0.5, 3, seed=1)
    ov = overlap_experiment(net, 1.0, 0.0, 0.5, 3, seed=1)
    assert ms.rows == ov.rows


def test_pipeline_noise_hurts(small_economy):
    net, iot = small_economy
    ms = market_share_experiment(net, 0.5, 6, seed=2)
    ov = overlap_experiment(net, 0.3, 1e-3, 0.5, 6, seed=2, iot=iot)
    assert ov.column("spearman").mean() < ms.column("spearman").mean()


def test_full_pipeline_top_recovery(small_economy):
    net, iot = small_economy
    res = full_pipeline_experiment(net, iot, 0.4, 1e-4, 0.5, 5, seed=0, top_fraction=0.01, wide_fraction=0.05)
    assert res.columns == ("rep", "spearman", "pearson", "top_in_top", "top_in_wide")
    assert np.all(res.column("top_in_wide") >= res.column("top_in_top"))
    perfect = full_pipeline_experiment(net, iot, 1.0, 0.0, 1.0, 1, top_fraction=1.0, wide_fraction=1.0)
    assert perfect.rows[0][3:] == (1.0, 1.0)
    again = full_pipeline_experiment(net, iot, 0.4, 1e-4, 0.5, 5, seed=0, top_fraction=0.01, wide_fraction=0.05)
    assert again.rows == res.rows
    with pytest.raises(ValidationError):
        full_pipeline_experiment(net, iot, 0.4, 0.0, 0.5, 1, top_fraction=0.1, wide_fraction=0.05)


# ---------------------------------------------------------------- directions


def _polar_net(flow_forward: bool):
    firms = [FirmRecord(f"a{i}", "A01", 1.0) for i in range(30)] + [FirmRecord(f"c{i}", "C10", 1.0) for i in range(30)]
    arcs = [(f"a{i}", f"c{i}", 1.0) for i in range(30)]
    if not flow_forward:
        arcs = [(f"a{i}", f"a{(i + 1) % 30}", 1.0) for i in range(30)]
    return build_supply_network(firms, arcs)


def test_direction_recovery_polarized():
    res = direction_recovery_experiment(_polar_net(True), 5)
    assert np.all(res.column("fraction_correct") == 1.0)


def test_direction_recovery_intra_sector():
    res = direction_recovery_experiment(_polar_net(False), 40)
    frac = res.column("fraction_correct")
    assert frac.mean() == pytest.approx(0.5, abs=0.05)
    assert np.all(np.isnan(res.column("ratio_pearson")))


def test_sector_link_ratios():
    firms = [FirmRecord("a", "A01", 1), FirmRecord("b", "C10", 1), FirmRecord("c", "C10", 1), FirmRecord("d", "G46", 1)]
    net = build_supply_network(firms, [("a", "b", 1), ("c", "a", 1), ("a", "c", 1), ("b", "c", 1), ("d", "a", 1)])
    pairs, ratios = sector_link_ratios(net)
    assert pairs.tolist() == [[0, 1], [0, 2]]
    assert ratios.tolist() == [2 / 3, 0.0]
    pairs, _ = sector_link_ratios(net, min_links=2)
    assert pairs.tolist() == [[0, 1]]


def test_direction_recovery_seeded():
    net, _ = generate_economy(2000, 2.1, n_sectors=6, seed=1)
    a = direction_recovery_experiment(net, 5, seed=9)
    assert a.rows == direction_recovery_experiment(net, 5, seed=9).rows
    assert 0.4 < a.column("fraction_correct").mean() < 0.7
