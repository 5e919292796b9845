import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from supplynet import CommunicationNetwork, ValidationError
from supplynet.ingest import Survey, SurveyLink
from supplynet.overlap import (
    CurvePoint,
    bootstrap_pcs,
    bootstrap_psc,
    complement_conditional,
    conditional_c_given_s,
    conditional_s_given_c,
    layer_overlap,
)


def supplied(supplier, customer, reporter=None):
    return SurveyLink(supplier, customer, reporter or supplier)


def calibrated_fixture():
    """1000 reporter-to-mentioned phone links; 19% are supply links overall,
    90% of those lasting longer than 60 s/d."""
    edges, links = [], []
    durations = [0.5 + 59.0 * j / 899 for j in range(900)] + [65.0] * 100
    hits = set(range(800, 900)) | set(range(900, 990))
    for j, d in enumerate(durations):
        r, m = f"r{j}", f"m{j}"
        edges.append((r, m, d))
        links.append(supplied(r, f"x{j}"))
        links.append(supplied("Z", m))
        if j in hits:
            links.append(supplied(r, m))
    return CommunicationNetwork.from_edges(edges), Survey(links)


def test_psc_stratification():
    comm = CommunicationNetwork.from_edges([("r", f"m{i}", 40.0) for i in range(5)] + [("m0", "m1", 40.0)])
    survey = Survey([supplied("r", "m0"), supplied("m1", "r", "r"), supplied("r", "q")])
    # r-m2..m4 reach unmentioned firms and m0-m1 joins two mentioned firms
    assert conditional_s_given_c(comm, survey, [0]) == [CurvePoint(0.0, 1.0, 2, 2)]


def test_psc_counting():
    comm = CommunicationNetwork.from_edges([("r", f"m{i}", 40.0) for i in range(5)])
    survey = Survey([supplied("r", "m0"), supplied("r", "m1")] + [supplied("q", f"m{i}") for i in range(2, 5)])
    assert conditional_s_given_c(comm, survey, [0])[0].estimate == pytest.approx(0.4)


def test_psc_full_survey():
    comm, _ = calibrated_fixture()
    survey = Survey([supplied(a, b) for a, b, _ in comm.edges()])
    # every link joins a reporter to a mentioned firm and is in the survey
    assert all(p.estimate == 1.0 for p in conditional_s_given_c(comm, survey))


def test_psc_calibrated_curve():
    comm, survey = calibrated_fixture()
    curve = conditional_s_given_c(comm, survey)
    assert curve[0].threshold == 0 and curve[0].n_links == 1000
    assert curve[0].estimate == pytest.approx(0.19)
    assert curve[-1].threshold == 60 and curve[-1].estimate == pytest.approx(0.9)
    est = [p.estimate for p in curve]
    assert est == sorted(est)


def test_psc_empty_threshold_omitted(caplog):
    comm = CommunicationNetwork.from_edges([("r", "m", 5.0)])
    curve = conditional_s_given_c(comm, Survey([supplied("r", "m")]), [0, 10])
    assert [p.threshold for p in curve] == [0.0]
    assert "omitted" in caplog.text


def test_pcs_examples():
    comm = CommunicationNetwork.from_edges([("a", "b", 1.0), ("b", "c", 1.0), ("c", "d", 1.0)])
    inside = Survey([supplied("a", "b"), supplied("c", "b", "b")])
    assert conditional_c_given_s(comm, inside)[0].estimate == 1.0
    apart = Survey([supplied("a", "c"), supplied("x", "y")])
    assert conditional_c_given_s(comm, apart)[0].estimate == 0.0


def test_pcs_device_threshold_and_calibration():
    pairs = [(f"s{i}", f"t{i}") for i in range(100)]
    comm = CommunicationNetwork.from_edges([(a, b, 20.0) for a, b in pairs[:27]])
    survey = Survey([supplied(a, b) for a, b in pairs])
    assert conditional_c_given_s(comm, survey)[0].estimate == pytest.approx(0.27)
    devices = {a: 5 for a, _ in pairs} | {b: (5 if i < 10 else 1) for i, (_, b) in enumerate(pairs)}
    pts = conditional_c_given_s(comm, survey, (0, 2, 9), devices)
    assert [(p.threshold, p.n_links, p.n_hits) for p in pts] == [(0.0, 100, 27), (2.0, 10, 10)]


# ---------------------------------------------------------------- bootstraps


def _comm_with(n_links, duration=40.0):
    return CommunicationNetwork.from_edges([(f"a{i}", f"b{i}", duration) for i in range(n_links)])


def test_bootstrap_psc_degenerate_bins():
    comm = _comm_with(500)
    one, zero = bootstrap_psc(comm, [CurvePoint(0, 1.0, 500, 500), CurvePoint(10, 0.0, 500, 0)], 200, reps=300)
    assert (one.mean, one.q25, one.q75) == (1.0, 1.0, 1.0)
    assert (zero.mean, zero.q25, zero.q75) == (0.0, 0.0, 0.0)


def test_bootstrap_psc_spread_matches_binomial():
    # flipping then subsampling without replacement is Binomial(200, 0.5) overall
    lo, hi = binom.ppf([0.25, 0.75], 200, 0.5) / 200
    band = bootstrap_psc(_comm_with(20_000), [CurvePoint(0, 0.5, 20_000, 10_000)], 200, reps=1500, seed=3)[0]
    half = (band.q75 - band.q25) / 2
    assert (hi - lo) / 2 == pytest.approx(0.025)
    assert half == pytest.approx(0.024, abs=0.004)
    assert band.mean == pytest.approx(0.5, abs=0.003)


def test_bootstrap_psc_validation():
    comm = _comm_with(50)
    with pytest.raises(ValidationError):
        bootstrap_psc(comm, [CurvePoint(0, 0.5, 50, 25)], 51)
    with pytest.raises(ValidationError):
        bootstrap_psc(comm, [CurvePoint(0, 0.5, 50, 25)], 0)


def test_bootstrap_pcs_examples():
    assert bootstrap_pcs([[1, 1, 1, 1]], reps=200) == bootstrap_pcs({0: [1, 1, 1, 1]}, reps=200)
    b = bootstrap_pcs([[1, 1, 1, 1]], reps=200)[0]
    assert (b.mean, b.q25, b.q75) == (1.0, 1.0, 1.0)
    # resampling {1, 0}: means 0, 1/2, 1 with probabilities 1/4, 1/2, 1/4
    b = bootstrap_pcs({7: [1, 0]}, reps=4000, seed=2)[0]
    assert b.threshold == 7.0
    assert b.mean == pytest.approx(0.5, abs=0.03)
    assert (b.q25, b.q75) in {(0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)}
    with pytest.raises(ValidationError):
        bootstrap_pcs([[]])


def test_bootstraps_are_seeded():
    comm = _comm_with(1000)
    curve = [CurvePoint(0, 0.3, 1000, 300)]
    assert bootstrap_psc(comm, curve, 100, 200, seed=5) == bootstrap_psc(comm, curve, 100, 200, seed=5)
    assert bootstrap_pcs([[1, 0, 0, 1, 1]], 200, seed=5) == bootstrap_pcs([[1, 0, 0, 1, 1]], 200, seed=5)
    assert bootstrap_pcs([[1, 0, 0, 1, 1]], 200, seed=5) != bootstrap_pcs([[1, 0, 0, 1, 1]], 200, seed=6)


# ---------------------------------------------------------------- complements


def test_complement_conditional():
    assert complement_conditional(0.002, 0.27, 5e-5) == pytest.approx(1.9866e-3, rel=5e-5)
    assert complement_conditional(0.002, 0.27, 5e-5) == pytest.approx((0.002 - 0.27 * 5e-5) / (1 - 5e-5), rel=1e-15)
    assert complement_conditional(0.3, 0.3, 0.4) == pytest.approx(0.3)
    assert complement_conditional(0.3, 0.9, 0.0) == 0.3
    for args in ((0.1, 0.2, 1.0), (1.2, 0.1, 0.1), (0.001, 0.9, 0.5)):
        with pytest.raises(ValidationError):
            complement_conditional(*args)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 12), st.data())
def test_bayes_consistency(n, data):
    all_pairs = [frozenset(p) for p in itertools.combinations(range(n), 2)]
    comm = data.draw(st.sets(st.sampled_from(all_pairs), min_size=1))
    supply = data.draw(st.sets(st.sampled_from(all_pairs), min_size=1))
    o = layer_overlap(comm, supply, universe=len(all_pairs))
    assert o.p_s_given_c * o.p_c == o.p_c_given_s * o.p_s
    assert o.p_s_given_c * o.p_c == Fraction(len(comm & supply), len(all_pairs))
    if o.p_s < 1:
        pc_not_s = complement_conditional(float(o.p_c), float(o.p_c_given_s), float(o.p_s))
        assert pc_not_s == pytest.approx(len(comm - supply) / (len(all_pairs) - len(supply)), abs=1e-12)


def test_layer_overlap_validation():
    with pytest.raises(ValidationError):
        layer_overlap([], [frozenset("ab")])
    with pytest.raises(ValidationError):
        layer_overlap([frozenset("ab")], [frozenset("cd")], universe=1)
    assert layer_overlap([frozenset("ab")], [frozenset("ab")]).universe == 1
