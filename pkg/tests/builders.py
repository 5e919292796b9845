"""Constructed inputs shared by the unit and acceptance suites."""
from __future__ import annotations

import numpy as np
import pytest

from supplynet import CommunicationNetwork, FirmRecord
from supplynet.synthgen import generate_economy
from supplynet.topology import pmf_from_degrees

# PASS/FAIL lines of the acceptance suite, echoed again in the terminal summary
ACCEPTANCE_LINES = pytest.StashKey[list]()

THRESHOLD_CANDIDATES = [(float(d), n) for d in (0, 10, 20, 30, 40, 50, 60) for n in (0, 1, 2)]


def noisy_phone_network(seed: int = 7, n: int = 600, n_signal: int = 900, n_noise: int = 700):
    """Phone network whose links above 30 s/d form a hidden 'signal' graph.

    Signal links last 31..300 s/d and attach preferentially to a few hubs, so
    their degree law is skewed. Noise links last 1..30 s/d and are spread
    uniformly, which pulls the degree law towards Poisson. Device counts are
    1..4, so any device threshold removes signal links too. Returns
    (comm, firms, reference_pmf) where the reference is the positive-degree
    law of the signal graph alone.
    """
    rng = np.random.default_rng(seed)
    ids = [f"p{i:04d}" for i in range(n)]
    attract = rng.pareto(1.2, n) + 0.05
    attract /= attract.sum()
    pairs: set[tuple[int, int]] = set()
    while len(pairs) < n_signal:
        a, b = rng.choice(n, 2, p=attract)
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    signal = sorted(pairs)
    while len(pairs) < n_signal + n_noise:
        a, b = rng.integers(0, n, 2)
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    noise = sorted(pairs - set(signal))
    edges = [(ids[a], ids[b], float(rng.uniform(31, 300))) for a, b in signal]
    edges += [(ids[a], ids[b], float(rng.choice([1.0, 5.0, 12.0, 25.0, 30.0]))) for a, b in noise]
    comm = CommunicationNetwork.from_edges(edges, nodes=ids)
    firms = [FirmRecord(i, "C10", 1.0, int(rng.integers(1, 5))) for i in ids]
    sig = CommunicationNetwork.from_edges([e for e in edges if e[2] > 30], nodes=ids)
    return comm, firms, pmf_from_degrees(sig.degrees(), positive_only=True)


# Economy used for the direction-recovery study: ten sectors with mild
# population skew and direction preferences put the sector-ratio quartiles
# at about 0.42 / 0.61.
DIRECTION_ECONOMY = dict(n=10_000, mean_degree=2.1, n_sectors=10, sector_skew=0.5, size_sigma=0.5, polarization=0.16)


def direction_economy(seed: int = 0):
    return generate_economy(seed=seed, **DIRECTION_ECONOMY)
