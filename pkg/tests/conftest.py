import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from builders import ACCEPTANCE_LINES  # noqa: E402
from supplynet import FirmRecord, SupplyNetwork, build_supply_network  # noqa: E402

# Leontief sections first, linear ones after
SECTOR_POOL = ["A01", "C10", "C20", "F43", "G46", "J58", "M72", "Q86"]


def net_from_dense(W, sectors, sizes, devices=None) -> SupplyNetwork:
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    src, dst = np.nonzero(W)
    return SupplyNetwork(
        [f"f{i}" for i in range(n)], list(sectors), sizes, src, dst, W[src, dst],
        devices=devices if devices is not None else np.ones(n, dtype=int),
    )


def random_dense_economy(rng: np.random.Generator, n: int | None = None, density: float | None = None):
    """(W, sectors, sizes) with mixed regimes and random positive weights."""
    n = int(rng.integers(1, 9)) if n is None else n
    density = rng.uniform(0.1, 0.6) if density is None else density
    W = np.where(rng.random((n, n)) < density, rng.lognormal(0, 1, (n, n)), 0.0)
    np.fill_diagonal(W, 0.0)
    n_sec = int(rng.integers(1, min(n, 4) + 1))
    pool = rng.choice(SECTOR_POOL, size=n_sec, replace=False)
    sectors = list(rng.choice(pool, size=n))
    sizes = rng.lognormal(0, 1, n)
    return W, sectors, sizes


@pytest.fixture
def chain():
    """A -> B -> C, unit weights, distinct Leontief sectors, equal sizes."""
    firms = [FirmRecord("A", "A01", 1.0), FirmRecord("B", "C10", 1.0), FirmRecord("C", "C20", 1.0)]
    return build_supply_network(firms, [("A", "B", 1.0), ("B", "C", 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
