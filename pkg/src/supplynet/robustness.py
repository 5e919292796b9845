"""Simulation studies of how reconstruction errors move ESRI rankings.

Each study starts from a known "true" supply network and degrades it the way
the phone-data pipeline would: only a share of firms is visible, phone links
miss real supply links and add spurious ones, and directions are guessed
from sector flows. ESRI on the degraded network is then rank-correlated with
ESRI on the true one.

Randomness is paired across studies. Replicate ``r`` draws its visible firms
from ``SeedSequence(seed, spawn_key=(r, 0))``, its phone layer from
``(r, 1)`` and its guessed directions from ``(r, 2)``, so running the
studies with the same seed compares them on identical samples.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .esri import esri_all
from .model import CommunicationNetwork, SectorFlowTable, SupplyNetwork, ValidationError
from .reconstruct import orient_edges
from .synthgen import aggregate_io_table

logger = logging.getLogger(__name__)

STAGE_NODES, STAGE_COMM, STAGE_DIRECTIONS = 0, 1, 2


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("inputs must be 1-d and of equal length")
    if x.size < 2:
        raise ValidationError("need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValidationError("correlation is undefined for a constant input")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    # sqrt(a * a) == a in IEEE arithmetic, so identical inputs give exactly 1
    r = float(dx @ dy) / np.sqrt(float(dx @ dx) * float(dy @ dy))
    return float(min(1.0, max(-1.0, r)))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = _check_pair(x, y)
    return pearson(stats.rankdata(x), stats.rankdata(y))


def _rng(seed, rep: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, stage)))


@dataclass
class ExperimentResult:
    """Per-replicate rows plus the parameters that produced them."""

    name: str
    params: dict
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def summary(self) -> dict:
        out = {"experiment": self.name, "params": self.params, "reps": len(self.rows)}
        for c in self.columns[1:]:
            x = self.column(c)
            x = x[~np.isnan(x)]
            if x.size == 0:
                out[c] = {"n": 0}
                continue
            q25, med, q75 = np.quantile(x, [0.25, 0.5, 0.75])
            out[c] = {
                "n": int(x.size),
                "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
                "q25": float(q25),
                "median": float(med),
                "q75": float(q75),
            }
        return out

    def as_table(self) -> dict:
        return {"columns": list(self.columns), "rows": self.rows}


def _correlations(reference: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    try:
        return spearman(reference, values), pearson(reference, values)
    except ValidationError as exc:
        logger.warning("correlation undefined for this replicate: %s", exc)
        return math.nan, math.nan


def _sample_nodes(n: int, m: float, rng: np.random.Generator) -> np.ndarray:
    if not 0 < m <= 1:
        raise ValidationError(f"market share must be in (0, 1], got {m}", field="m")
    k = int(math.floor(m * n + 1e-9))
    if k == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def _full_esri(net, reference, eps, max_iter, workers) -> np.ndarray:
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (net.n,):
            raise ValidationError("reference ESRI has the wrong length")
        return reference
    return esri_all(net, eps, max_iter, workers).values


def _sub_esri(sub: SupplyNetwork, eps, max_iter, workers) -> np.ndarray | None:
    pos = sub.sizes > 0
    if sub.n == 0 or not np.any(pos):
        return None
    return esri_all(sub, eps, max_iter, workers).values


def _score(full: np.ndarray, keep: np.ndarray, sub: SupplyNetwork, eps, max_iter, workers):
    vals = _sub_esri(sub, eps, max_iter, workers)
    if vals is None:
        logger.warning("replicate discarded: sampled firms have zero total size")
        return None
    ok = sub.sizes > 0
    return _correlations(full[keep][ok], vals[ok]), vals


def market_share_experiment(
    true_net: SupplyNetwork,
    m: float,
    reps: int,
    seed: int = 0,
    *,
    eps: float = 1e-2,
    max_iter: int = 1000,
    workers: int | None = None,
    reference: np.ndarray | None = None,
) -> ExperimentResult:
    """Only a random ``m`` share of firms is visible; links among them are exact."""
    full = _full_esri(true_net, reference, eps, max_iter, workers)
    res = ExperimentResult("market-share", {"m": m, "reps": reps, "seed": seed}, ("rep", "spearman", "pearson"))
    for r in range(reps):
        keep = _sample_nodes(true_net.n, m, _rng(seed, r, STAGE_NODES))
        scored = _score(full, keep, true_net.induced(keep), eps, max_iter, workers)
        if scored is not None:
            res.rows.append((r, *scored[0]))
    return res


def synthetic_comm_layer(
    true_net: SupplyNetwork, pcs: float, pc_not_s: float, seed, duration: float = 60.0,
) -> CommunicationNetwork:
    """Phone layer that overlaps the supply layer with the given conditionals.

    Each supply-linked pair gets a phone link with probability ``pcs``. The
    number of unlinked pairs with a phone link is binomial over all other
    pairs; those pairs are then drawn uniformly by rejection. All durations
    equal ``duration``.
    """
    for name, p in (("pcs", pcs), ("pc_not_s", pc_not_s)):
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"{name} must be in [0, 1]", field=name)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = true_net.n
    lo = np.minimum(true_net.src, true_net.dst)
    hi = np.maximum(true_net.src, true_net.dst)
    linked = np.unique(lo * n + hi)
    kept = linked[rng.random(linked.size) < pcs]

    universe = n * (n - 1) // 2
    free = universe - linked.size
    n_fake = int(rng.binomial(free, pc_not_s)) if free > 0 and pc_not_s > 0 else 0
    if n_fake > free // 2:
        # dense regime: enumerate instead of rejecting
        a, b = np.triu_indices(n, 1)
        keys = np.setdiff1d(a * n + b, linked, assume_unique=True)
        fake = np.sort(rng.choice(keys, size=n_fake, replace=False))
    else:
        fake = np.empty(0, dtype=np.int64)
        while fake.size < n_fake:
            need = n_fake - fake.size
            a = rng.integers(0, n, size=2 * need + 16)
            b = rng.integers(0, n, size=a.size)
            ok = a != b
            keys = np.minimum(a, b)[ok] * n + np.maximum(a, b)[ok]
            keys = keys[~np.isin(keys, linked)]
            # keep first occurrences in draw order, then top up
            _, first = np.unique(keys, return_index=True)
            keys = keys[np.sort(first)]
            keys = keys[~np.isin(keys, fake)][:need]
            fake = np.concatenate([fake, keys])
        fake = np.sort(fake)
    keys = np.concatenate([kept, fake])
    return CommunicationNetwork(true_net.ids, keys // n, keys % n, np.full(keys.size, float(duration)))


def _io_codes(net: SupplyNetwork, iot: SectorFlowTable) -> np.ndarray:
    index = iot.index()
    try:
        return np.fromiter((index[s] for s in net.sectors), dtype=np.int64, count=net.n)
    except KeyError as exc:
        raise ValidationError(f"sector {exc.args[0]!r} has no row in the IO table", field="sector") from None


def _network_from_comm(
    true_net: SupplyNetwork, comm: CommunicationNetwork, iot: SectorFlowTable, rng, keep_true: bool,
) -> SupplyNetwork:
    """Supply network on the phone links; gravity weights throughout.

    Phone links that are real supply links keep their true direction when
    ``keep_true`` is set; every other link is oriented from the IO table.
    """
    n = true_net.n
    codes = _io_codes(true_net, iot)
    u, v = comm.u, comm.v
    key = u * n + v
    src, dst = orient_edges(u, v, codes, iot, rng)
    if keep_true:
        t_lo = np.minimum(true_net.src, true_net.dst)
        t_hi = np.maximum(true_net.src, true_net.dst)
        t_key = t_lo * n + t_hi
        order = np.argsort(t_key, kind="stable")
        t_key = t_key[order]
        real = np.zeros(key.size, dtype=bool)
        if t_key.size:
            pos = np.minimum(np.searchsorted(t_key, key), t_key.size - 1)
            real = t_key[pos] == key
            arc = order[pos[real]]
        src = src.copy()
        dst = dst.copy()
        # a pair can carry arcs both ways in the true network; the first by (src, dst) wins
        src[real] = true_net.src[arc]
        dst[real] = true_net.dst[arc]
    s = true_net.sizes
    return true_net.replace(src=src, dst=dst, weight=s[src] * s[dst])


def _pipeline(
    name: str, true_net, iot, pcs, pc_not_s, m, reps, seed, keep_true, eps, max_iter, workers, reference,
    top_fraction=None, wide_fraction=None,
) -> ExperimentResult:
    full = _full_esri(true_net, reference, eps, max_iter, workers)
    cols = ("rep", "spearman", "pearson")
    if top_fraction is not None:
        cols += ("top_in_top", "top_in_wide")
        k_full = max(1, math.ceil(top_fraction * true_net.n))
        k_wide = max(1, math.ceil(wide_fraction * true_net.n))
        rank = np.empty(true_net.n, dtype=np.int64)
        rank[np.lexsort((np.arange(true_net.n), -full))] = np.arange(true_net.n)
    params = {"pcs": pcs, "pc_not_s": pc_not_s, "m": m, "reps": reps, "seed": seed}
    if top_fraction is not None:
        params.update(top_fraction=top_fraction, wide_fraction=wide_fraction)
    res = ExperimentResult(name, params, cols)
    for r in range(reps):
        keep = _sample_nodes(true_net.n, m, _rng(seed, r, STAGE_NODES))
        comm = synthetic_comm_layer(true_net, pcs, pc_not_s, _rng(seed, r, STAGE_COMM))
        net = _network_from_comm(true_net, comm, iot, _rng(seed, r, STAGE_DIRECTIONS), keep_true)
        sub = net.induced(keep)
        scored = _score(full, keep, sub, eps, max_iter, workers)
        if scored is None:
            continue
        (rho, pr), vals = scored
        row = (r, rho, pr)
        if top_fraction is not None:
            k_sub = max(1, math.ceil(top_fraction * keep.size))
            top_sub = keep[np.lexsort((np.arange(keep.size), -vals))[:k_sub]]
            row += (float(np.mean(rank[top_sub] < k_full)), float(np.mean(rank[top_sub] < k_wide)))
        res.rows.append(row)
    return res


def overlap_experiment(
    true_net: SupplyNetwork,
    pcs: float,
    pc_not_s: float,
    m: float,
    reps: int,
    seed: int = 0,
    *,
    iot: SectorFlowTable | None = None,
    eps: float = 1e-2,
    max_iter: int = 1000,
    workers: int | None = None,
    reference: np.ndarray | None = None,
) -> ExperimentResult:
    """Market share plus an imperfect phone layer; true directions are kept.

    Spurious links have no true direction and are oriented from ``iot``
    (default: the true network's own sector aggregate).
    """
    iot = aggregate_io_table(true_net) if iot is None else iot
    return _pipeline("overlap", true_net, iot, pcs, pc_not_s, m, reps, seed, True, eps, max_iter, workers, reference)


def full_pipeline_experiment(
    true_net: SupplyNetwork,
    iot: SectorFlowTable | None,
    pcs: float,
    pc_not_s: float,
    m: float,
    reps: int,
    seed: int = 0,
    *,
    top_fraction: float = 0.001,
    wide_fraction: float = 0.01,
    eps: float = 1e-2,
    max_iter: int = 1000,
    workers: int | None = None,
    reference: np.ndarray | None = None,
) -> ExperimentResult:
    """The overlap study with every direction re-drawn from the IO table.

    Also reports the share of the subsample's top ``top_fraction`` firms that
    sit in the full network's top ``top_fraction`` and top ``wide_fraction``.
    """
    iot = aggregate_io_table(true_net) if iot is None else iot
    if not 0 < top_fraction <= wide_fraction <= 1:
        raise ValidationError("need 0 < top_fraction <= wide_fraction <= 1")
    return _pipeline(
        "full", true_net, iot, pcs, pc_not_s, m, reps, seed, False, eps, max_iter, workers, reference,
        top_fraction, wide_fraction,
    )


def sector_link_ratios(net: SupplyNetwork, src=None, dst=None, min_links: int = 1):
    """p_ab = L_ab / (L_ab + L_ba) over sector pairs a < b, with L counting arcs.

    Returns ``(pairs, ratios)`` for pairs with at least ``min_links`` arcs.
    """
    codes, sec = net.sector_codes()
    src = net.src if src is None else src
    dst = net.dst if dst is None else dst
    k = len(codes)
    counts = np.bincount(sec[src] * k + sec[dst], minlength=k * k).reshape(k, k)
    a, b = np.triu_indices(k, 1)
    tot = counts[a, b] + counts[b, a]
    ok = tot >= max(min_links, 1)
    return np.stack([a[ok], b[ok]], axis=1), counts[a, b][ok] / tot[ok]


def direction_recovery_experiment(
    true_net: SupplyNetwork, reps: int, seed: int = 0, min_pair_links: int = 1,
) -> ExperimentResult:
    """Guess every direction from the network's own sector flows and score the guess.

    Per replicate: share of arcs oriented as in the true network, and the
    Pearson correlation between true and guessed sector-pair link ratios
    (pairs of distinct sectors with at least ``min_pair_links`` links).
    """
    iot = aggregate_io_table(true_net)
    codes = _io_codes(true_net, iot)
    pairs, truth = sector_link_ratios(true_net, min_links=min_pair_links)
    res = ExperimentResult(
        "directions", {"reps": reps, "seed": seed, "min_pair_links": min_pair_links},
        ("rep", "fraction_correct", "ratio_pearson"),
    )
    if true_net.m == 0:
        raise ValidationError("network has no arcs")
    for r in range(reps):
        rng = _rng(seed, r, STAGE_DIRECTIONS)
        u = np.minimum(true_net.src, true_net.dst)
        v = np.maximum(true_net.src, true_net.dst)
        src, _ = orient_edges(u, v, codes, iot, rng)
        frac = float(np.mean(src == true_net.src))
        dst = np.where(src == u, v, u)
        _, guessed = sector_link_ratios(true_net, src, dst, min_links=min_pair_links)
        if pairs.shape[0] >= 2:
            try:
                r_val = pearson(truth, guessed)
            except ValidationError as exc:
                logger.warning("ratio correlation undefined: %s", exc)
                r_val = math.nan
        else:
            r_val = math.nan
        res.rows.append((r, frac, r_val))
    return res


def paired_difference(a: ExperimentResult, b: ExperimentResult, column: str = "spearman") -> tuple[float, float]:
    """Mean and standard error of ``a - b`` over replicates present in both."""
    ja, jb = a.columns.index(column), b.columns.index(column)
    va = {row[0]: row[ja] for row in a.rows}
    vb = {row[0]: row[jb] for row in b.rows}
    d = np.array([va[r] - vb[r] for r in sorted(va.keys() & vb.keys()) if not (math.isnan(va[r]) or math.isnan(vb[r]))])
    if d.size < 2:
        raise ValidationError("need at least two paired replicates")
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))

