"""How often a phone link coincides with a supply link, and vice versa.

Supply links are only observed through a survey: reporting firms name some
of their suppliers and customers. p(s|c) is therefore measured only on
communication links that join a reporter to a mentioned firm, since a link
between two firms that never reported could not have been seen either way.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import Survey
from .model import CommunicationNetwork, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_DURATION_BINS = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    estimate: float
    n_links: int
    n_hits: int


@dataclass(frozen=True)
class Band:
    threshold: float
    mean: float
    q25: float
    q75: float


def _stratified_mask(comm: CommunicationNetwork, survey: Survey) -> np.ndarray:
    rep = np.fromiter((i in survey.reporters for i in comm.ids), dtype=bool, count=comm.n)
    men = np.fromiter((i in survey.mentioned for i in comm.ids), dtype=bool, count=comm.n)
    u, v = comm.u, comm.v
    return (rep[u] & men[v]) | (rep[v] & men[u])


def _survey_mask(comm: CommunicationNetwork, pairs: set[frozenset[str]]) -> np.ndarray:
    ids = comm.ids
    return np.fromiter(
        (frozenset((ids[a], ids[b])) in pairs for a, b in zip(comm.u, comm.v)), dtype=bool, count=comm.m,
    )


def conditional_s_given_c(
    comm: CommunicationNetwork, survey: Survey, duration_bins: Sequence[float] = DEFAULT_DURATION_BINS,
) -> list[CurvePoint]:
    """p(s|c) over reporter-to-mentioned phone links with duration above each threshold.

    Thresholds with no eligible link are left out with a warning.
    """
    strat = _stratified_mask(comm, survey)
    hit = _survey_mask(comm, survey.pairs()) & strat
    out = []
    for t in duration_bins:
        above = comm.duration > t
        n = int(np.count_nonzero(strat & above))
        if n == 0:
            logger.warning("no stratified communication links above %s s/d; point omitted", t)
            continue
        k = int(np.count_nonzero(hit & above))
        out.append(CurvePoint(float(t), k / n, n, k))
    return out


def conditional_c_given_s(
    comm: CommunicationNetwork,
    survey: Survey,
    device_thresholds: Sequence[int] = (0,),
    devices: Mapping[str, int] | None = None,
) -> list[CurvePoint]:
    """p(c|s): share of surveyed supply links that also carry a phone link.

    At threshold ``t`` only survey links whose two firms both have more than
    ``t`` devices count. Without ``devices`` no device filter is applied and
    every threshold sees the full survey. Firms missing from ``devices``
    are treated as having none.
    """
    comm_pairs = comm.edge_pairs()
    pairs = sorted(tuple(sorted(p)) for p in survey.pairs())
    out = []
    for t in device_thresholds:
        if devices is None:
            kept = pairs
        else:
            kept = [(a, b) for a, b in pairs if devices.get(a, 0) > t and devices.get(b, 0) > t]
        if not kept:
            logger.warning("no survey links with both firms above %s devices; point omitted", t)
            continue
        k = sum(frozenset(p) in comm_pairs for p in kept)
        out.append(CurvePoint(float(t), k / len(kept), len(kept), k))
    return out


@dataclass(frozen=True)
class LayerOverlap:
    """Exact overlap fractions of two link sets on a shared universe of pairs."""

    universe: int
    n_comm: int
    n_supply: int
    n_both: int

    @property
    def p_c(self) -> Fraction:
        return Fraction(self.n_comm, self.universe)

    @property
    def p_s(self) -> Fraction:
        return Fraction(self.n_supply, self.universe)

    @property
    def p_s_given_c(self) -> Fraction:
        return Fraction(self.n_both, self.n_comm)

    @property
    def p_c_given_s(self) -> Fraction:
        return Fraction(self.n_both, self.n_supply)


def layer_overlap(
    comm_pairs: Iterable[frozenset], supply_pairs: Iterable[frozenset], universe: int | None = None,
) -> LayerOverlap:
    """Counts for the two layers; ``universe`` defaults to all pairs over the nodes seen."""
    c = set(comm_pairs)
    s = set(supply_pairs)
    if universe is None:
        nodes = set().union(*c, *s)
        universe = len(nodes) * (len(nodes) - 1) // 2
    if not c or not s:
        raise ValidationError("both layers need at least one link")
    if universe < len(c | s):
        raise ValidationError("universe smaller than the union of the two layers")
    return LayerOverlap(universe, len(c), len(s), len(c & s))


def _quartiles(x: np.ndarray) -> tuple[float, float]:
    q25, q75 = np.quantile(x, [0.25, 0.75], method="inverted_cdf")
    return float(q25), float(q75)


def _rep_rngs(seed, reps: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]


def bootstrap_psc(
    comm: CommunicationNetwork,
    curve: Sequence[CurvePoint],
    sample_size: int,
    reps: int = 1500,
    seed: int = 0,
) -> list[Band]:
    """Spread of p(s|c) expected from a survey of ``sample_size`` links.

    For each threshold, every phone link above it is turned into a supply
    link with that point's probability, then ``sample_size`` links are drawn
    without replacement and the supply share recorded. The number of supply
    links in the draw is hypergeometric given the flipped total, which is
    what is sampled here.
    """
    if sample_size < 1 or reps < 1:
        raise ValidationError("sample_size and reps must be positive")
    rngs = _rep_rngs(seed, reps)
    out = []
    for pt in curve:
        pop = int(np.count_nonzero(comm.duration > pt.threshold))
        if sample_size > pop:
            raise ValidationError(
                f"sample size {sample_size} exceeds the {pop} links above {pt.threshold} s/d", field="sample_size",
            )
        est = np.empty(reps)
        for r, rng in enumerate(rngs):
            flipped = rng.binomial(pop, pt.estimate)
            est[r] = rng.hypergeometric(flipped, pop - flipped, sample_size) / sample_size if flipped else 0.0
        out.append(Band(pt.threshold, float(est.mean()), *_quartiles(est)))
    return out


def bootstrap_pcs(
    samples: Mapping[float, Sequence[int]] | Sequence[Sequence[int]],
    reps: int = 1500,
    seed: int = 0,
) -> list[Band]:
    """Classic bootstrap of p(c|s) per bin from 0/1 indicators (1 = phone link found)."""
    items = list(samples.items()) if isinstance(samples, Mapping) else list(enumerate(samples))
    rngs = _rep_rngs(seed, reps)
    out = []
    for key, vals in items:
        x = np.asarray(vals, dtype=float)
        if x.size == 0:
            raise ValidationError(f"bin {key} is empty")
        est = np.array([x[rng.integers(0, x.size, x.size)].mean() for rng in rngs])
        out.append(Band(float(key), float(est.mean()), *_quartiles(est)))
    return out


def complement_conditional(pc: float, pcs: float, ps: float) -> float:
    """p(c|not s) = (p(c) - p(c|s) p(s)) / (1 - p(s))."""
    for name, x in (("pc", pc), ("pcs", pcs), ("ps", ps)):
        if not 0.0 <= x <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {x}", field=name)
    if ps == 1.0:
        raise ValidationError("p(s) = 1 leaves no unlinked pairs", field="ps")
    out = (pc - pcs * ps) / (1.0 - ps)
    if not -1e-12 <= out <= 1.0 + 1e-12:
        raise ValidationError(f"inconsistent marginals: p(c|not s) = {out}")
    # absorb rounding at the boundaries
    return min(max(out, 0.0), 1.0)
