"""Reconstruct directed, weighted supply networks from a communication network.

Pipeline: threshold by call duration and device count, orient every
surviving edge at random with odds taken from the sector IO table, then put
gravity weights ``s_i * s_j`` on the arcs. Ensemble member ``k`` draws its
directions from ``SeedSequence(rng_seed, spawn_key=(k,))``, so members are
independent of each other and of the order they are generated in.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import CommunicationNetwork, FirmRecord, SectorFlowTable, SupplyNetwork, ValidationError, regime_for_sector
from .topology import kl_divergence, pmf_from_degrees


@dataclass(frozen=True)
class ReconstructionConfig:
    duration_threshold: float = 30.0
    device_threshold: int = 0
    rng_seed: int = 0
    ensemble_size: int = 1

    def __post_init__(self):
        if not self.duration_threshold >= 0:
            raise ValidationError("duration_threshold must be >= 0", field="duration_threshold")
        if self.device_threshold < 0:
            raise ValidationError("device_threshold must be >= 0", field="device_threshold")
        if self.ensemble_size < 1:
            raise ValidationError("ensemble_size must be >= 1", field="ensemble_size")

    @classmethod
    def from_file(cls, path, **overrides) -> "ReconstructionConfig":
        """Read ``key = value`` lines; keyword overrides that are not None win."""
        parser = configparser.ConfigParser()
        parser.read_string("[config]\n" + Path(path).read_text())
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in parser["config"].items():
            if key not in types:
                raise ValidationError(f"unknown config key {key!r}", field=key)
            values[key] = float(raw) if key == "duration_threshold" else int(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def member_seed(rng_seed: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(rng_seed, spawn_key=(k,))


def _firm_lookup(firms) -> dict[str, FirmRecord]:
    if isinstance(firms, Mapping):
        return dict(firms)
    return {f.id: f for f in firms}


def threshold_network(comm: CommunicationNetwork, firms, cfg: ReconstructionConfig) -> CommunicationNetwork:
    """Keep edges with duration > threshold whose two firms both have more
    than ``device_threshold`` devices. Isolated nodes are kept."""
    lookup = _firm_lookup(firms)
    missing = [i for i in comm.ids if i not in lookup]
    if missing:
        raise ValidationError(f"{len(missing)} communication nodes lack firm records, e.g. {missing[0]!r}")
    dev = np.array([lookup[i].devices for i in comm.ids], dtype=np.int64)
    keep = (comm.duration > cfg.duration_threshold) & (dev[comm.u] > cfg.device_threshold) & (dev[comm.v] > cfg.device_threshold)
    return comm.with_edge_mask(keep)


def select_threshold(
    comm: CommunicationNetwork,
    firms,
    reference_pmf: Mapping[int, float],
    candidates: Iterable[tuple[float, int]],
) -> tuple[tuple[float, int], dict[tuple[float, int], float]]:
    """Threshold pair whose degree distribution is closest (KL) to the reference.

    Degrees are taken over nodes with at least one surviving edge. Ties go
    to the smaller duration threshold, then the smaller device threshold.
    """
    candidates = [(float(d), int(n)) for d, n in candidates]
    if not candidates:
        raise ValidationError("no candidate thresholds given")
    scores: dict[tuple[float, int], float] = {}
    for d, n in candidates:
        sub = threshold_network(comm, firms, ReconstructionConfig(d, n))
        pmf = pmf_from_degrees(sub.degrees(), positive_only=True)
        scores[(d, n)] = kl_divergence(pmf, reference_pmf).value if pmf else float("inf")
    best = min(scores, key=lambda c: (scores[c], c[0], c[1]))
    return best, scores


def _io_indices(sector_codes: Sequence[str], iot: SectorFlowTable, sector_map: Mapping[str, str] | None) -> np.ndarray:
    index = iot.index()
    out = np.empty(len(sector_codes), dtype=np.int64)
    for i, s in enumerate(sector_codes):
        key = sector_map.get(s, s) if sector_map else s
        if key not in index:
            raise ValidationError(f"sector {s!r} has no row in the IO table", field="sector")
        out[i] = index[key]
    return out


def direction_probabilities(iot: SectorFlowTable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """p(a -> b) = G_ab / (G_ab + G_ba) for IO indices ``a``, ``b``; 0.5 if both vanish."""
    g = iot.flows
    gab = g[a, b]
    gba = g[b, a]
    tot = gab + gba
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(tot > 0, gab / tot, 0.5)


def orient_edges(u, v, io_idx, iot, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw one direction per undirected edge ``(u, v)``."""
    p = direction_probabilities(iot, io_idx[u], io_idx[v])
    forward = rng.random(p.size) < p
    return np.where(forward, u, v), np.where(forward, v, u)


def sample_directions(
    undirected: CommunicationNetwork,
    firms,
    iot: SectorFlowTable,
    seed,
    sector_map: Mapping[str, str] | None = None,
    regimes: Mapping[str, str] | None = None,
) -> SupplyNetwork:
    """Orient each edge with the IO-table odds; arc weights are 1."""
    lookup = _firm_lookup(firms)
    recs = [lookup[i] for i in undirected.ids]
    sectors = [r.sector for r in recs]
    io_idx = _io_indices(sectors, iot, sector_map)
    rng = np.random.default_rng(seed)
    src, dst = orient_edges(undirected.u, undirected.v, io_idx, iot, rng)
    regimes = regimes or {}
    return SupplyNetwork(
        undirected.ids, sectors, [r.size for r in recs], src, dst, np.ones(src.size),
        devices=[r.devices for r in recs],
        regimes=[regimes.get(s, regime_for_sector(s)) for s in sectors],
    )


def assign_gravity_weights(net: SupplyNetwork) -> SupplyNetwork:
    """Arc weights ``s_i * s_j`` from firm sizes."""
    return net.replace(weight=net.sizes[net.src] * net.sizes[net.dst])


def reconstruct_ensemble(
    comm: CommunicationNetwork,
    firms,
    iot: SectorFlowTable,
    cfg: ReconstructionConfig,
    sector_map: Mapping[str, str] | None = None,
) -> list[SupplyNetwork]:
    skeleton = threshold_network(comm, firms, cfg)
    return [
        assign_gravity_weights(sample_directions(skeleton, firms, iot, member_seed(cfg.rng_seed, k), sector_map))
        for k in range(cfg.ensemble_size)
    ]


def with_config(cfg: ReconstructionConfig, **changes) -> ReconstructionConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
