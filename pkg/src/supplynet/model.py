"""Core domain types: firms, communication networks, supply networks, IO tables.

Firm ids are opaque strings at the boundary and dense integer indices inside.
All graph containers are immutable after construction; the numpy arrays they
hold are flagged read-only.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

LEONTIEF = "leontief"
LINEAR = "linear"
REGIMES = (LEONTIEF, LINEAR)

_NACE2 = re.compile(r"^([A-Z])(\d{2})$")


class ValidationError(ValueError):
    """Raised when input data violates a structural precondition."""

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def regime_for_sector(sector: str, default: str = LEONTIEF) -> str:
    """Production regime from a NACE level-2 code.

    Sections A..F (agriculture through construction, i.e. up to F43) produce
    physical goods and get the Leontief regime; everything from G45 onward is
    linear. Codes that are not of the form ``X99`` fall back to ``default``.
    """
    m = _NACE2.match(sector)
    if m is None:
        return default
    return LEONTIEF if m.group(1) <= "F" else LINEAR


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FirmRecord:
    id: str
    sector: str
    size: float
    devices: int = 0

    def __post_init__(self):
        if not self.sector:
            raise ValidationError(f"firm {self.id!r} has an empty sector", field="sector")
        if not (self.size > 0) or not np.isfinite(self.size):
            raise ValidationError(f"firm {self.id!r} has non-positive size {self.size}", field="size")
        if self.devices < 0:
            raise ValidationError(f"firm {self.id!r} has negative device count", field="devices")


@dataclass(frozen=True)
class SectorFlowTable:
    """Sector-to-sector flow matrix; ``flows[a, b]`` is the flow from a to b."""

    sectors: tuple[str, ...]
    flows: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.flows, dtype=float)
        k = len(self.sectors)
        if g.shape != (k, k):
            raise ValidationError(f"flow matrix shape {g.shape} does not match {k} sectors")
        if len(set(self.sectors)) != k:
            raise ValidationError("duplicate sector codes in IO table")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValidationError("IO table entries must be finite and non-negative")
        object.__setattr__(self, "sectors", tuple(self.sectors))
        object.__setattr__(self, "flows", _frozen(g))

    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.sectors)}

    def flow(self, a: str, b: str) -> float:
        idx = self.index()
        return float(self.flows[idx[a], idx[b]])

    def direction_probability(self, a: str, b: str) -> float:
        """Probability that a link between sectors a and b points a -> b."""
        idx = self.index()
        gab = self.flows[idx[a], idx[b]]
        gba = self.flows[idx[b], idx[a]]
        tot = gab + gba
        return 0.5 if tot <= 0 else float(gab / tot)


class _Graph:
    """Shared node bookkeeping for both network types."""

    ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.ids)

    def index_of(self) -> dict[str, int]:
        if self._index is None:
            object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.ids)})
        return self._index

    def _indices(self, nodes: Iterable[str]) -> np.ndarray:
        index = self.index_of()
        out = []
        for v in nodes:
            try:
                out.append(index[v])
            except KeyError:
                raise ValidationError(f"node {v!r} is not in the network", field="nodes") from None
        return np.unique(np.asarray(out, dtype=np.int64))


class CommunicationNetwork(_Graph):
    """Undirected graph; edge weight is the average daily call duration (s/d).

    Edges are stored once with ``u < v`` (index order), sorted lexicographically.
    """

    __slots__ = ("ids", "u", "v", "duration", "_index")

    def __init__(self, ids: Sequence[str], u, v, duration):
        ids = tuple(str(x) for x in ids)
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node ids")
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        d = np.asarray(duration, dtype=float)
        if not (u.shape == v.shape == d.shape):
            raise ValidationError("edge arrays differ in length")
        if u.size:
            if np.any(u == v):
                raise ValidationError("self-loops are not allowed")
            if u.min() < 0 or max(u.max(), v.max()) >= len(ids):
                raise ValidationError("edge endpoint out of range")
            if np.any(~np.isfinite(d)) or np.any(d <= 0):
                raise ValidationError("durations must be positive")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        order = np.lexsort((hi, lo))
        lo, hi, d = lo[order], hi[order], d[order]
        if lo.size > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                raise ValidationError("at most one edge per unordered pair")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "u", _frozen(lo))
        object.__setattr__(self, "v", _frozen(hi))
        object.__setattr__(self, "duration", _frozen(d))
        object.__setattr__(self, "_index", None)

    def __setattr__(self, name, value):
        raise AttributeError("CommunicationNetwork is immutable")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str, float]], nodes: Iterable[str] = ()) -> "CommunicationNetwork":
        """Build from ``(a, b, duration)`` triples; ``nodes`` adds isolated nodes."""
        edges = list(edges)
        ids = list(dict.fromkeys([*nodes, *(e[0] for e in edges), *(e[1] for e in edges)]))
        index = {k: i for i, k in enumerate(ids)}
        u = [index[a] for a, _, _ in edges]
        v = [index[b] for _, b, _ in edges]
        return cls(ids, u, v, [float(d) for _, _, d in edges])

    @property
    def m(self) -> int:
        return int(self.u.size)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.u, minlength=self.n) + np.bincount(self.v, minlength=self.n)

    def edge_pairs(self) -> set[frozenset[str]]:
        return {frozenset((self.ids[a], self.ids[b])) for a, b in zip(self.u, self.v)}

    def edges(self) -> list[tuple[str, str, float]]:
        return [(self.ids[a], self.ids[b], float(d)) for a, b, d in zip(self.u, self.v, self.duration)]

    def induced(self, keep: np.ndarray) -> "CommunicationNetwork":
        """Induced subgraph on sorted unique node indices ``keep``."""
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        mask = (remap[self.u] >= 0) & (remap[self.v] >= 0)
        ids = [self.ids[i] for i in keep]
        return CommunicationNetwork(ids, remap[self.u[mask]], remap[self.v[mask]], self.duration[mask])

    def with_edge_mask(self, mask: np.ndarray) -> "CommunicationNetwork":
        return CommunicationNetwork(self.ids, self.u[mask], self.v[mask], self.duration[mask])

    def __eq__(self, other):
        return (
            isinstance(other, CommunicationNetwork)
            and self.ids == other.ids
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.duration, other.duration)
        )

    __hash__ = None

    def __repr__(self):
        return f"CommunicationNetwork(n={self.n}, m={self.m})"


class SupplyNetwork(_Graph):
    """Directed weighted supply network; arc (i, j) carries goods from i to j.

    Arcs are sorted by (src, dst). ``out_ptr`` indexes the arc arrays per
    supplier; ``in_order``/``in_ptr`` give the same arcs grouped by buyer.
    """

    __slots__ = (
        "ids", "sectors", "sizes", "devices", "regimes",
        "src", "dst", "weight", "out_ptr", "in_order", "in_ptr", "_index",
    )

    def __init__(self, ids, sectors, sizes, src, dst, weight, *, devices=None, regimes=None):
        ids = tuple(str(x) for x in ids)
        n = len(ids)
        if len(set(ids)) != n:
            raise ValidationError("duplicate node ids")
        sectors = np.asarray([str(s) for s in sectors], dtype=object)
        sizes = np.asarray(sizes, dtype=float)
        if sectors.shape != (n,) or sizes.shape != (n,):
            raise ValidationError("per-node arrays must have one entry per node")
        if n and any(not s for s in sectors):
            raise ValidationError("every node needs a sector", field="sector")
        if np.any(~np.isfinite(sizes)) or np.any(sizes <= 0):
            raise ValidationError("sizes must be positive", field="size")
        devices = np.zeros(n, dtype=np.int64) if devices is None else np.asarray(devices, dtype=np.int64)
        if regimes is None:
            regimes = [regime_for_sector(s) for s in sectors]
        regimes = np.asarray(list(regimes), dtype=object)
        if regimes.shape != (n,) and n:
            raise ValidationError("every node needs a regime in {leontief, linear}", field="regime")
        if any(r not in REGIMES for r in regimes):
            raise ValidationError("every node needs a regime in {leontief, linear}", field="regime")

        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.asarray(weight, dtype=float)
        if not (src.shape == dst.shape == w.shape):
            raise ValidationError("arc arrays differ in length")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n:
                raise ValidationError("arc endpoint out of range")
            if np.any(src == dst):
                raise ValidationError("self-loops are not allowed")
            if np.any(~np.isfinite(w)) or np.any(w < 0):
                raise ValidationError("arc weights must be finite and non-negative", field="weight")
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        if src.size > 1:
            dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            if np.any(dup):
                # merge duplicate arcs by summation
                start = np.concatenate(([True], ~dup))
                grp = np.cumsum(start) - 1
                w = np.bincount(grp, weights=w)
                src, dst = src[start], dst[start]

        out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=out_ptr[1:])
        in_order = np.lexsort((src, dst)).astype(np.int64)
        in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=n), out=in_ptr[1:])

        for name, val in (
            ("ids", ids), ("sectors", _frozen(sectors)), ("sizes", _frozen(sizes)),
            ("devices", _frozen(devices)), ("regimes", _frozen(regimes)),
            ("src", _frozen(src)), ("dst", _frozen(dst)), ("weight", _frozen(w)),
            ("out_ptr", _frozen(out_ptr)), ("in_order", _frozen(in_order)),
            ("in_ptr", _frozen(in_ptr)), ("_index", None),
        ):
            object.__setattr__(self, name, val)

    def __setattr__(self, name, value):
        raise AttributeError("SupplyNetwork is immutable")

    @property
    def m(self) -> int:
        return int(self.src.size)

    def firm(self, i: int) -> FirmRecord:
        return FirmRecord(self.ids[i], self.sectors[i], float(self.sizes[i]), int(self.devices[i]))

    def firms(self) -> list[FirmRecord]:
        return [self.firm(i) for i in range(self.n)]

    def arcs(self) -> list[tuple[str, str, float]]:
        return [(self.ids[a], self.ids[b], float(w)) for a, b, w in zip(self.src, self.dst, self.weight)]

    def out_strength(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.weight, minlength=self.n)

    def in_strength(self) -> np.ndarray:
        return np.bincount(self.dst, weights=self.weight, minlength=self.n)

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def sector_codes(self) -> tuple[list[str], np.ndarray]:
        """Sorted unique sector codes and the per-node integer code."""
        codes = sorted(set(self.sectors))
        lookup = {c: k for k, c in enumerate(codes)}
        return codes, np.fromiter((lookup[s] for s in self.sectors), dtype=np.int64, count=self.n)

    def replace(self, *, src=None, dst=None, weight=None, sizes=None, regimes=None) -> "SupplyNetwork":
        """Copy with some arrays swapped out (node set unchanged)."""
        return SupplyNetwork(
            self.ids, self.sectors,
            self.sizes if sizes is None else sizes,
            self.src if src is None else src,
            self.dst if dst is None else dst,
            self.weight if weight is None else weight,
            devices=self.devices,
            regimes=self.regimes if regimes is None else regimes,
        )

    def induced(self, keep: np.ndarray) -> "SupplyNetwork":
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        mask = (remap[self.src] >= 0) & (remap[self.dst] >= 0)
        return SupplyNetwork(
            [self.ids[i] for i in keep], self.sectors[keep], self.sizes[keep],
            remap[self.src[mask]], remap[self.dst[mask]], self.weight[mask],
            devices=self.devices[keep], regimes=self.regimes[keep],
        )

    def undirected_pairs(self) -> set[frozenset[str]]:
        return {frozenset((self.ids[a], self.ids[b])) for a, b in zip(self.src, self.dst)}

    def __eq__(self, other):
        return (
            isinstance(other, SupplyNetwork)
            and self.ids == other.ids
            and list(self.sectors) == list(other.sectors)
            and list(self.regimes) == list(other.regimes)
            and np.array_equal(self.sizes, other.sizes)
            and np.array_equal(self.devices, other.devices)
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
        )

    __hash__ = None

    def __repr__(self):
        return f"SupplyNetwork(n={self.n}, m={self.m})"


def build_supply_network(
    firms: Sequence[FirmRecord],
    arcs: Iterable[tuple[str, str, float]],
    regimes: Mapping[str, str] | None = None,
) -> SupplyNetwork:
    """Validated supply network from firm records and ``(supplier, buyer, weight)`` arcs.

    Duplicate arcs are merged by summing their weights. ``regimes`` maps a
    sector code to a production regime and overrides the NACE rule.
    """
    ids = [f.id for f in firms]
    if not ids:
        raise ValidationError("a supply network needs at least one firm")
    index = {k: i for i, k in enumerate(ids)}
    if len(index) != len(ids):
        raise ValidationError("firm ids must be unique", field="id")
    src, dst, w = [], [], []
    for a, b, weight in arcs:
        for end in (a, b):
            if end not in index:
                raise ValidationError(f"arc endpoint {end!r} is not a known firm", field="arcs")
        if weight < 0:
            raise ValidationError(f"negative weight on arc {a}->{b}", field="weight")
        if a == b:
            raise ValidationError(f"self-loop on {a!r}", field="arcs")
        src.append(index[a])
        dst.append(index[b])
        w.append(float(weight))
    regimes = regimes or {}
    reg = [regimes.get(f.sector, regime_for_sector(f.sector)) for f in firms]
    return SupplyNetwork(
        ids, [f.sector for f in firms], [f.size for f in firms], src, dst, w,
        devices=[f.devices for f in firms], regimes=reg,
    )


def induced_subgraph(net, nodes: Iterable[str]):
    """Subgraph on ``nodes`` keeping every edge or arc with both ends inside.

    Node order follows the original network.
    """
    return net.induced(net._indices(nodes))
