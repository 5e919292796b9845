"""CSV/JSON readers and writers for every on-disk format the package uses.

Formats (all with a header row):

* communication edges: ``src,dst,total_duration_s,observation_days``
* firms: ``id,sector,size,devices``
* IO table: header row of sector codes, square numeric body; an optional
  leading label column is accepted when the header's first cell is empty
* survey: ``reporter_id,partner_id,role`` with role in {supplier, customer}
* supply network edge list: ``src,dst,weight``
* sector mapping: ``firm_sector,io_sector``
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    CommunicationNetwork,
    FirmRecord,
    SectorFlowTable,
    SupplyNetwork,
    ValidationError,
    build_supply_network,
)

logger = logging.getLogger(__name__)

# call-center-like businesses whose phone traffic is their product
EXCLUDED_SECTORS = frozenset({"J61", "J62", "M70", "N82"})


@dataclass
class LoadReport:
    """Counters for rows that were dropped or merged while loading."""

    rows: int = 0
    self_loops: int = 0
    merged: int = 0
    excluded: int = 0
    duplicates: int = 0
    excluded_by_sector: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SurveyLink:
    supplier: str
    customer: str
    reporter: str


@dataclass
class Survey:
    links: list[SurveyLink]

    @property
    def reporters(self) -> set[str]:
        return {l.reporter for l in self.links}

    @property
    def mentioned(self) -> set[str]:
        return {l.customer if l.supplier == l.reporter else l.supplier for l in self.links}

    def pairs(self) -> set[frozenset[str]]:
        return {frozenset((l.supplier, l.customer)) for l in self.links}


def _rows(path, expected: Sequence[str]):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file", line=1) from None
        if header[: len(expected)] != list(expected):
            raise ValidationError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(expected):
                raise ValidationError(f"{path}: expected {len(expected)} columns, got {len(row)}", line=lineno)
            yield lineno, [c.strip() for c in row]


def _num(text: str, lineno: int, what: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ValidationError(f"malformed {what} {text!r}", line=lineno, field=what) from None
    if not math.isfinite(x):
        raise ValidationError(f"non-finite {what}", line=lineno, field=what)
    return x


def load_comm_edges(path, report: LoadReport | None = None) -> CommunicationNetwork:
    """Aggregated call records to an undirected network of average daily durations.

    Rows for (i, j) and (j, i) are merged by summing their durations before
    dividing by the observation window.
    """
    report = report if report is not None else LoadReport()
    per_day: dict[tuple[str, str], float] = defaultdict(float)
    nodes: dict[str, None] = {}
    for lineno, (a, b, total, days) in _rows(path, ("src", "dst", "total_duration_s", "observation_days")):
        report.rows += 1
        total_s = _num(total, lineno, "total_duration_s")
        n_days = _num(days, lineno, "observation_days")
        if n_days <= 0:
            raise ValidationError("observation_days must be positive", line=lineno, field="observation_days")
        if total_s < 0:
            raise ValidationError("negative call duration", line=lineno, field="total_duration_s")
        if not a or not b:
            raise ValidationError("empty firm id", line=lineno)
        if a == b:
            report.self_loops += 1
            logger.warning("line %d: dropping self-loop on %s", lineno, a)
            continue
        key = (a, b) if a < b else (b, a)
        if key in per_day:
            report.merged += 1
        per_day[key] += total_s / n_days
        nodes.setdefault(a)
        nodes.setdefault(b)
    edges = [(a, b, d) for (a, b), d in per_day.items() if d > 0]
    return CommunicationNetwork.from_edges(edges, nodes=nodes)


def load_firms(path, report: LoadReport | None = None, exclude: Iterable[str] = EXCLUDED_SECTORS) -> list[FirmRecord]:
    report = report if report is not None else LoadReport()
    exclude = frozenset(exclude)
    seen: set[str] = set()
    out = []
    for lineno, (fid, sector, size, devices) in _rows(path, ("id", "sector", "size", "devices")):
        report.rows += 1
        if fid in seen:
            raise ValidationError(f"duplicate firm id {fid!r}", line=lineno, field="id")
        seen.add(fid)
        s = _num(size, lineno, "size")
        if s <= 0:
            raise ValidationError(f"size must be positive, got {s}", line=lineno, field="size")
        dev = _num(devices, lineno, "devices")
        if dev < 0 or dev != int(dev):
            raise ValidationError("devices must be a non-negative integer", line=lineno, field="devices")
        if not sector:
            raise ValidationError("empty sector", line=lineno, field="sector")
        if sector in exclude:
            report.excluded += 1
            report.excluded_by_sector[sector] = report.excluded_by_sector.get(sector, 0) + 1
            continue
        out.append(FirmRecord(fid, sector, s, int(dev)))
    return out


def load_io_table(path) -> SectorFlowTable:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: empty IO table", line=1)
    header = [c.strip() for c in rows[0]]
    labelled = header[0] == ""
    sectors = header[1:] if labelled else header
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in row]
        if labelled:
            label, cells = cells[0], cells[1:]
            expected = sectors[len(body)] if len(body) < len(sectors) else None
            if expected is not None and label != expected:
                raise ValidationError(f"row label {label!r} does not match column order", line=lineno)
        if len(cells) != len(sectors):
            raise ValidationError(f"IO table is not square: {len(cells)} values for {len(sectors)} sectors", line=lineno)
        vals = [_num(c, lineno, "flow") for c in cells]
        if any(v < 0 for v in vals):
            raise ValidationError("negative IO table entry", line=lineno, field="flow")
        body.append(vals)
    if len(body) != len(sectors):
        raise ValidationError(f"IO table is not square: {len(body)} rows for {len(sectors)} sectors")
    return SectorFlowTable(tuple(sectors), np.asarray(body, dtype=float).reshape(len(sectors), len(sectors)))


def load_sector_mapping(path) -> dict[str, str]:
    return {a: b for _, (a, b) in _rows(path, ("firm_sector", "io_sector"))}


def load_survey(path, report: LoadReport | None = None) -> Survey:
    """Survey rows to directed supplier -> customer links, deduplicated."""
    report = report if report is not None else LoadReport()
    links: dict[SurveyLink, None] = {}
    for lineno, (reporter, partner, role) in _rows(path, ("reporter_id", "partner_id", "role")):
        report.rows += 1
        role = role.lower()
        if role == "supplier":
            link = SurveyLink(partner, reporter, reporter)
        elif role == "customer":
            link = SurveyLink(reporter, partner, reporter)
        else:
            raise ValidationError(f"unknown role {role!r}", line=lineno, field="role")
        if reporter == partner:
            report.self_loops += 1
            continue
        if link in links:
            report.duplicates += 1
            continue
        links[link] = None
    return Survey(list(links))


def load_supply_network(edges_path, firms_path) -> SupplyNetwork:
    firms = load_firms(firms_path, exclude=())
    arcs = []
    for lineno, (a, b, w) in _rows(edges_path, ("src", "dst", "weight")):
        arcs.append((a, b, _num(w, lineno, "weight")))
    return build_supply_network(firms, arcs)


# ---------------------------------------------------------------- writers


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_firms(path, firms: Sequence[FirmRecord]) -> Path:
    return write_csv(path, ("id", "sector", "size", "devices"), ((f.id, f.sector, f.size, f.devices) for f in firms))


def write_supply_edges(path, net: SupplyNetwork) -> Path:
    return write_csv(path, ("src", "dst", "weight"), net.arcs())


def write_io_table(path, table: SectorFlowTable) -> Path:
    return write_csv(path, table.sectors, (list(r) for r in table.flows))


def write_comm_edges(path, comm: CommunicationNetwork, observation_days: float = 1.0) -> Path:
    """Inverse of :func:`load_comm_edges` for a given observation window."""
    return write_csv(
        path, ("src", "dst", "total_duration_s", "observation_days"),
        ((a, b, d * observation_days, observation_days) for a, b, d in comm.edges()),
    )


def _table_of(result):
    from .esri.engine import EnsembleStats, EsriProfile

    if isinstance(result, EsriProfile):
        return ("id", "esri", "iterations"), [
            (i, float(v), int(t)) for i, v, t in zip(result.ids, result.values, result.iterations)
        ]
    if isinstance(result, EnsembleStats):
        return ("id", "median", "q25", "q75", "max"), [
            (i, float(a), float(b), float(c), float(d))
            for i, a, b, c, d in zip(result.ids, result.median, result.q25, result.q75, result.max)
        ]
    if isinstance(result, Mapping):
        header = tuple(result["columns"])
        return header, [tuple(r) for r in result["rows"]]
    raise TypeError(f"cannot write {type(result).__name__}")


def write_results(result, path, format: str = "csv") -> Path:
    """Write an EsriProfile, EnsembleStats or ``{"columns", "rows"}`` table.

    Floats are written with ``repr`` so values round-trip exactly.
    """
    header, rows = _table_of(result)
    path = Path(path)
    if format == "csv":
        return write_csv(path, header, rows)
    if format == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        records = [dict(zip(header, (x.item() if isinstance(x, np.generic) else x for x in r))) for r in rows]
        path.write_text(json.dumps({"columns": list(header), "records": records}, indent=1) + "\n")
        return path
    raise ValueError(f"unknown format {format!r}")


def load_results(path):
    """Read back a file written by :func:`write_results`."""
    from .esri.engine import EnsembleStats, EsriProfile

    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        header = tuple(doc["columns"])
        rows = [tuple(rec[c] for c in header) for rec in doc["records"]]
    else:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = [tuple(r) for r in reader if r]
    if header == ("id", "esri", "iterations"):
        return EsriProfile(
            ids=tuple(str(r[0]) for r in rows),
            values=np.array([float(r[1]) for r in rows]),
            iterations=np.array([int(r[2]) for r in rows], dtype=np.int64),
        )
    if header == ("id", "median", "q25", "q75", "max"):
        cols = list(zip(*rows)) if rows else [()] * 5
        return EnsembleStats(
            ids=tuple(str(x) for x in cols[0]),
            median=np.array(cols[1], dtype=float),
            q25=np.array(cols[2], dtype=float),
            q75=np.array(cols[3], dtype=float),
            max=np.array(cols[4], dtype=float),
        )
    return {"columns": list(header), "rows": rows}
