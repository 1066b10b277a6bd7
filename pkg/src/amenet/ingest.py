"""Concert-archive CSV ingestion: records -> network + covariate table.

The input CSV (UTF-8, header required) has one row per piece performed:

    concert_id,season,order_index,composer_name,piece_title,birth_year,region

``order_index`` is the 1-based position of the piece within its concert.
``region`` is one of European, NorthAmerican, SouthAmerican, Asian, Other.
birth_year/region may be empty only on traditional/anonymous rows, which are
merged into a single "Anonymous" node.

An edge i -> j means composer i was performed before composer j somewhere in
the corpus.  Composers never performed before anyone still become nodes.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .network import DirectedNetwork

__all__ = [
    "IngestError",
    "ConcertRecord",
    "CovariateTable",
    "IngestReport",
    "classify_piece",
    "handle_anonymous",
    "aggregate_covariates",
    "build_network",
    "read_concert_csv",
    "ingest_records",
]

REGIONS = ("European", "NorthAmerican", "SouthAmerican", "Asian", "Other")
REGION_REFERENCE = "Other"  # all-zero dummy row
REGION_DUMMIES = tuple(r for r in REGIONS if r != REGION_REFERENCE)
PIECE_CATEGORIES = ("Overture", "Concerto", "Symphony", "Other")
ANONYMOUS_NODE = "Anonymous"
_ANONYMOUS_ALIASES = {"traditional", "anonymous"}


class IngestError(ValueError):
    """Malformed or inconsistent concert-archive input."""


@dataclass(frozen=True)
class ConcertRecord:
    """One performed piece within one concert."""

    concert_id: str
    season: str
    order_index: int
    composer_name: str
    piece_title: str
    birth_year: int | None = None
    region: str | None = None
    line: int | None = None  # source CSV line, for error messages


def canonical_name(name: str) -> str:
    """Trim and collapse internal whitespace; no fuzzy matching beyond that,
    so spelling mismatches surface as extra nodes."""
    return " ".join(name.split())


def classify_piece(title: str) -> str:
    """Case-insensitive keyword classification with fixed precedence
    Overture > Concerto > Symphony; anything else is Other."""
    if not title or not title.strip():
        raise IngestError("empty piece title")
    low = title.lower()
    for keyword, category in (("overture", "Overture"),
                              ("concerto", "Concerto"),
                              ("symphony", "Symphony")):
        if keyword in low:
            return category
    return "Other"


def _normalize_region(raw: str, line: int | None) -> str:
    key = raw.replace(" ", "").replace("_", "").replace("-", "").casefold()
    for region in REGIONS:
        if key == region.casefold():
            return region
    where = f" (line {line})" if line else ""
    raise IngestError(f"unknown region {raw!r}{where}; expected one of {REGIONS}")


def handle_anonymous(records: list[ConcertRecord]) -> list[ConcertRecord]:
    """Collapse Traditional/Anonymous rows into one 'Anonymous' node with
    region Other and a default birth year (the median over named composers,
    rounded to an integer)."""
    def is_anon(r):
        return canonical_name(r.composer_name).casefold() in _ANONYMOUS_ALIASES

    if not any(is_anon(r) for r in records):
        return list(records)
    named_years = sorted({
        (canonical_name(r.composer_name), r.birth_year)
        for r in records if not is_anon(r) and r.birth_year is not None
    })
    if not named_years:
        raise IngestError("cannot derive a default birth year: no named composer has one")
    default_year = int(round(float(np.median([y for _, y in named_years]))))
    out = []
    for r in records:
        if is_anon(r):
            out.append(ConcertRecord(
                concert_id=r.concert_id, season=r.season, order_index=r.order_index,
                composer_name=ANONYMOUS_NODE, piece_title=r.piece_title,
                birth_year=default_year, region=REGION_REFERENCE, line=r.line))
        else:
            out.append(r)
    return out


@dataclass(frozen=True)
class CovariateTable:
    """Per-node design information.

    ``birth_year`` is standardized (corpus mean subtracted, divided by the
    population standard deviation); the raw years are kept for reporting.
    ``region_dummies`` has one indicator column per non-reference region and
    ``piece_flags`` the four ever-performed piece-type indicators.
    """

    node_ids: tuple[str, ...]
    birth_year: np.ndarray
    birth_year_raw: np.ndarray
    region: tuple[str, ...]
    region_dummies: np.ndarray
    piece_flags: np.ndarray

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def design(self) -> tuple[np.ndarray, list[str]]:
        """(n, 9) model design matrix and its column names."""
        Xd = np.column_stack([self.birth_year, self.region_dummies, self.piece_flags])
        names = (["birth_year"]
                 + [f"region_{r}" for r in REGION_DUMMIES]
                 + [f"piece_{c.lower()}" for c in PIECE_CATEGORIES])
        return Xd, names

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "birth_year_raw", "birth_year_std", "region"]
                       + [f"piece_{c.lower()}" for c in PIECE_CATEGORIES])
            for k, node in enumerate(self.node_ids):
                w.writerow([node, int(self.birth_year_raw[k]),
                            format(self.birth_year[k], ".17g"), self.region[k]]
                           + [int(x) for x in self.piece_flags[k]])

    @classmethod
    def read_csv(cls, path) -> "CovariateTable":
        nodes, raw, std, regions, flags = [], [], [], [], []
        with open(path, encoding="utf-8", newline="") as fh:
            rd = csv.DictReader(fh)
            for row in rd:
                nodes.append(row["node_id"])
                raw.append(int(row["birth_year_raw"]))
                std.append(float(row["birth_year_std"]))
                regions.append(_normalize_region(row["region"], None))
                flags.append([int(row[f"piece_{c.lower()}"]) for c in PIECE_CATEGORIES])
        dummies = _region_dummies(regions)
        return cls(tuple(nodes), np.array(std), np.array(raw), tuple(regions),
                   dummies, np.array(flags, dtype=float))


def _region_dummies(regions) -> np.ndarray:
    return np.array([[1.0 if r == d else 0.0 for d in REGION_DUMMIES] for r in regions])


def aggregate_covariates(records: list[ConcertRecord]) -> CovariateTable:
    """One covariate row per composer: piece flags are ORed over every
    performance; birth_year/region must be consistent across a composer's
    rows (call :func:`handle_anonymous` first)."""
    if not records:
        raise IngestError("no records")
    years: dict[str, set] = defaultdict(set)
    regions: dict[str, set] = defaultdict(set)
    flags: dict[str, set] = defaultdict(set)
    for r in records:
        name = canonical_name(r.composer_name)
        if r.birth_year is None or r.region is None:
            where = f" (line {r.line})" if r.line else ""
            raise IngestError(
                f"composer {name!r} is missing birth_year or region{where}; "
                "only anonymous/traditional rows may omit them")
        years[name].add(int(r.birth_year))
        regions[name].add(_normalize_region(r.region, r.line))
        flags[name].add(classify_piece(r.piece_title))
    for name in years:
        if len(years[name]) > 1:
            raise IngestError(f"inconsistent birth_year for composer {name!r}: {sorted(years[name])}")
        if len(regions[name]) > 1:
            raise IngestError(f"inconsistent region for composer {name!r}: {sorted(regions[name])}")
    nodes = tuple(sorted(years))
    raw = np.array([years[nm].pop() for nm in nodes], dtype=float)
    sd = float(np.std(raw))
    std = (raw - raw.mean()) / sd if sd > 0 else np.zeros_like(raw)
    region_list = tuple(regions[nm].pop() for nm in nodes)
    flag_mat = np.array([[1.0 if c in flags[nm] else 0.0 for c in PIECE_CATEGORIES]
                         for nm in nodes])
    return CovariateTable(nodes, std, raw.astype(int), region_list,
                          _region_dummies(region_list), flag_mat)


def build_network(records: list[ConcertRecord], symmetric: bool = False) -> DirectedNetwork:
    """Edge i -> j for every concert where a piece by i preceded a piece by
    j, unioned over concerts; no self-edges.  Node order is lexicographic in
    the canonical composer names."""
    if not records:
        raise IngestError("no records")
    concerts: dict[str, list[tuple[int, str]]] = defaultdict(list)
    seen: set[tuple[str, int]] = set()
    for r in records:
        key = (r.concert_id, r.order_index)
        if key in seen:
            raise IngestError(
                f"duplicate order_index {r.order_index} in concert {r.concert_id!r}")
        seen.add(key)
        concerts[r.concert_id].append((r.order_index, canonical_name(r.composer_name)))
    names = sorted({canonical_name(r.composer_name) for r in records})
    pos = {nm: k for k, nm in enumerate(names)}
    adj = np.zeros((len(names), len(names)))
    for cid, rows in concerts.items():
        rows.sort()
        idx = [k for k, _ in rows]
        if idx != list(range(1, len(rows) + 1)):
            raise IngestError(
                f"concert {cid!r}: order_index values {idx} are not 1..{len(rows)}")
        for p in range(len(rows)):
            for q in range(p + 1, len(rows)):
                ci, cj = rows[p][1], rows[q][1]
                if ci != cj:
                    adj[pos[ci], pos[cj]] = 1.0
    net = DirectedNetwork(adj, tuple(names), symmetric=False)
    return net.symmetrize() if symmetric else net


_CSV_COLUMNS = ("concert_id", "season", "order_index", "composer_name",
                "piece_title", "birth_year", "region")


def read_concert_csv(path) -> list[ConcertRecord]:
    """Parse and validate the archive CSV; errors carry line numbers."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None:
            raise IngestError(f"{path}: empty file (header row required)")
        missing = [c for c in _CSV_COLUMNS if c not in rd.fieldnames]
        if missing:
            raise IngestError(f"{path}: missing required columns {missing}")
        for lineno, row in enumerate(rd, start=2):
            def bad(msg):
                return IngestError(f"{path}:{lineno}: {msg}")
            cid = (row["concert_id"] or "").strip()
            if not cid:
                raise bad("empty concert_id")
            name = canonical_name(row["composer_name"] or "")
            if not name:
                raise bad("empty composer_name")
            title = (row["piece_title"] or "").strip()
            if not title:
                raise bad("empty piece_title")
            try:
                order = int(row["order_index"])
            except (TypeError, ValueError):
                raise bad(f"order_index {row['order_index']!r} is not an integer") from None
            if order < 1:
                raise bad(f"order_index must be >= 1, got {order}")
            year_raw = (row["birth_year"] or "").strip()
            if year_raw:
                try:
                    year = int(year_raw)
                except ValueError:
                    raise bad(f"birth_year {year_raw!r} is not an integer") from None
            else:
                year = None
            region_raw = (row["region"] or "").strip()
            region = _normalize_region(region_raw, lineno) if region_raw else None
            records.append(ConcertRecord(
                concert_id=cid, season=(row["season"] or "").strip(),
                order_index=order, composer_name=name, piece_title=title,
                birth_year=year, region=region, line=lineno))
    if not records:
        raise IngestError(f"{path}: no records")
    return records


@dataclass
class IngestReport:
    """Counts emitted alongside the network and covariates."""

    n_nodes: int
    n_edges: int
    n_concerts: int
    n_pieces: int
    piece_share: dict[str, float]
    top_out_degree: list[tuple[str, int]]
    top_in_degree: list[tuple[str, int]]
    anonymous_rows_merged: int = 0

    def as_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
            "n_concerts": self.n_concerts,
            "n_pieces": self.n_pieces,
            "piece_share": self.piece_share,
            "top_out_degree": [list(t) for t in self.top_out_degree],
            "top_in_degree": [list(t) for t in self.top_in_degree],
            "anonymous_rows_merged": self.anonymous_rows_merged,
        }

    def format_text(self) -> str:
        lines = [
            f"nodes:    {self.n_nodes}",
            f"edges:    {self.n_edges}",
            f"concerts: {self.n_concerts}",
            f"pieces:   {self.n_pieces}",
            f"anonymous rows merged: {self.anonymous_rows_merged}",
            "",
            "piece-type share of performances:",
        ]
        for cat in PIECE_CATEGORIES:
            lines.append(f"  {cat:<9} {100.0 * self.piece_share[cat]:6.2f}%")
        lines.append("")
        lines.append(f"{'top out-degree':<34}{'top in-degree'}")
        for (no, do), (ni, di) in zip(self.top_out_degree, self.top_in_degree):
            lines.append(f"  {no:<24}{do:>4}    {ni:<24}{di:>4}")
        return "\n".join(lines) + "\n"


def ingest_records(records: list[ConcertRecord], symmetric: bool = False,
                   top_k: int = 10) -> tuple[DirectedNetwork, CovariateTable, IngestReport]:
    """Full pipeline: anonymous merge, network, covariates, report."""
    n_anon = sum(1 for r in records
                 if canonical_name(r.composer_name).casefold() in _ANONYMOUS_ALIASES)
    merged = handle_anonymous(records)
    net = build_network(merged, symmetric=symmetric)
    table = aggregate_covariates(merged)
    counts = {c: 0 for c in PIECE_CATEGORIES}
    for r in merged:
        counts[classify_piece(r.piece_title)] += 1
    total = len(merged)
    degrees = net.degree_table(top_k)
    report = IngestReport(
        n_nodes=net.n,
        n_edges=net.edge_count(),
        n_concerts=len({r.concert_id for r in merged}),
        n_pieces=total,
        piece_share={c: counts[c] / total for c in PIECE_CATEGORIES},
        top_out_degree=degrees["out"],
        top_in_degree=degrees["in"],
        anonymous_rows_merged=n_anon,
    )
    return net, table, report
