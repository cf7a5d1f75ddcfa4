"""Per-region attribute tables with explicit missingness.

Values are float64 arrays aligned to the lattice universe; NaN marks a
MISSING cell. Present values are always finite: parsers reject NaN/inf
text, and the only way to make a cell missing is an empty CSV cell or an
explicitly configured sentinel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateRegionId, MalformedInput, MissingFeature, UnknownRegion
from .textio import format_optional, parse_cell


@dataclass
class AttributeTable:
    """Named numeric features over a fixed region universe."""

    region_ids: list[str]
    features: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.region_ids)
        for name, values in self.features.items():
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (n,):
                raise MalformedInput(f"feature {name!r} is not aligned to the universe")
            if np.isinf(values).any():
                raise MalformedInput(f"feature {name!r} holds non-finite values")
            self.features[name] = values

    @property
    def n(self) -> int:
        return len(self.region_ids)

    @property
    def feature_names(self) -> list[str]:
        return list(self.features)

    def values(self, name: str) -> np.ndarray:
        if name not in self.features:
            raise MissingFeature(f"unknown feature {name!r}")
        return self.features[name]

    def missing_mask(self, name: str) -> np.ndarray:
        return np.isnan(self.values(name))

    def require_complete(self, name: str) -> np.ndarray:
        values = self.values(name)
        gaps = np.isnan(values)
        if gaps.any():
            bad = [self.region_ids[i] for i in np.nonzero(gaps)[0][:5]]
            raise MissingFeature(
                f"feature {name!r} is missing for {int(gaps.sum())} region(s), e.g. {bad}"
            )
        return values

    def with_feature(self, name: str, values: np.ndarray) -> "AttributeTable":
        merged = dict(self.features)
        merged[name] = np.asarray(values, dtype=np.float64)
        return AttributeTable(list(self.region_ids), merged)

    def merge(self, other: "AttributeTable") -> "AttributeTable":
        if other.region_ids != self.region_ids:
            raise UnknownRegion("cannot merge tables over different universes")
        overlap = set(self.features) & set(other.features)
        if overlap:
            raise MalformedInput(f"duplicate feature(s) {sorted(overlap)}")
        merged = dict(self.features)
        merged.update(other.features)
        return AttributeTable(list(self.region_ids), merged)


def parse_attributes(
    data: bytes | str,
    universe: list[str],
    missing_sentinels: tuple[float, ...] = (),
) -> AttributeTable:
    """Parse an attribute CSV aligned to ``universe``.

    The first column holds region ids; remaining header names declare
    features. Empty cells are MISSING; sentinel numerics are ordinary
    values unless listed in ``missing_sentinels``. Regions absent from the
    CSV get MISSING for every feature; ids outside the universe are an
    error, never a silent drop.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows or len(rows[0]) < 2:
        raise MalformedInput("attribute CSV needs a header with region_id and features")
    header = rows[0]
    names = header[1:]
    if len(set(names)) != len(names):
        raise MalformedInput("duplicate feature column names")

    index = {rid: i for i, rid in enumerate(universe)}
    n = len(universe)
    columns = {name: np.full(n, np.nan) for name in names}
    seen: set[str] = set()
    for rno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        rid = row[0]
        if rid not in index:
            raise UnknownRegion(f"region id {rid!r} (row {rno}) is not in the lattice")
        if rid in seen:
            raise DuplicateRegionId(f"region id {rid!r} appears twice (row {rno})")
        seen.add(rid)
        if len(row) != len(header):
            raise MalformedInput(f"row {rno} has {len(row)} cells, expected {len(header)}")
        at = index[rid]
        for col, name in enumerate(names, start=1):
            cell = row[col]
            if cell == "":
                continue
            value = parse_cell(cell, f"row {rno}, column {name!r}")
            if value in missing_sentinels:
                continue
            columns[name][at] = value
    return AttributeTable(list(universe), columns)


def parse_attributes_standalone(
    data: bytes | str, missing_sentinels: tuple[float, ...] = ()
) -> AttributeTable:
    """Parse an attribute CSV whose own rows define the universe (file order)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows:
        raise MalformedInput("attribute CSV is empty")
    ids = []
    seen = set()
    for row in rows[1:]:
        if not row:
            continue
        if row[0] in seen:
            raise DuplicateRegionId(f"region id {row[0]!r} appears twice")
        seen.add(row[0])
        ids.append(row[0])
    return parse_attributes(data, ids, missing_sentinels)


def emit_attributes(table: AttributeTable, id_column: str = "region_id") -> str:
    """Serialize a table; inverse of :func:`parse_attributes` for its universe."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    names = table.feature_names
    writer.writerow([id_column] + names)
    for i, rid in enumerate(table.region_ids):
        writer.writerow([rid] + [format_optional(float(table.features[name][i])) for name in names])
    return out.getvalue()


def broadcast_attributes(
    universe: list[str], region_to_key: dict[str, str], source: AttributeTable
) -> AttributeTable:
    """Broadcast a coarser table (e.g. per county) onto the region universe.

    Each region takes the source row named by its key; regions without a
    mapping or whose key is absent from the source get MISSING values,
    which the imputation step can then fill from neighbors.
    """
    src_index = {rid: i for i, rid in enumerate(source.region_ids)}
    n = len(universe)
    out = {}
    for name in source.feature_names:
        col = np.full(n, np.nan)
        src = source.features[name]
        for i, rid in enumerate(universe):
            key = region_to_key.get(rid)
            if key is not None and key in src_index:
                col[i] = src[src_index[key]]
        out[name] = col
    return AttributeTable(list(universe), out)


def parse_region_key_map(data: bytes | str) -> dict[str, str]:
    """Parse a two-column region_id,key CSV used for attribute broadcast."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows or len(rows[0]) < 2:
        raise MalformedInput("key map CSV needs region_id,key columns")
    mapping: dict[str, str] = {}
    for rno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if row[0] in mapping:
            raise DuplicateRegionId(f"region id {row[0]!r} mapped twice (row {rno})")
        mapping[row[0]] = row[1]
    return mapping
