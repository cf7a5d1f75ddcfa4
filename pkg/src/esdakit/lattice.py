"""Region lattices, facility points, and the point-to-region spatial join.

Coordinates are planar lon/lat degrees throughout: at the areal-unit scales
this engine targets, planar containment error is negligible, and the
determinism of an exact even-odd test matters more than geodesic fidelity.

Boundary rule: a point exactly on a ring edge or vertex is INSIDE. When two
regions both contain a point (shared boundary, or overlapping input), the
region with the lowest canonical index wins, so join tallies reproduce.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoordinateOutOfRange,
    DuplicatePointId,
    DuplicateRegionId,
    MalformedInput,
    MissingRegionId,
    NonArealGeometry,
)
from .textio import parse_cell

# A ring is an (k, 2) float array of lon/lat vertices, closed (first == last).
# A polygon is a list of rings (outer first, holes after); a region geometry
# is a list of polygons.
Ring = np.ndarray
Polygon = list


@dataclass
class RegionLattice:
    """Ordered polygonal regions; list order defines canonical indices 0..n-1."""

    region_ids: list[str]
    geometries: list[list[Polygon]]
    geometry_types: list[str]
    id_property: str = "region_id"
    _index: dict[str, int] = field(init=False, repr=False)
    _bboxes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.region_ids) != len(self.geometries):
            raise MalformedInput("region_ids and geometries differ in length")
        self._index = {}
        for pos, rid in enumerate(self.region_ids):
            if not rid:
                raise MissingRegionId(f"empty region id at index {pos}")
            if rid in self._index:
                raise DuplicateRegionId(f"duplicate region id {rid!r}")
            self._index[rid] = pos
        boxes = np.empty((len(self.region_ids), 4))
        for pos, polys in enumerate(self.geometries):
            _validate_rings(polys, self.region_ids[pos])
            pts = np.vstack([ring for poly in polys for ring in poly])
            boxes[pos] = (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
        self._bboxes = boxes

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def index_of(self, region_id: str) -> int:
        return self._index[region_id]

    def bounding_boxes(self) -> np.ndarray:
        """(n, 4) array of (min lon, min lat, max lon, max lat)."""
        return self._bboxes

    def geometry_as_geojson(self, pos: int) -> dict:
        """Rebuild the GeoJSON geometry object for one region."""
        polys = [[ring.tolist() for ring in poly] for poly in self.geometries[pos]]
        if self.geometry_types[pos] == "Polygon":
            return {"type": "Polygon", "coordinates": polys[0]}
        return {"type": "MultiPolygon", "coordinates": polys}


def _validate_rings(polys: list[Polygon], rid: str) -> None:
    if not polys:
        raise NonArealGeometry(f"region {rid!r} has no polygon rings")
    for poly in polys:
        for ring in poly:
            if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
                raise MalformedInput(f"region {rid!r}: ring needs >= 4 lon/lat vertices")
            if not np.isfinite(ring).all():
                raise MalformedInput(f"region {rid!r}: non-finite coordinate")
            if ring[0, 0] != ring[-1, 0] or ring[0, 1] != ring[-1, 1]:
                raise MalformedInput(f"region {rid!r}: ring is not closed")


def _as_ring(coords, rid: str) -> Ring:
    try:
        ring = np.asarray(coords, dtype=np.float64)
    except (TypeError, ValueError):
        raise MalformedInput(f"region {rid!r}: malformed ring coordinates") from None
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise MalformedInput(f"region {rid!r}: malformed ring coordinates")
    return np.ascontiguousarray(ring[:, :2])


def parse_lattice(data: bytes | str, id_property: str = "region_id") -> RegionLattice:
    """Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features.

    Features are kept in file order, which fixes the canonical region
    indices used by every other module.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise MalformedInput("expected a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise MalformedInput("FeatureCollection has no features list")

    ids: list[str] = []
    geometries: list[list[Polygon]] = []
    geometry_types: list[str] = []
    for pos, feature in enumerate(features):
        props = feature.get("properties") or {}
        rid = props.get(id_property)
        if rid is None:
            rid = feature.get("id")
        if rid is None:
            raise MissingRegionId(f"feature {pos} lacks property {id_property!r}")
        rid = str(rid)
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            polys = [coords]
        elif gtype == "MultiPolygon":
            polys = coords
        else:
            raise NonArealGeometry(f"region {rid!r}: geometry type {gtype!r}")
        if not polys:
            raise NonArealGeometry(f"region {rid!r}: empty geometry")
        parsed = [[_as_ring(ring, rid) for ring in poly] for poly in polys]
        ids.append(rid)
        geometries.append(parsed)
        geometry_types.append(gtype)
    return RegionLattice(ids, geometries, geometry_types, id_property=id_property)


def emit_lattice(lattice: RegionLattice) -> str:
    """Serialize a lattice back to a GeoJSON FeatureCollection."""
    features = []
    for pos, rid in enumerate(lattice.region_ids):
        features.append(
            {
                "type": "Feature",
                "properties": {lattice.id_property: rid},
                "geometry": lattice.geometry_as_geojson(pos),
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": features})


# --- facility points ----------------------------------------------------------


@dataclass
class PointSet:
    """Facility points in file order."""

    point_ids: list[str]
    lons: np.ndarray
    lats: np.ndarray

    def __post_init__(self) -> None:
        seen = set()
        for pid in self.point_ids:
            if pid in seen:
                raise DuplicatePointId(f"duplicate point id {pid!r}")
            seen.add(pid)

    @property
    def n(self) -> int:
        return len(self.point_ids)


def parse_points(data: bytes | str) -> PointSet:
    """Parse a points CSV with (at least) point_id, lon, lat columns."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows:
        raise MalformedInput("points CSV is empty")
    header = rows[0]
    try:
        id_col = header.index("point_id")
        lon_col = header.index("lon")
        lat_col = header.index("lat")
    except ValueError:
        raise MalformedInput("points CSV needs point_id, lon, lat columns") from None

    ids: list[str] = []
    lons: list[float] = []
    lats: list[float] = []
    for rno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        pid = row[id_col]
        lon = parse_cell(row[lon_col], f"row {rno}, column lon")
        lat = parse_cell(row[lat_col], f"row {rno}, column lat")
        if not -180.0 <= lon <= 180.0 or not -90.0 <= lat <= 90.0:
            raise CoordinateOutOfRange(f"point {pid!r}: ({lon}, {lat})")
        ids.append(pid)
        lons.append(lon)
        lats.append(lat)
    return PointSet(ids, np.asarray(lons), np.asarray(lats))


# --- containment --------------------------------------------------------------


def _on_segment(px: float, py: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= px <= max(x1, x2) and min(y1, y2) <= py <= max(y1, y2)


def point_in_polygon(lon: float, lat: float, polygon: Polygon) -> bool:
    """Even-odd ray-casting containment for one polygon (outer ring + holes).

    Points exactly on any ring edge or vertex count as inside. The even-odd
    rule makes holes work without ring-orientation bookkeeping: a point
    inside a hole crosses an even number of edges and lands outside.
    """
    inside = False
    for ring in polygon:
        xs = ring[:, 0]
        ys = ring[:, 1]
        for t in range(len(ring) - 1):
            x1, y1 = xs[t], ys[t]
            x2, y2 = xs[t + 1], ys[t + 1]
            if _on_segment(lon, lat, x1, y1, x2, y2):
                return True
            if (y1 > lat) != (y2 > lat):
                x_hit = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
                if lon < x_hit:
                    inside = not inside
    return inside


def region_contains(lattice: RegionLattice, pos: int, lon: float, lat: float) -> bool:
    return any(point_in_polygon(lon, lat, poly) for poly in lattice.geometries[pos])


# --- spatial join --------------------------------------------------------------

UNASSIGNED = -1


@dataclass
class JoinAssignment:
    """Point-to-region assignment; region index -1 means unassigned."""

    point_ids: list[str]
    region_index: np.ndarray
    region_ids: list[str]

    def region_id_for(self, pos: int) -> str | None:
        idx = int(self.region_index[pos])
        return None if idx == UNASSIGNED else self.region_ids[idx]

    @property
    def n_unassigned(self) -> int:
        return int(np.sum(self.region_index == UNASSIGNED))


def spatial_join(
    points: PointSet, lattice: RegionLattice, use_prefilter: bool = True
) -> JoinAssignment:
    """Assign each point to the first containing region in canonical order.

    The bounding-box prefilter only prunes candidates; assignments are
    identical with it disabled (kept as a switch so tests can prove that).
    """
    boxes = lattice.bounding_boxes()
    assigned = np.full(points.n, UNASSIGNED, dtype=np.int64)
    for p in range(points.n):
        lon = float(points.lons[p])
        lat = float(points.lats[p])
        if use_prefilter:
            hit = (
                (boxes[:, 0] <= lon)
                & (lon <= boxes[:, 2])
                & (boxes[:, 1] <= lat)
                & (lat <= boxes[:, 3])
            )
            candidates = np.nonzero(hit)[0]
        else:
            candidates = range(lattice.n)
        for pos in candidates:
            if region_contains(lattice, int(pos), lon, lat):
                assigned[p] = pos
                break
    return JoinAssignment(list(points.point_ids), assigned, list(lattice.region_ids))
