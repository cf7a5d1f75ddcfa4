"""Synthetic lattices and fixture files for tests and demos.

Everything here is deterministic: grid geometry is exact unit squares and
random content always flows from an explicit seed. ``python -m
esdakit.synthetic <dir>`` writes the bundled demo fixture used by the
README walkthrough and the end-to-end tests.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .lattice import RegionLattice
from .scoring import (
    HIGHER_IS_WORSE,
    LOWER_IS_WORSE,
    CompositeScoreConfig,
    ScoreEntry,
    emit_score_config,
)

GRID_ID_PATTERN = "r{row:03d}c{col:03d}"


def grid_region_ids(rows: int, cols: int) -> list[str]:
    return [GRID_ID_PATTERN.format(row=r, col=c) for r in range(rows) for c in range(cols)]


def grid_lattice(rows: int, cols: int) -> RegionLattice:
    """rows x cols unit squares in row-major order, ids zero-padded so that
    lexicographic id order matches canonical index order."""
    ids = grid_region_ids(rows, cols)
    geometries = []
    for r in range(rows):
        for c in range(cols):
            ring = np.array(
                [
                    [c, r],
                    [c + 1, r],
                    [c + 1, r + 1],
                    [c, r + 1],
                    [c, r],
                ],
                dtype=np.float64,
            )
            geometries.append([[ring]])
    return RegionLattice(ids, geometries, ["Polygon"] * len(ids))


def grid_edges(rows: int, cols: int, rule: str = "queen") -> np.ndarray:
    """Vectorized undirected edge list of a grid graph (rook or queen)."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    pairs = [
        np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),
        np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),
    ]
    if rule.lower() == "queen":
        pairs.append(np.stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()], axis=1))
        pairs.append(np.stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()], axis=1))
    return np.concatenate(pairs)


def torus_edges(rows: int, cols: int, rule: str = "queen") -> np.ndarray:
    """Grid edges with wraparound; every region has the same degree."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    right = np.roll(idx, -1, axis=1)
    down = np.roll(idx, -1, axis=0)
    pairs = [
        np.stack([idx.ravel(), right.ravel()], axis=1),
        np.stack([idx.ravel(), down.ravel()], axis=1),
    ]
    if rule.lower() == "queen":
        pairs.append(np.stack([idx.ravel(), np.roll(down, -1, axis=1).ravel()], axis=1))
        pairs.append(np.stack([idx.ravel(), np.roll(down, 1, axis=1).ravel()], axis=1))
    return np.concatenate(pairs)


def checkerboard(rows: int, cols: int) -> np.ndarray:
    """0/1 values alternating over a row-major grid."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    return ((r + c) % 2).astype(np.float64)


def random_points_csv(n: int, seed: int, lon_range=(0.0, 5.0), lat_range=(0.0, 5.0)) -> str:
    rng = np.random.default_rng(seed)
    lons = rng.uniform(*lon_range, size=n)
    lats = rng.uniform(*lat_range, size=n)
    lines = ["point_id,lon,lat"]
    for i in range(n):
        lines.append(f"p{i:04d},{lons[i]:.6f},{lats[i]:.6f}")
    return "\n".join(lines) + "\n"


def write_demo_fixture(directory: str | Path) -> list[Path]:
    """Write the bundled 6x6 demo fixture: lattice, attributes (with gaps),
    a county-level outage table with its broadcast map, facility points,
    a score config, and a ready-to-run engine config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = cols = 6
    ids = grid_region_ids(rows, cols)
    rng = np.random.default_rng(20240901)

    lattice = grid_lattice(rows, cols)
    features = []
    for pos, rid in enumerate(ids):
        features.append(
            {
                "type": "Feature",
                "properties": {"region_id": rid},
                "geometry": lattice.geometry_as_geojson(pos),
            }
        )
    paths = []

    def put(name: str, text: str) -> None:
        path = directory / name
        path.write_text(text, encoding="utf-8", newline="")
        paths.append(path)

    put("lattice.geojson", json.dumps({"type": "FeatureCollection", "features": features}))

    # hazard-style tract features; a smooth west-east gradient plus noise,
    # with a handful of cells left empty to exercise imputation
    r, c = np.divmod(np.arange(rows * cols), cols)
    hurricane = 60.0 + 5.0 * c - 4.0 * r + rng.normal(0.0, 2.0, rows * cols)
    earthquake = 30.0 + 6.0 * r - 2.0 * c + rng.normal(0.0, 2.0, rows * cols)
    tornado_events = rng.integers(0, 9, rows * cols).astype(float)
    missing_at = {7, 22}
    lines = ["region_id,hurricane_risk,earthquake_risk,tornado_events"]
    for i, rid in enumerate(ids):
        hcell = "" if i in missing_at else f"{hurricane[i]:.4f}"
        lines.append(f"{rid},{hcell},{earthquake[i]:.4f},{tornado_events[i]:.0f}")
    put("hazards.csv", "\n".join(lines) + "\n")

    # county-level outage features broadcast onto tracts (2x2 county blocks)
    county_of = [f"county{(r[i] // 3) * 2 + (c[i] // 3)}" for i in range(rows * cols)]
    counties = sorted(set(county_of))
    outages = {cty: 200.0 + 150.0 * k + float(rng.integers(0, 40)) for k, cty in enumerate(counties)}
    lines = ["county_id,total_outages"]
    for cty in counties:
        cell = "" if cty == "county3" else f"{outages[cty]:.0f}"
        lines.append(f"{cty},{cell}")
    put("outages_by_county.csv", "\n".join(lines) + "\n")
    put(
        "tract_to_county.csv",
        "\n".join(["region_id,county_id"] + [f"{rid},{county_of[i]}" for i, rid in enumerate(ids)])
        + "\n",
    )

    put("points.csv", random_points_csv(120, seed=7, lon_range=(-0.5, 6.5), lat_range=(-0.5, 6.5)))

    config = CompositeScoreConfig(
        (
            ScoreEntry("earthquake_risk", 0.45, HIGHER_IS_WORSE),
            ScoreEntry("total_outages", 0.25, HIGHER_IS_WORSE),
            ScoreEntry("hurricane_risk", 0.15, HIGHER_IS_WORSE),
            ScoreEntry("tornado_events", 0.15, LOWER_IS_WORSE),
        )
    )
    put("score_config.csv", emit_score_config(config, comment="demo weights; non-canonical"))

    put(
        "run_config.yaml",
        "\n".join(
            [
                "# demo engine run over the bundled synthetic fixture",
                "lattice: lattice.geojson",
                "attributes:",
                "  - path: hazards.csv",
                "  - path: outages_by_county.csv",
                "    broadcast: tract_to_county.csv",
                "points: points.csv",
                "contiguity: queen",
                "permutations: 999",
                "seed: 42",
                "alpha: 0.05",
                "analyses:",
                "  - kind: GLOBAL",
                "    feature: hurricane_risk",
                "  - kind: LISA",
                "    feature: hurricane_risk",
                "  - kind: BILISA",
                "    name: EPO",
                "    x: earthquake_risk",
                "    y: total_outages",
                "scoring:",
                "  config: score_config.csv",
                "  subset: EPO:LL",
                "  report_features: [tornado_events, total_outages]",
                "output: out",
                "",
            ]
        ),
    )
    return paths


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "fixtures/demo"
    for path in write_demo_fixture(target):
        print(path)
