"""Declarative end-to-end runs: ingest, weights, impute, analyze, emit.

A run is one-shot and fully determined by (inputs, config, seed): every
artifact byte is reproducible, and the manifest records a config hash that
changes iff any config field or input file changes. Partial outputs are
removed when a run fails.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .attributes import (
    AttributeTable,
    broadcast_attributes,
    parse_attributes,
    parse_attributes_standalone,
    parse_region_key_map,
)
from .errors import ConfigError, EngineError, InputError, MissingFeature, UnknownRegion
from .impute import SWEEP_POLICY, impute_missing
from .lattice import (
    UNASSIGNED,
    JoinAssignment,
    PointSet,
    RegionLattice,
    parse_lattice,
    parse_points,
    spatial_join,
)
from .moran import (
    ClusterClass,
    LisaResult,
    MoranResult,
    bivariate_local_moran,
    global_moran_inference,
    local_moran,
)
from .scoring import composite_score, parse_score_config
from .textio import format_number, format_optional
from .weights import build_contiguity, row_standardize

KIND_GLOBAL = "GLOBAL"
KIND_LISA = "LISA"
KIND_BILISA = "BILISA"

_CLASS_BY_CODE = {cls.code: cls for cls in ClusterClass}


# --- configuration -------------------------------------------------------------


@dataclass
class AttributeSource:
    path: Path
    broadcast: Path | None = None
    missing_sentinels: tuple[float, ...] = ()


@dataclass
class AnalysisSpec:
    kind: str
    name: str
    features: tuple[str, ...]


@dataclass
class ScoringSpec:
    config_path: Path
    subset_analysis: str
    subset_class: ClusterClass
    report_features: tuple[str, ...]
    top_k: int | None = None


@dataclass
class RunConfig:
    lattice: Path
    attributes: list[AttributeSource]
    points: Path | None
    contiguity: str
    snap_tolerance: float
    permutations: int
    seed: int
    alpha: float
    workers: int | None
    analyses: list[AnalysisSpec]
    scoring: ScoringSpec | None
    output: Path
    region_id_property: str = "region_id"
    raw: dict = field(default_factory=dict, repr=False)


def load_run_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML run configuration.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent

    def respath(value) -> Path:
        p = Path(str(value))
        return p if p.is_absolute() else base / p

    try:
        lattice = respath(doc["lattice"])
        analyses_doc = doc["analyses"]
        output = respath(doc.get("output", "out"))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc}") from None

    sources: list[AttributeSource] = []
    for entry in doc.get("attributes", []):
        if isinstance(entry, str):
            entry = {"path": entry}
        sentinels = tuple(float(v) for v in entry.get("missing_sentinels", []))
        sources.append(
            AttributeSource(
                respath(entry["path"]),
                respath(entry["broadcast"]) if entry.get("broadcast") else None,
                sentinels,
            )
        )
    if not sources:
        raise ConfigError(f"{path}: at least one attributes entry is required")

    analyses: list[AnalysisSpec] = []
    # artifact names are kind-prefixed, so GLOBAL may reuse a LISA name;
    # LISA and BILISA share a namespace because scoring references them
    global_names: set[str] = set()
    local_names: set[str] = set()
    if not isinstance(analyses_doc, list) or not analyses_doc:
        raise ConfigError(f"{path}: analyses must be a non-empty list")
    for spec in analyses_doc:
        kind = str(spec.get("kind", "")).upper()
        if kind in (KIND_GLOBAL, KIND_LISA):
            feature = spec.get("feature")
            if not feature:
                raise ConfigError(f"{path}: {kind} analysis needs a feature")
            features = (str(feature),)
            name = str(spec.get("name", feature))
        elif kind == KIND_BILISA:
            x, y = spec.get("x"), spec.get("y")
            if not x or not y:
                raise ConfigError(f"{path}: BILISA analysis needs exactly x and y features")
            features = (str(x), str(y))
            name = str(spec.get("name", f"{x}__{y}"))
        else:
            raise ConfigError(f"{path}: unknown analysis kind {spec.get('kind')!r}")
        pool = global_names if kind == KIND_GLOBAL else local_names
        if name in pool:
            raise ConfigError(f"{path}: duplicate analysis name {name!r}")
        pool.add(name)
        analyses.append(AnalysisSpec(kind, name, features))
    names = local_names

    scoring = None
    if doc.get("scoring"):
        sdoc = doc["scoring"]
        subset = str(sdoc.get("subset", ""))
        if ":" in subset:
            subset_name, code = subset.rsplit(":", 1)
        else:
            subset_name, code = subset, "LL"
        if code not in _CLASS_BY_CODE:
            raise ConfigError(f"{path}: unknown cluster code {code!r} in scoring subset")
        if subset_name not in names:
            raise ConfigError(f"{path}: scoring subset references unknown analysis {subset_name!r}")
        try:
            score_path = respath(sdoc["config"])
        except KeyError:
            raise ConfigError(f"{path}: scoring needs a config path") from None
        scoring = ScoringSpec(
            score_path,
            subset_name,
            _CLASS_BY_CODE[code],
            tuple(str(f) for f in sdoc.get("report_features", [])),
            int(sdoc["top_k"]) if sdoc.get("top_k") else None,
        )

    return RunConfig(
        lattice=lattice,
        attributes=sources,
        points=respath(doc["points"]) if doc.get("points") else None,
        contiguity=str(doc.get("contiguity", "queen")).lower(),
        snap_tolerance=float(doc.get("snap_tolerance", 1e-7)),
        permutations=int(doc.get("permutations", 999)),
        seed=int(doc.get("seed", 0)),
        alpha=float(doc.get("alpha", 0.05)),
        workers=int(doc["workers"]) if doc.get("workers") else None,
        analyses=analyses,
        scoring=scoring,
        output=output,
        region_id_property=str(doc.get("region_id_property", "region_id")),
        raw=doc,
    )


# --- facility tallies -----------------------------------------------------------


@dataclass
class TallyTable:
    """Facility counts per cluster class, plus the unassigned remainder."""

    counts: dict[ClusterClass, int]
    unassigned: int
    total: int

    @property
    def total_assigned(self) -> int:
        return sum(self.counts.values())

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("cluster,count,pct\n")
        for cls in ClusterClass:
            out.write(f"{cls.code},{self.counts[cls]},{_pct(self.counts[cls], self.total)}\n")
        out.write(f"UNASSIGNED,{self.unassigned},{_pct(self.unassigned, self.total)}\n")
        out.write(f"TOTAL,{self.total},{_pct(self.total, self.total)}\n")
        return out.getvalue()


def _pct(count: int, total: int) -> str:
    return format(100.0 * count / total, ".1f") if total else "0.0"


def tally_points_by_class(assignment: JoinAssignment, lisa: LisaResult) -> TallyTable:
    """Count each assigned facility once under its region's cluster class."""
    if len(assignment.region_ids) != lisa.n:
        raise UnknownRegion(
            f"assignment universe ({len(assignment.region_ids)} regions) does not "
            f"match the analyzed lattice ({lisa.n} regions)"
        )
    counts = {cls: 0 for cls in ClusterClass}
    unassigned = 0
    for idx in assignment.region_index:
        if idx == UNASSIGNED:
            unassigned += 1
        else:
            counts[lisa.clusters[int(idx)]] += 1
    return TallyTable(counts, unassigned, len(assignment.point_ids))


# --- artifact emission -----------------------------------------------------------


def emit_geojson(lattice: RegionLattice, lisa: LisaResult) -> str:
    """Input geometry passed through with local_I / pseudo_p / cluster added."""
    features = []
    for pos, rid in enumerate(lattice.region_ids):
        local_i = float(lisa.local_i[pos])
        pseudo_p = float(lisa.pseudo_p[pos])
        features.append(
            {
                "type": "Feature",
                "properties": {
                    lattice.id_property: rid,
                    "local_I": None if math.isnan(local_i) else local_i,
                    "pseudo_p": None if math.isnan(pseudo_p) else pseudo_p,
                    "cluster": lisa.clusters[pos].code,
                },
                "geometry": lattice.geometry_as_geojson(pos),
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": features})


def global_summary_csv(name: str, feature: str, result: MoranResult) -> str:
    out = io.StringIO()
    out.write("analysis,feature,I,E_I,z_sim,pseudo_p,permutations,seed,n_eff\n")
    out.write(
        f"{name},{feature},{format_number(result.statistic)},{format_number(result.expected)},"
        f"{format_optional(result.z_sim)},{format_number(result.pseudo_p)},"
        f"{result.permutations},{result.seed},{result.n_eff}\n"
    )
    return out.getvalue()


def score_table_csv(
    region_ids: list[str],
    scores: np.ndarray,
    ranks: np.ndarray,
    report_values: dict[str, np.ndarray],
    facility_counts: np.ndarray,
    cluster_label: str,
) -> str:
    """Ranked score table: region, score, report features, facilities, label.

    The leading comment flags that weights are configuration, not values
    recovered from any published ranking.
    """
    out = io.StringIO()
    out.write("# composite weights come from the score config; defaults are non-canonical\n")
    writer = csv.writer(out, lineterminator="\n")
    names = list(report_values)
    writer.writerow(["region_id", "score"] + names + ["facility_count", "cold_spot_cluster"])
    order = np.argsort(ranks)
    for i in order:
        writer.writerow(
            [region_ids[i], format_number(float(scores[i]))]
            + [format_number(float(report_values[n][i])) for n in names]
            + [int(facility_counts[i]), cluster_label]
        )
    return out.getvalue()


# --- the run itself ---------------------------------------------------------------


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None


def _with_context(exc: EngineError, context: str) -> EngineError:
    return type(exc)(f"{context}: {exc}")


def _ingest_attributes(config: RunConfig, lattice: RegionLattice) -> AttributeTable:
    table = AttributeTable(list(lattice.region_ids), {})
    for source in config.attributes:
        text = _read_bytes(source.path)
        try:
            if source.broadcast is not None:
                coarse = parse_attributes_standalone(text, source.missing_sentinels)
                mapping = parse_region_key_map(_read_bytes(source.broadcast))
                part = broadcast_attributes(list(lattice.region_ids), mapping, coarse)
            else:
                part = parse_attributes(text, list(lattice.region_ids), source.missing_sentinels)
            table = table.merge(part)
        except EngineError as exc:
            raise _with_context(exc, str(source.path)) from None
    return table


def _needed_features(config: RunConfig, score_config) -> list[str]:
    needed: list[str] = []
    for analysis in config.analyses:
        needed.extend(analysis.features)
    if config.scoring is not None:
        needed.extend(score_config.features)
        needed.extend(config.scoring.report_features)
    seen: set[str] = set()
    ordered = []
    for name in needed:
        if name not in seen:
            seen.add(name)
            ordered.append(name)
    return ordered


def _config_hash(config: RunConfig) -> tuple[str, dict[str, str]]:
    inputs: dict[str, str] = {}
    paths = [config.lattice]
    for source in config.attributes:
        paths.append(source.path)
        if source.broadcast is not None:
            paths.append(source.broadcast)
    if config.points is not None:
        paths.append(config.points)
    if config.scoring is not None:
        paths.append(config.scoring.config_path)
    for p in paths:
        inputs[p.name] = hashlib.sha256(_read_bytes(p)).hexdigest()
    canon = json.dumps(
        {"config": config.raw, "inputs": inputs}, sort_keys=True, default=str
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest(), inputs


def run(config: RunConfig) -> list[Path]:
    """Execute every configured analysis and write the artifact set.

    Returns the written paths. On failure every partial output is removed
    and the original error propagates.
    """
    lattice = parse_lattice(_read_bytes(config.lattice), config.region_id_property)
    score_config = None
    if config.scoring is not None:
        score_config = parse_score_config(_read_bytes(config.scoring.config_path))
    table = _ingest_attributes(config, lattice)
    points: PointSet | None = None
    if config.points is not None:
        points = parse_points(_read_bytes(config.points))

    w = row_standardize(build_contiguity(lattice, config.contiguity, config.snap_tolerance))

    needed = _needed_features(config, score_config)
    for name in needed:
        if name not in table.features:
            raise MissingFeature(f"configured feature {name!r} is absent after ingestion")

    audit_rows: list[tuple[str, str, int, float, int]] = []
    for name in needed:
        values = table.values(name)
        if np.isnan(values).any():
            try:
                filled, report = impute_missing(values, w)
            except EngineError as exc:
                raise _with_context(exc, f"feature {name!r}") from None
            table = table.with_feature(name, filled)
            for cell in report.cells:
                audit_rows.append(
                    (name, lattice.region_ids[cell.region], cell.sweep, cell.value,
                     cell.neighbors_used)
                )

    assignment = spatial_join(points, lattice) if points is not None else None

    config_hash, input_hashes = _config_hash(config)
    outdir = config.output
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = outdir / name
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)

    try:
        lisa_by_name: dict[str, LisaResult] = {}
        for analysis in config.analyses:
            if analysis.kind == KIND_GLOBAL:
                result = global_moran_inference(
                    table.require_complete(analysis.features[0]), w,
                    permutations=config.permutations, seed=config.seed,
                    workers=config.workers,
                )
                emit(f"global_{analysis.name}.csv",
                     global_summary_csv(analysis.name, analysis.features[0], result))
                continue
            if analysis.kind == KIND_LISA:
                lisa = local_moran(
                    table.require_complete(analysis.features[0]), w,
                    permutations=config.permutations, seed=config.seed,
                    alpha=config.alpha, workers=config.workers,
                )
                prefix = "lisa"
            else:
                lisa = bivariate_local_moran(
                    table.require_complete(analysis.features[0]),
                    table.require_complete(analysis.features[1]),
                    w, permutations=config.permutations, seed=config.seed,
                    alpha=config.alpha, workers=config.workers,
                )
                prefix = "bilisa"
            lisa_by_name[analysis.name] = lisa
            emit(f"{prefix}_{analysis.name}.csv", lisa.to_csv(lattice.region_ids))
            emit(f"clusters_{analysis.name}.geojson", emit_geojson(lattice, lisa))
            if assignment is not None:
                emit(f"tally_{analysis.name}.csv",
                     tally_points_by_class(assignment, lisa).to_csv())

        if config.scoring is not None:
            spec = config.scoring
            lisa = lisa_by_name.get(spec.subset_analysis)
            if lisa is None:
                raise ConfigError(
                    f"scoring subset {spec.subset_analysis!r} is not a LISA/BILISA analysis"
                )
            mask = np.array([cls is spec.subset_class for cls in lisa.clusters])
            report = composite_score(table, score_config, mask)
            picked = np.nonzero(mask)[0]
            if assignment is not None:
                per_region = np.bincount(
                    assignment.region_index[assignment.region_index != UNASSIGNED],
                    minlength=lattice.n,
                )
            else:
                per_region = np.zeros(lattice.n, dtype=np.int64)
            report_values = {
                name: table.require_complete(name)[picked] for name in spec.report_features
            }
            emit(
                f"score_{spec.subset_analysis}.csv",
                score_table_csv(
                    report.region_ids, report.scores, report.ranks, report_values,
                    per_region[picked], f"{spec.subset_analysis}:{spec.subset_class.code}",
                ),
            )

        audit = io.StringIO()
        audit.write(f"# policy: {SWEEP_POLICY}\n")
        audit.write("feature,region_id,sweep,value,neighbors_used\n")
        for name, rid, sweep, value, used in audit_rows:
            audit.write(f"{name},{rid},{sweep},{format_number(value)},{used}\n")
        emit("imputation_audit.csv", audit.getvalue())

        manifest = {
            "engine": "esdakit",
            "version": __version__,
            "seed": config.seed,
            "permutations": config.permutations,
            "config_hash": config_hash,
            "inputs": input_hashes,
        }
        emit("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written
