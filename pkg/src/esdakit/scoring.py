"""Weighted min-max composite scoring and descriptive statistics.

The composite score of a region is sum_i omega_i * norm_i, where norm_i
rescales feature i linearly onto [0, 1] over the scored subset (so the
min/max are subset-relative by design) and the omega_i are nonnegative
weights summing to one. Features where lower raw values mean more
vulnerability are flipped (1 - norm) before weighting. Because min-max
normalization is invariant to positive affine transforms of a raw
feature, so are all scores and ranks.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateFeatureWarning,
    EmptySubset,
    MissingValues,
    WeightSumViolation,
)
from .attributes import AttributeTable
from .textio import format_number

HIGHER_IS_WORSE = "higher_is_worse"
LOWER_IS_WORSE = "lower_is_worse"
WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class ScoreEntry:
    feature: str
    weight: float
    direction: str

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise ConfigError(f"negative weight for feature {self.feature!r}")
        if self.direction not in (HIGHER_IS_WORSE, LOWER_IS_WORSE):
            raise ConfigError(f"bad direction {self.direction!r} for {self.feature!r}")


@dataclass(frozen=True)
class CompositeScoreConfig:
    entries: tuple[ScoreEntry, ...]

    def __post_init__(self) -> None:
        names = [e.feature for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate feature in score config")
        total = sum(e.weight for e in self.entries)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise WeightSumViolation(f"weights sum to {total!r}, expected 1")

    @property
    def features(self) -> list[str]:
        return [e.feature for e in self.entries]


@dataclass
class ScoreReport:
    """Scores and ranks over the scored subset, with per-feature contributions."""

    region_ids: list[str]
    scores: np.ndarray
    ranks: np.ndarray
    contributions: dict[str, np.ndarray]
    degenerate_features: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.region_ids)


def minmax_normalize(values) -> np.ndarray:
    """Linear rescale onto [0, 1]; a constant feature maps to all zeros.

    Degeneracy (max == min) emits a :class:`DegenerateFeatureWarning`
    rather than erroring, so one constant column cannot sink a run.
    """
    x = np.asarray(values, dtype=np.float64)
    if np.isnan(x).any():
        raise MissingValues("minmax_normalize requires complete values")
    lo = float(x.min())
    hi = float(x.max())
    if hi == lo:
        warnings.warn("constant feature normalizes to all zeros", DegenerateFeatureWarning,
                      stacklevel=2)
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def composite_score(
    table: AttributeTable, config: CompositeScoreConfig, subset: np.ndarray
) -> ScoreReport:
    """Score the masked regions; normalization is subset-relative.

    Degenerate features contribute zero regardless of direction. Ranks run
    from 1 (least vulnerable) with score ties broken by ascending region id.
    """
    subset = np.asarray(subset, dtype=bool)
    if subset.shape != (table.n,):
        raise EmptySubset(f"subset mask must cover all {table.n} regions")
    picked = np.nonzero(subset)[0]
    if picked.size == 0:
        raise EmptySubset("no regions selected for scoring")

    region_ids = [table.region_ids[i] for i in picked]
    scores = np.zeros(picked.size)
    contributions: dict[str, np.ndarray] = {}
    degenerate: list[str] = []
    for entry in config.entries:
        raw = table.require_complete(entry.feature)[picked]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            norm = minmax_normalize(raw)
        if any(issubclass(c.category, DegenerateFeatureWarning) for c in caught):
            degenerate.append(entry.feature)
            contrib = np.zeros(picked.size)
        else:
            if entry.direction == LOWER_IS_WORSE:
                norm = 1.0 - norm
            contrib = entry.weight * norm
        contributions[entry.feature] = contrib
        scores = scores + contrib

    for name in degenerate:
        warnings.warn(f"feature {name!r} is constant over the subset; it contributes 0",
                      DegenerateFeatureWarning, stacklevel=2)

    order = sorted(range(picked.size), key=lambda i: (scores[i], region_ids[i]))
    ranks = np.empty(picked.size, dtype=np.int64)
    for rank, i in enumerate(order, start=1):
        ranks[i] = rank
    return ScoreReport(region_ids, scores, ranks, contributions, degenerate)


def rank_regions(report: ScoreReport, k: int) -> list[tuple[int, str, float]]:
    """Top-k (rank, region_id, score) rows, ascending by score."""
    if k < 1:
        raise ConfigError("k must be at least 1")
    if k > report.n:
        warnings.warn(f"k={k} exceeds {report.n} scored regions; truncating", stacklevel=2)
        k = report.n
    by_rank = sorted(zip(report.ranks, report.region_ids, report.scores))
    return [(int(r), rid, float(s)) for r, rid, s in by_rank[:k]]


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    std: float
    minimum: float
    maximum: float
    q1: float
    median: float
    q3: float


def describe(values) -> DescriptiveStats:
    """Mean, population std, extrema, and linearly interpolated quartiles."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise MissingValues("describe needs at least one value")
    if np.isnan(x).any():
        raise MissingValues("describe requires complete values")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return DescriptiveStats(
        float(x.mean()), float(x.std()), float(x.min()), float(x.max()),
        float(q1), float(med), float(q3),
    )


# --- score config file --------------------------------------------------------


def parse_score_config(data: bytes | str) -> CompositeScoreConfig:
    """Parse `feature,weight,direction` rows plus a `weights_sum=` checksum line.

    `#` comment lines and a literal `feature,weight,direction` header are
    tolerated. The checksum must match the actual sum within 1e-9.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    entries: list[ScoreEntry] = []
    checksum: float | None = None
    for lno, line in enumerate(data.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line == "feature,weight,direction":
            continue
        if line.startswith("weights_sum="):
            try:
                checksum = float(line.split("=", 1)[1])
            except ValueError:
                raise ConfigError(f"bad checksum line {line!r}") from None
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ConfigError(f"line {lno}: expected feature,weight,direction")
        name, weight_text, direction = (p.strip() for p in parts)
        try:
            weight = float(weight_text)
        except ValueError:
            raise ConfigError(f"line {lno}: bad weight {weight_text!r}") from None
        entries.append(ScoreEntry(name, weight, direction.lower()))
    if checksum is None:
        raise ConfigError("score config lacks the weights_sum= checksum line")
    total = sum(e.weight for e in entries)
    if abs(total - checksum) > WEIGHT_TOL:
        raise WeightSumViolation(f"checksum {checksum} does not match actual sum {total}")
    return CompositeScoreConfig(tuple(entries))


def emit_score_config(config: CompositeScoreConfig, comment: str | None = None) -> str:
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    out.write("feature,weight,direction\n")
    for entry in config.entries:
        out.write(f"{entry.feature},{format(entry.weight, '.17g')},{entry.direction}\n")
    out.write(f"weights_sum={format(sum(e.weight for e in config.entries), '.17g')}\n")
    return out.getvalue()


def default_score_config(
    hazard_features,
    outage_features,
    focus_feature: str,
    physical_features=(),
    social_features=(),
    lower_is_worse: tuple[str, ...] = ("community_resilience",),
) -> CompositeScoreConfig:
    """Non-canonical default weighting (the config file is the source of truth).

    Hazard and outage features share 0.70 of the weight, with an extra
    0.25 concentrated on the feature that generated the scored cold-spots;
    physical features share 0.15 and social features share 0.15. Features
    named in ``lower_is_worse`` (community resilience by default) flip
    direction.
    """
    matched = list(hazard_features) + list(outage_features)
    if focus_feature not in matched:
        raise ConfigError(f"focus feature {focus_feature!r} is not a hazard/outage feature")
    entries: list[ScoreEntry] = []
    base = (0.70 - 0.25) / len(matched)
    for name in matched:
        weight = base + (0.25 if name == focus_feature else 0.0)
        entries.append(ScoreEntry(name, weight, _direction_for(name, lower_is_worse)))
    for group, share in ((list(physical_features), 0.15), (list(social_features), 0.15)):
        if not group:
            # fold an absent group's share back onto the matched features
            for i, entry in enumerate(entries[: len(matched)]):
                entries[i] = ScoreEntry(
                    entry.feature, entry.weight + share / len(matched), entry.direction
                )
            continue
        for name in group:
            entries.append(ScoreEntry(name, share / len(group), _direction_for(name, lower_is_worse)))
    total = sum(e.weight for e in entries)
    entries = [ScoreEntry(e.feature, e.weight / total, e.direction) for e in entries]
    return CompositeScoreConfig(tuple(entries))


def _direction_for(name: str, lower_is_worse: tuple[str, ...]) -> str:
    return LOWER_IS_WORSE if name in lower_is_worse else HIGHER_IS_WORSE


def score_report_csv(report: ScoreReport) -> str:
    """Module-level score CSV: score, rank and per-feature contributions."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    names = list(report.contributions)
    writer.writerow(["region_id", "score", "rank"] + [f"contrib_{n}" for n in names])
    for i in range(report.n):
        writer.writerow(
            [report.region_ids[i], format_number(float(report.scores[i])), int(report.ranks[i])]
            + [format_number(float(report.contributions[n][i])) for n in names]
        )
    return out.getvalue()
