"""Exploratory spatial data analysis engine for polygon lattices.

Pipeline: parse a region lattice and attribute tables, build contiguity
weights, impute missing values from neighbors, run Global Moran / LISA /
BI-LISA permutation inference, tally facilities per cluster, and rank
regions by a weighted min-max composite vulnerability score.
"""

__version__ = "0.1.0"

from .attributes import (
    AttributeTable,
    broadcast_attributes,
    emit_attributes,
    parse_attributes,
    parse_attributes_standalone,
)
from .impute import ImputationReport, impute_missing
from .lattice import (
    UNASSIGNED,
    JoinAssignment,
    PointSet,
    RegionLattice,
    parse_lattice,
    parse_points,
    point_in_polygon,
    spatial_join,
)
from .moran import (
    ClusterClass,
    LisaResult,
    MoranResult,
    bivariate_local_moran,
    classify,
    global_moran,
    global_moran_inference,
    local_moran,
    spatial_lag,
    standardize,
)
from .pipeline import (
    RunConfig,
    TallyTable,
    emit_geojson,
    load_run_config,
    run,
    tally_points_by_class,
)
from .scoring import (
    CompositeScoreConfig,
    ScoreEntry,
    ScoreReport,
    composite_score,
    describe,
    minmax_normalize,
    parse_score_config,
    rank_regions,
)
from .weights import (
    SpatialWeights,
    build_contiguity,
    from_edge_list,
    row_standardize,
    weights_from_csv,
    weights_to_csv,
)

__all__ = [
    "AttributeTable",
    "ClusterClass",
    "CompositeScoreConfig",
    "ImputationReport",
    "JoinAssignment",
    "LisaResult",
    "MoranResult",
    "PointSet",
    "RegionLattice",
    "RunConfig",
    "ScoreEntry",
    "ScoreReport",
    "SpatialWeights",
    "TallyTable",
    "UNASSIGNED",
    "bivariate_local_moran",
    "broadcast_attributes",
    "build_contiguity",
    "classify",
    "composite_score",
    "describe",
    "emit_attributes",
    "emit_geojson",
    "from_edge_list",
    "global_moran",
    "global_moran_inference",
    "impute_missing",
    "load_run_config",
    "local_moran",
    "minmax_normalize",
    "parse_attributes",
    "parse_attributes_standalone",
    "parse_lattice",
    "parse_points",
    "parse_score_config",
    "point_in_polygon",
    "rank_regions",
    "row_standardize",
    "run",
    "spatial_join",
    "spatial_lag",
    "standardize",
    "tally_points_by_class",
    "weights_from_csv",
    "weights_to_csv",
]
