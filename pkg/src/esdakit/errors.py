"""Exception and warning types shared across the engine.

The CLI maps these onto exit codes: :class:`InputError` exits 2,
:class:`StatError` exits 3, and I/O failures (plain ``OSError``) exit 4.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class InputError(EngineError):
    """Malformed or inconsistent input data or configuration."""


class StatError(EngineError):
    """A statistical precondition is violated."""


# --- lattice / attribute / point ingestion ---------------------------------

class MalformedInput(InputError):
    """Input bytes do not parse as the expected format."""


class MissingRegionId(InputError):
    """A feature lacks the configured region-id property."""


class DuplicateRegionId(InputError):
    """The same region id appears more than once."""


class NonArealGeometry(InputError):
    """A feature's geometry is not Polygon or MultiPolygon."""


class UnknownRegion(InputError):
    """A region id that is not part of the lattice universe."""


class NonNumericValue(InputError):
    """A non-empty attribute cell that does not parse as a finite number."""


class CoordinateOutOfRange(InputError):
    """A longitude outside [-180, 180] or latitude outside [-90, 90]."""


class DuplicatePointId(InputError):
    """The same point id appears more than once."""


# --- spatial weights / imputation -------------------------------------------

class SelfEdge(InputError):
    """An edge list entry joining a region to itself."""


class EdgeOutOfRange(InputError):
    """An edge list index outside [0, n)."""


class Unimputable(InputError):
    """A missing region can never acquire a value from its neighbors."""


# --- autocorrelation ---------------------------------------------------------

class ZeroVariance(StatError):
    """All analyzed values are equal; standardization is undefined."""


class TooFewRegions(StatError):
    """Fewer than three usable (non-island) regions."""


class MissingValues(StatError):
    """Missing values reached a statistic that requires complete data."""


class EnumerationTooLarge(StatError):
    """Exhaustive enumeration would exceed the arrangement budget."""


# --- composite scoring -------------------------------------------------------

class MissingFeature(InputError):
    """A configured feature is absent or incomplete."""


class WeightSumViolation(InputError):
    """Composite score weights do not sum to one."""


class EmptySubset(InputError):
    """The region subset selected for scoring is empty."""


class ConfigError(InputError):
    """A run or score configuration file is invalid."""


class DegenerateFeatureWarning(UserWarning):
    """A feature is constant over the normalization subset (min == max)."""
