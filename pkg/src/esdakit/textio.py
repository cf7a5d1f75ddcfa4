"""Shared CSV text conventions.

All CSV emitted by this package is UTF-8, comma-separated, header row,
``.`` decimal point, no thousands separators. Numbers are printed with at
most 6 significant digits using the platform's correctly-rounded
(round-half-even) float formatting; missing values are empty cells.
"""

from __future__ import annotations

import math

from .errors import NonNumericValue


def format_number(x: float) -> str:
    """Render a finite float with up to 6 significant digits."""
    if not math.isfinite(x):
        raise ValueError(f"cannot format non-finite value {x!r}")
    return format(float(x), ".6g")


def format_optional(x: float) -> str:
    """Like :func:`format_number` but NaN renders as an empty cell."""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return format_number(x)


def parse_cell(text: str, where: str) -> float:
    """Parse one non-empty CSV cell into a finite float."""
    try:
        value = float(text)
    except ValueError:
        raise NonNumericValue(f"non-numeric value {text!r} at {where}") from None
    if not math.isfinite(value):
        raise NonNumericValue(f"non-finite value {text!r} at {where}")
    return value
