"""Calendar-quarter labels (``YYYY-Qn``) and ranges."""

from __future__ import annotations

import re

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[-/ _]?\s*[Qq]([1-4])\s*$")


def parse_quarter(label: str) -> int:
    """Return an ordinal (``year * 4 + quarter - 1``) for a quarter label.

    Accepts ``2008-Q4``, ``2008Q4``, ``2008/Q4`` and ``2008 Q4``.
    """
    m = _QUARTER_RE.match(str(label))
    if not m:
        raise ValueError(f"not a calendar quarter: {label!r}")
    return int(m.group(1)) * 4 + int(m.group(2)) - 1


def format_quarter(ordinal: int) -> str:
    year, q = divmod(ordinal, 4)
    return f"{year}-Q{q + 1}"


def canonical_quarter(label: str) -> str:
    return format_quarter(parse_quarter(label))


def quarter_range(start: str, end: str) -> tuple[str, ...]:
    """Inclusive list of quarter labels from ``start`` to ``end``."""
    a, b = parse_quarter(start), parse_quarter(end)
    if b < a:
        raise ValueError(f"empty quarter range {start}..{end}")
    return tuple(format_quarter(o) for o in range(a, b + 1))


def compact(label: str) -> str:
    """``2008-Q4`` -> ``2008Q4`` (used in file names)."""
    return canonical_quarter(label).replace("-", "")
