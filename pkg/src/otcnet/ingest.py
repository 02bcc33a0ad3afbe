"""Parsing of quarterly top-25 derivative tables into a validated panel.

The input is a CSV with one row per (quarter, institution) and the 17 columns
listed in :data:`COLUMNS`.  Institution names are reconciled through an
:class:`AliasTable` before the institutions x quarters :class:`Panel` is built.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .quarters import canonical_quarter, format_quarter, parse_quarter
from .quarters import quarter_range as _quarter_range

logger = logging.getLogger(__name__)

COLUMNS = (
    "quarter",
    "name",
    "rank",
    "state",
    "total_assets",
    "total_derivatives",
    "futures_exch",
    "options_exch",
    "forwards_otc",
    "swaps_otc",
    "options_otc",
    "credit_derivatives_otc",
    "spot_fx",
    "cce",
    "pfe",
    "tce",
    "tce_to_capital",
)
DERIVATIVE_COLUMNS = COLUMNS[6:13]
ETD_COLUMNS = ("futures_exch", "options_exch")
OTC_COLUMNS = ("forwards_otc", "swaps_otc", "options_otc", "credit_derivatives_otc")
REQUIRED_COLUMNS = ("quarter", "name", "total_derivatives")

# reports are in integer millions; summands may be rounded independently
DEFAULT_TOLERANCE = 0.5
TOP_N = 25


class IngestError(ValueError):
    """Input that cannot be turned into a panel."""


class RowError(IngestError):
    def __init__(self, line: int, reason: str, text: str = ""):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason
        self.text = text


class AliasConflictError(IngestError):
    pass


class MergeSafetyError(IngestError):
    def __init__(self, violations: Sequence["MergeViolation"]):
        lines = "; ".join(v.describe() for v in violations)
        super().__init__(f"{len(violations)} merge-safety violation(s): {lines}")
        self.violations = list(violations)


class DuplicateRecordError(IngestError):
    def __init__(self, first: "RawRow", second: "RawRow", canonical: str):
        super().__init__(
            f"duplicate record for {canonical!r} in {first.quarter_label}: "
            f"line {first.line} ({first.name!r}) and line {second.line} ({second.name!r})"
        )
        self.rows = (first, second)


# --------------------------------------------------------------------------
# raw rows


@dataclass(frozen=True)
class RawRow:
    line: int
    quarter_label: str
    name: str
    state: str | None
    rank_reported: int | None
    total_assets: int | None
    total_derivatives: int
    derivatives: tuple[int | None, ...]  # in DERIVATIVE_COLUMNS order
    cce: int | None
    pfe: int | None
    tce: int | None
    tce_to_capital: float | None

    def derivative(self, column: str) -> int | None:
        return self.derivatives[DERIVATIVE_COLUMNS.index(column)]

    def values(self) -> tuple:
        """Everything except the source line, for duplicate detection."""
        return (
            self.quarter_label, self.name, self.state, self.rank_reported,
            self.total_assets, self.total_derivatives, self.derivatives,
            self.cce, self.pfe, self.tce, self.tce_to_capital,
        )


@dataclass(frozen=True)
class RecoveryEntry:
    line: int
    reason: str
    text: str

    def __str__(self) -> str:
        return f"skipped line {self.line}: {self.reason} | {self.text}"


def _currency(raw: str, column: str) -> int | None:
    s = raw.strip().replace(",", "").replace("$", "")
    if s == "" or s.upper() in {"NA", "NAN", "NULL", "-"}:
        return None
    try:
        value = Decimal(s)
    except InvalidOperation:
        raise ValueError(f"{column}: not a number: {raw!r}") from None
    if not value.is_finite():
        raise ValueError(f"{column}: not finite: {raw!r}")
    if value < 0:
        raise ValueError(f"{column}: negative amount {raw!r}")
    return int(value.to_integral_value(rounding=ROUND_HALF_EVEN))


def _percent(raw: str, column: str) -> float | None:
    s = raw.strip().replace(",", "").rstrip("%")
    if s == "" or s.upper() in {"NA", "NAN", "NULL", "-"}:
        return None
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"{column}: not a number: {raw!r}") from None


def _rank(raw: str) -> int | None:
    s = raw.strip()
    if s == "":
        return None
    try:
        r = int(Decimal(s))
    except (InvalidOperation, ValueError):
        raise ValueError(f"rank: not an integer: {raw!r}") from None
    if r < 1:
        raise ValueError(f"rank: must be positive, got {raw!r}")
    return r


def _parse_row(line: int, cells: Mapping[str, str]) -> RawRow:
    quarter = canonical_quarter(cells["quarter"])
    name = " ".join(cells["name"].split())
    if not name:
        raise ValueError("empty institution name")
    total = _currency(cells["total_derivatives"], "total_derivatives")
    if total is None:
        raise ValueError("total_derivatives is missing")
    state = cells.get("state", "").strip().upper() or None
    return RawRow(
        line=line,
        quarter_label=quarter,
        name=name,
        state=state,
        rank_reported=_rank(cells.get("rank", "")),
        total_assets=_currency(cells.get("total_assets", ""), "total_assets"),
        total_derivatives=total,
        derivatives=tuple(_currency(cells.get(c, ""), c) for c in DERIVATIVE_COLUMNS),
        cce=_currency(cells.get("cce", ""), "cce"),
        pfe=_currency(cells.get("pfe", ""), "pfe"),
        tce=_currency(cells.get("tce", ""), "tce"),
        tce_to_capital=_percent(cells.get("tce_to_capital", ""), "tce_to_capital"),
    )


def read_rows(source, tolerant: bool = False) -> tuple[list[RawRow], list[RecoveryEntry]]:
    """Read raw rows from a CSV path or text stream.

    Columns are matched by header name; unknown columns are ignored.  With
    ``tolerant`` set, structurally broken rows (wrong field count, unparsable
    values, empty names) are skipped and reported instead of raising.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8-sig") as fh:
            return read_rows(fh, tolerant=tolerant)

    reader = csv.reader(source)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise IngestError("empty input: header row required") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"schema mismatch: missing column(s) {', '.join(missing)}")

    rows: list[RawRow] = []
    recovered: list[RecoveryEntry] = []
    for cells in reader:
        line = reader.line_num
        if not cells or all(not c.strip() for c in cells):
            continue
        text = ",".join(cells)
        try:
            if len(cells) != len(header):
                raise ValueError(f"expected {len(header)} fields, found {len(cells)}")
            rows.append(_parse_row(line, dict(zip(header, cells))))
        except ValueError as exc:
            if not tolerant:
                raise RowError(line, str(exc), text) from None
            entry = RecoveryEntry(line, str(exc), text)
            logger.warning("%s", entry)
            recovered.append(entry)
    return rows, recovered


# --------------------------------------------------------------------------
# names


def _clean(name: str, suffixes: Sequence[str]) -> str:
    s = " ".join(re.sub(r"[.,]", " ", name.upper()).split())
    stripped = True
    while stripped:
        stripped = False
        for suffix in suffixes:
            if s.endswith(" " + suffix):
                s = s[: -len(suffix) - 1].rstrip()
                stripped = True
    return s


@dataclass(frozen=True)
class AliasTable:
    """Literal name aliases applied after suffix removal.

    Patterns are cleaned the same way names are (upper case, ``.``/``,``
    dropped, whitespace collapsed, suffixes removed), so a rule for
    ``"Mellong Bank, N.A."`` also matches ``"MELLONG BANK"``.
    """

    rules: tuple[tuple[str, str], ...] = ()
    suffix_drops: tuple[str, ...] = ()

    def __post_init__(self):
        suffixes = tuple(sorted({" ".join(s.upper().split()) for s in self.suffix_drops},
                                key=lambda s: (-len(s), s)))
        object.__setattr__(self, "suffix_drops", suffixes)
        mapping: dict[str, str] = {}
        for pattern, canonical in self.rules:
            key = _clean(pattern, suffixes)
            target = _clean(canonical, suffixes)
            if not key or not target:
                raise AliasConflictError(f"empty alias rule {pattern!r} -> {canonical!r}")
            if target != " ".join(canonical.upper().split()):
                raise AliasConflictError(
                    f"canonical name {canonical!r} is not in normal form (expected {target!r})"
                )
            if mapping.get(key, target) != target:
                raise AliasConflictError(
                    f"{pattern!r} maps to both {mapping[key]!r} and {target!r}"
                )
            mapping[key] = target
        for target in set(mapping.values()):
            if mapping.get(target, target) != target:
                raise AliasConflictError(
                    f"canonical name {target!r} is itself rewritten to {mapping[target]!r}"
                )
        object.__setattr__(self, "_mapping", mapping)

    @classmethod
    def from_tsv(cls, source) -> "AliasTable":
        """Two tab-separated columns ``pattern<TAB>canonical``.

        ``#`` starts a comment line.  A row whose pattern is ``@suffix`` adds
        its second column to the suffix drops.
        """
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls.from_tsv(fh)
        rules, suffixes = [], []
        for n, line in enumerate(source, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise IngestError(f"alias table line {n}: expected two tab-separated columns")
            pattern, canonical = parts[0].strip(), parts[1].strip()
            if pattern == "@suffix":
                suffixes.append(canonical)
            else:
                rules.append((pattern, canonical))
        return cls(tuple(rules), tuple(suffixes))

    @classmethod
    def default(cls) -> "AliasTable":
        text = resources.files("otcnet").joinpath("data/aliases.tsv").read_text("utf-8")
        return cls.from_tsv(io.StringIO(text))

    def normalize(self, name: str) -> str:
        cleaned = _clean(name, self.suffix_drops)
        if not cleaned:
            raise IngestError(f"empty institution name {name!r}")
        return self._mapping.get(cleaned, cleaned)


def normalize_name(name: str, aliases: AliasTable) -> str:
    """Canonical institution name, e.g. ``KEYBANK NATIONAL ASSN`` -> ``KEYBANK``."""
    return aliases.normalize(name)


# --------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class MergeViolation:
    quarter_label: str
    canonical: str
    rows: tuple[RawRow, ...]

    def describe(self) -> str:
        srcs = ", ".join(f"line {r.line} {r.name!r}/{r.state or '-'}" for r in self.rows)
        return f"{self.canonical} in {self.quarter_label}: {srcs}"


@dataclass
class MergeReport:
    registry: dict[int, str]
    canonical: list[str]  # per input row
    sources: dict[str, list[tuple[str, str]]]
    violations: list[MergeViolation]

    def lines(self) -> list[str]:
        out = []
        for name, srcs in sorted(self.sources.items()):
            if len(srcs) > 1:
                joined = "; ".join(f"{n} [{s or '-'}]" for n, s in srcs)
                out.append(f"merged {name}: {joined}")
        out.extend(f"violation {v.describe()}" for v in self.violations)
        return out


def _source_key(row: RawRow) -> tuple[str, str]:
    return (" ".join(row.name.upper().split()), row.state or "")


def merge_identities(rows: Sequence[RawRow], aliases: AliasTable,
                     allow_unsafe: bool = False) -> MergeReport:
    """Collapse rows to canonical identities, ignoring the state column.

    Merging two differently named (or differently located) sources is only
    considered safe when they never appear in the same quarter; any such
    co-appearance is a violation and raises :class:`MergeSafetyError`
    unless ``allow_unsafe`` is set.
    """
    canonical = [aliases.normalize(r.name) for r in rows]
    sources: dict[str, set] = defaultdict(set)
    by_quarter: dict[tuple[str, str], list[int]] = defaultdict(list)
    for k, (row, name) in enumerate(zip(rows, canonical)):
        sources[name].add(_source_key(row))
        by_quarter[(row.quarter_label, name)].append(k)

    violations = []
    for (quarter, name), idx in sorted(by_quarter.items(),
                                       key=lambda kv: (parse_quarter(kv[0][0]), kv[0][1])):
        keys = {_source_key(rows[k]) for k in idx}
        if len(keys) > 1:
            violations.append(MergeViolation(quarter, name, tuple(rows[k] for k in idx)))
    if violations and not allow_unsafe:
        raise MergeSafetyError(violations)

    names = sorted(sources)
    return MergeReport(
        registry=dict(enumerate(names)),
        canonical=canonical,
        sources={n: sorted(sources[n]) for n in names},
        violations=violations,
    )


# --------------------------------------------------------------------------
# records and panel


@dataclass(frozen=True)
class QuarterRecord:
    institution_id: int
    quarter_index: int  # 1..T
    activity: int
    activity_etd: int | None
    activity_otc: int | None
    cce: int | None
    pfe: int | None
    tce: int | None
    rank: int
    state: str | None = None
    total_assets: int | None = None
    derivatives: tuple[int | None, ...] = (None,) * len(DERIVATIVE_COLUMNS)
    tce_to_capital: float | None = None


def validate_record(rec: QuarterRecord, tolerance: float = DEFAULT_TOLERANCE) -> list[str]:
    """Additive-identity and sign violations of one record (empty when clean)."""
    problems = []
    for name in ("activity", "activity_etd", "activity_otc", "cce", "pfe", "tce", "total_assets"):
        v = getattr(rec, name)
        if v is not None and v < 0:
            problems.append(f"{name} is negative ({v})")
    for col, v in zip(DERIVATIVE_COLUMNS, rec.derivatives):
        if v is not None and v < 0:
            problems.append(f"{col} is negative ({v})")
    if rec.activity_etd is not None and rec.activity_otc is not None:
        gap = rec.activity - (rec.activity_etd + rec.activity_otc)
        if abs(gap) > tolerance:
            problems.append(
                f"activity identity: {rec.activity} != etd {rec.activity_etd} + otc {rec.activity_otc}"
            )
    if rec.cce is not None and rec.pfe is not None and rec.tce is not None:
        if abs(rec.tce - (rec.cce + rec.pfe)) > tolerance:
            problems.append(f"TCE identity: tce {rec.tce} != cce {rec.cce} + pfe {rec.pfe}")
    if rec.rank < 0:
        problems.append(f"rank is negative ({rec.rank})")
    return problems


SERIES_FIELDS = ("activity_total", "activity_otc", "activity_etd", "cce", "pfe", "tce")
_FIELD_ATTR = {"activity_total": "activity"}


@dataclass(frozen=True)
class Panel:
    """Institutions x quarters matrix of ranked records.

    ``records`` only holds ranked (present) entries keyed by
    ``(institution_id, quarter_index)`` with quarter indices in ``1..T``;
    absent pairs have rank 0 and activity 0.
    """

    names: tuple[str, ...]
    quarters: tuple[str, ...]
    records: Mapping[tuple[int, int], QuarterRecord]
    log: tuple[str, ...] = field(default=(), compare=False)

    @property
    def N(self) -> int:
        return len(self.names)

    @property
    def T(self) -> int:
        return len(self.quarters)

    @property
    def registry(self) -> dict[int, str]:
        return dict(enumerate(self.names))

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def quarter_index(self, label: str) -> int:
        """1-based index of a quarter label."""
        try:
            return self.quarters.index(canonical_quarter(label)) + 1
        except ValueError:
            raise KeyError(label) from None

    def presence(self, i: int) -> frozenset[int]:
        return frozenset(t for t in range(1, self.T + 1) if (i, t) in self.records)

    @cached_property
    def ranks(self) -> np.ndarray:
        out = np.zeros((self.N, self.T), dtype=np.int64)
        for (i, t), rec in self.records.items():
            out[i, t - 1] = rec.rank
        out.setflags(write=False)
        return out

    @cached_property
    def present(self) -> np.ndarray:
        return self.ranks > 0

    def series(self, field: str) -> np.ndarray:
        """``N x T`` float matrix of a field; NaN where unavailable."""
        if field not in SERIES_FIELDS:
            raise ValueError(f"unknown field {field!r}; expected one of {SERIES_FIELDS}")
        attr = _FIELD_ATTR.get(field, field)
        out = np.full((self.N, self.T), np.nan)
        for (i, t), rec in self.records.items():
            v = getattr(rec, attr)
            if v is not None:
                out[i, t - 1] = float(v)
        return out

    @cached_property
    def activity(self) -> np.ndarray:
        """Zero-filled ``N x T`` activity matrix."""
        out = np.nan_to_num(self.series("activity_total"), nan=0.0)
        out.setflags(write=False)
        return out

    def ranked_records(self) -> int:
        return len(self.records)


def _consistent_ranks(rows: Sequence[RawRow]) -> bool:
    ranks = [r.rank_reported for r in rows]
    if any(r is None for r in ranks) or sorted(ranks) != list(range(1, len(rows) + 1)):
        return False
    ordered = sorted(rows, key=lambda r: r.rank_reported)
    return all(a.total_derivatives >= b.total_derivatives for a, b in zip(ordered, ordered[1:]))


def build_panel(
    rows: Sequence[RawRow],
    aliases: AliasTable | None = None,
    quarter_range: tuple[str, str] | None = None,
    *,
    top_n: int = TOP_N,
    allow_unsafe_merge: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
) -> Panel:
    """Assemble a :class:`Panel` from parsed rows.

    Reported ranks are kept when they form ``1..n`` and agree with the
    activity ordering; otherwise the quarter is re-ranked by activity with
    ties broken by canonical name, and the repair is logged.
    """
    aliases = aliases if aliases is not None else AliasTable.default()
    log: list[str] = []
    if quarter_range is None:
        if not rows:
            raise IngestError("no rows and no quarter range given")
        ords = [parse_quarter(r.quarter_label) for r in rows]
        quarter_range = (format_quarter(min(ords)), format_quarter(max(ords)))
    quarters = _quarter_range(*quarter_range)
    qpos = {q: k + 1 for k, q in enumerate(quarters)}
    for r in rows:
        if r.quarter_label not in qpos:
            raise IngestError(
                f"line {r.line}: quarter {r.quarter_label} outside {quarters[0]}..{quarters[-1]}"
            )

    merge = merge_identities(rows, aliases, allow_unsafe=allow_unsafe_merge)
    log.extend(merge.lines())

    kept: dict[tuple[str, str], RawRow] = {}
    for row, name in zip(rows, merge.canonical):
        key = (row.quarter_label, name)
        if key in kept:
            prev = kept[key]
            if prev.values()[2:] == row.values()[2:] and _source_key(prev) == _source_key(row):
                log.append(f"dropped line {row.line}: identical to line {prev.line}")
                continue
            raise DuplicateRecordError(prev, row, name)
        if row.total_derivatives <= 0:
            log.append(f"dropped line {row.line}: zero activity for {name} in {row.quarter_label}")
            continue
        kept[key] = row

    names = sorted({name for (_, name) in kept})
    ids = {n: k for k, n in enumerate(names)}
    by_quarter: dict[str, list[tuple[str, RawRow]]] = defaultdict(list)
    for (q, name), row in kept.items():
        by_quarter[q].append((name, row))

    records: dict[tuple[int, int], QuarterRecord] = {}
    for q in quarters:
        entries = by_quarter.get(q, [])
        if len(entries) > top_n:
            raise IngestError(f"{q}: {len(entries)} ranked rows exceed the top-{top_n} limit")
        if not entries:
            continue
        if _consistent_ranks([r for _, r in entries]):
            ranks = {name: r.rank_reported for name, r in entries}
        else:
            ordered = sorted(entries, key=lambda e: (-e[1].total_derivatives, e[0]))
            ranks = {name: k + 1 for k, (name, _) in enumerate(ordered)}
            msg = f"re-ranked {q} by activity (reported ranks were inconsistent)"
            logger.warning(msg)
            log.append(msg)
        for name, row in entries:
            etd = [row.derivative(c) for c in ETD_COLUMNS]
            otc = [row.derivative(c) for c in OTC_COLUMNS]
            rec = QuarterRecord(
                institution_id=ids[name],
                quarter_index=qpos[q],
                activity=row.total_derivatives,
                activity_etd=None if None in etd else sum(etd),
                activity_otc=None if None in otc else sum(otc),
                cce=row.cce,
                pfe=row.pfe,
                tce=row.tce,
                rank=ranks[name],
                state=row.state,
                total_assets=row.total_assets,
                derivatives=row.derivatives,
                tce_to_capital=row.tce_to_capital,
            )
            for problem in validate_record(rec, tolerance):
                log.append(f"line {row.line} ({name}, {q}): {problem}")
            records[(rec.institution_id, rec.quarter_index)] = rec

    return Panel(tuple(names), quarters, dict(sorted(records.items())), tuple(log))


def load_panel(path, aliases: AliasTable | None = None,
               quarter_range: tuple[str, str] | None = None,
               tolerant: bool = False, **kwargs) -> Panel:
    """Read a CSV and build the panel; skipped rows are prepended to ``log``."""
    rows, recovered = read_rows(path, tolerant=tolerant)
    panel = build_panel(rows, aliases, quarter_range, **kwargs)
    recovery = tuple(str(e) for e in recovered)
    return Panel(panel.names, panel.quarters, panel.records, recovery + panel.log)


# --------------------------------------------------------------------------
# serialization


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_panel_csv(panel: Panel, dest) -> None:
    """One ranked record per row in the 17-column input layout."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_panel_csv(panel, fh)
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(COLUMNS)
    recs = sorted(panel.records.values(), key=lambda r: (r.quarter_index, r.rank))
    for r in recs:
        writer.writerow([
            panel.quarters[r.quarter_index - 1], panel.names[r.institution_id], r.rank,
            _cell(r.state), _cell(r.total_assets), r.activity,
            *(_cell(v) for v in r.derivatives),
            _cell(r.cce), _cell(r.pfe), _cell(r.tce), _cell(r.tce_to_capital),
        ])


def registry_document(panel: Panel) -> dict:
    return {
        "quarters": list(panel.quarters),
        "T": panel.T,
        "N": panel.N,
        "ranked_records": panel.ranked_records(),
        "institutions": [
            {"id": i, "name": n, "quarters_present": len(panel.presence(i))}
            for i, n in enumerate(panel.names)
        ],
    }


def write_registry_json(panel: Panel, dest) -> None:
    text = json.dumps(registry_document(panel), indent=2) + "\n"
    Path(dest).write_text(text, encoding="utf-8")


def write_log(lines: Iterable[str], dest) -> None:
    Path(dest).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
