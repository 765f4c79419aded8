"""Year-aware normalization of raw crash-record releases.

Crash databases re-code their files every year: element locators move,
attribute codes change meaning, files appear and disappear.  All of that
drift knowledge lives in a plain-text catalog file so new data years never
require a code change.  This module loads the catalog, parses yearly CSV
releases into raw cases, and consolidates them into year-independent
records carrying canonical causal attributes, effect counts and severity
labels.

Catalog file format (one entry per canonical element, ``#`` comments)::

    case_id years=1975..2025 column=ST_CASE
    element light_condition role=causal group=scenery kind=categorical
      years=1975..2025 level=CRASH locator=C25
      years=1975..2025 code=1 -> daylight "Daylight"
      unknown -> unknown "Unknown"
    element fatalities role=effect measure=a agg=sum kind=numeric min=0 max=99
      years=1975..2025 level=VEHICLE locator=V150
      unknown -> unknown "Unknown"

Attribute lines may end with ``counted`` to mark membership in the
element's severity measure (count aggregation).  Numeric elements carry
``min=``/``max=`` bounds; out-of-range or non-numeric raw values degrade
to the element's unknown attribute.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TypeVar

import numpy as np

from .ere.labels import SeverityCounts, SeverityLevel, binary_severity, compute_csi, severity_level

logger = logging.getLogger(__name__)

FILE_LEVELS = ("CRASH", "VEHICLE", "PERSON", "EVENT")

T = TypeVar("T")


class CatalogError(Exception):
    """Catalog file violates the format or an invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class OverlappingYearRangeError(CatalogError):
    pass


class DuplicateElementError(CatalogError):
    pass


class IngestError(Exception):
    """Raw data file cannot be ingested at all (per-row defects are
    quarantined into the report instead)."""


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class YearRange:
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"empty year range {self.start}..{self.end}")

    def __contains__(self, year: int) -> bool:
        return self.start <= year <= self.end

    def overlaps(self, other: "YearRange") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class LocatorSpec:
    years: YearRange
    level: str
    locator: str


@dataclass(frozen=True)
class AttributeSpec:
    years: YearRange
    code: int
    attr_id: str
    label: str
    counted: bool = False


@dataclass(frozen=True)
class CatalogEntry:
    element_id: str
    role: str = "causal"  # "causal" | "effect"
    group: str = ""
    kind: str = "categorical"  # "categorical" | "numeric"
    measure: str = ""  # "a".."g" | "crash_type" | ""
    agg: str = ""  # "sum" | "count" | ""
    vmin: float | None = None
    vmax: float | None = None
    locators: tuple[LocatorSpec, ...] = ()
    attributes: tuple[AttributeSpec, ...] = ()
    unknown_id: str = "unknown"
    unknown_label: str = "Unknown"

    def locator_for(self, year: int) -> LocatorSpec | None:
        for loc in self.locators:
            if year in loc.years:
                return loc
        return None

    def resolve(self, year: int, code: int) -> AttributeSpec | None:
        """Canonical attribute for a raw code in a given year; pure."""
        for attr in self.attributes:
            if attr.code == code and year in attr.years:
                return attr
        return None

    def categories(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for attr in self.attributes:
            if attr.attr_id != self.unknown_id:
                seen.setdefault(attr.attr_id)
        return tuple(seen)


@dataclass(frozen=True)
class ElementCatalog:
    entries: tuple[CatalogEntry, ...] = ()
    case_id_columns: tuple[tuple[YearRange, str], ...] = ()

    def entry(self, element_id: str) -> CatalogEntry:
        for e in self.entries:
            if e.element_id == element_id:
                return e
        raise KeyError(element_id)

    def causal_entries(self) -> tuple[CatalogEntry, ...]:
        return tuple(e for e in self.entries if e.role == "causal")

    def effect_entries(self) -> tuple[CatalogEntry, ...]:
        return tuple(e for e in self.entries if e.role == "effect")

    def case_column(self, year: int) -> str | None:
        for years, column in self.case_id_columns:
            if year in years:
                return column
        return None

    def covers_year(self, year: int) -> bool:
        return self.case_column(year) is not None


def _parse_years(token: str, line: int) -> YearRange:
    if not token.startswith("years="):
        raise CatalogError(f"expected years=A..B, got {token!r}", line)
    body = token[len("years=") :]
    parts = body.split("..")
    if len(parts) != 2:
        raise CatalogError(f"bad year range {body!r}", line)
    try:
        start, end = int(parts[0]), int(parts[1])
    except ValueError:
        raise CatalogError(f"bad year range {body!r}", line) from None
    if start > end:
        raise CatalogError(f"empty year range {body!r}", line)
    return YearRange(start, end)


def _split_attrs(tokens: Iterable[str], line: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        key, eq, value = tok.partition("=")
        if not eq:
            raise CatalogError(f"expected key=value, got {tok!r}", line)
        out[key] = value
    return out


_MEASURES = ("a", "b", "c", "d", "e", "f", "g", "crash_type")


@dataclass
class _EntryDraft:
    element_id: str
    line: int
    header: dict[str, str]
    locators: list[LocatorSpec] = field(default_factory=list)
    attributes: list[AttributeSpec] = field(default_factory=list)
    unknown: tuple[str, str] | None = None


def _finish_entry(draft: _EntryDraft) -> CatalogEntry:
    h = draft.header
    kind = h.get("kind", "categorical")
    # "identifier" marks free-text locator fields (road names, crossing
    # ids): enumerated in the catalog for completeness, inert as features.
    if kind not in ("categorical", "numeric", "identifier"):
        raise CatalogError(f"unknown kind {kind!r} for element {draft.element_id}", draft.line)
    role = h.get("role", "causal")
    if role not in ("causal", "effect"):
        raise CatalogError(f"unknown role {role!r} for element {draft.element_id}", draft.line)
    measure = h.get("measure", "")
    if measure and measure not in _MEASURES:
        raise CatalogError(f"unknown measure {measure!r}", draft.line)
    agg = h.get("agg", "")
    if agg and agg not in ("sum", "count"):
        raise CatalogError(f"unknown agg {agg!r}", draft.line)
    if draft.unknown is None:
        raise CatalogError(
            f"element {draft.element_id} must declare an explicit unknown attribute", draft.line
        )
    for i, a in enumerate(draft.locators):
        for b in draft.locators[i + 1 :]:
            if a.years.overlaps(b.years):
                raise OverlappingYearRangeError(
                    f"element {draft.element_id}: locator year ranges overlap", draft.line
                )
    for i, a in enumerate(draft.attributes):
        for b in draft.attributes[i + 1 :]:
            if a.code == b.code and a.years.overlaps(b.years):
                raise OverlappingYearRangeError(
                    f"element {draft.element_id}: code {a.code} resolves ambiguously", draft.line
                )
    return CatalogEntry(
        element_id=draft.element_id,
        role=role,
        group=h.get("group", ""),
        kind=kind,
        measure=measure,
        agg=agg,
        vmin=float(h["min"]) if "min" in h else None,
        vmax=float(h["max"]) if "max" in h else None,
        locators=tuple(draft.locators),
        attributes=tuple(draft.attributes),
        unknown_id=draft.unknown[0],
        unknown_label=draft.unknown[1],
    )


def _parse_quoted_tail(rest: str, line: int) -> tuple[str, str, bool]:
    """Parse `attr_id "Label" [counted]` and return (attr_id, label, counted)."""
    rest = rest.strip()
    attr_id, _, tail = rest.partition(" ")
    tail = tail.strip()
    label = attr_id
    counted = False
    if tail.startswith('"'):
        close = tail.find('"', 1)
        if close < 0:
            raise CatalogError("unterminated label string", line)
        label = tail[1:close]
        tail = tail[close + 1 :].strip()
    if tail == "counted":
        counted = True
    elif tail:
        raise CatalogError(f"unexpected trailing tokens {tail!r}", line)
    if not attr_id:
        raise CatalogError("missing canonical attribute id", line)
    return attr_id, label, counted


def load_catalog(catalog_file: str | Path) -> ElementCatalog:
    """Load and validate an element catalog.

    Raises CatalogError (with a line number) on format defects,
    OverlappingYearRangeError when any locator, attribute-code or case-id
    year ranges overlap, and DuplicateElementError on repeated canonical
    ids.
    """
    path = Path(catalog_file)
    drafts: list[_EntryDraft] = []
    case_columns: list[tuple[YearRange, str, int]] = []
    current: _EntryDraft | None = None

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            head = tokens[0]

            if head == "case_id":
                attrs = _split_attrs(tokens[1:], lineno)
                if "years" not in attrs or "column" not in attrs:
                    raise CatalogError("case_id needs years= and column=", lineno)
                case_columns.append((_parse_years(f"years={attrs['years']}", lineno), attrs["column"], lineno))
                continue

            if head == "element":
                if len(tokens) < 2:
                    raise CatalogError("element line needs a canonical id", lineno)
                current = _EntryDraft(
                    element_id=tokens[1], line=lineno, header=_split_attrs(tokens[2:], lineno)
                )
                drafts.append(current)
                continue

            if current is None:
                raise CatalogError(f"unexpected line outside an element block: {line!r}", lineno)

            if head == "unknown":
                _, arrow, rest = line.partition("->")
                if not arrow:
                    raise CatalogError("unknown line must be `unknown -> attr_id \"Label\"`", lineno)
                attr_id, label, _ = _parse_quoted_tail(rest, lineno)
                current.unknown = (attr_id, label)
                continue

            attrs_part, arrow, rest = line.partition("->")
            fields = _split_attrs(attrs_part.split(), lineno)
            years = _parse_years(f"years={fields.get('years', '')}", lineno)
            if arrow:
                if "code" not in fields:
                    raise CatalogError("attribute line needs code=", lineno)
                try:
                    code = int(fields["code"])
                except ValueError:
                    raise CatalogError(f"bad code {fields['code']!r}", lineno) from None
                attr_id, label, counted = _parse_quoted_tail(rest, lineno)
                current.attributes.append(AttributeSpec(years, code, attr_id, label, counted))
            else:
                level = fields.get("level", "")
                if level not in FILE_LEVELS:
                    raise CatalogError(f"unknown file level {level!r}", lineno)
                if "locator" not in fields:
                    raise CatalogError("locator line needs locator=", lineno)
                current.locators.append(LocatorSpec(years, level, fields["locator"]))

    entries = []
    seen_ids: set[str] = set()
    for draft in drafts:
        if draft.element_id in seen_ids:
            raise DuplicateElementError(f"duplicate canonical element id {draft.element_id!r}", draft.line)
        seen_ids.add(draft.element_id)
        entries.append(_finish_entry(draft))

    # A (year, level, locator) triple must identify exactly one element.
    claims: list[tuple[LocatorSpec, str]] = [
        (loc, e.element_id) for e in entries for loc in e.locators
    ]
    for i, (a, a_id) in enumerate(claims):
        for b, b_id in claims[i + 1 :]:
            if a_id != b_id and a.level == b.level and a.locator == b.locator and a.years.overlaps(b.years):
                raise OverlappingYearRangeError(
                    f"locator {a.locator} at level {a.level} is claimed by both "
                    f"{a_id!r} and {b_id!r} in overlapping years"
                )

    for i, (ya, _, la) in enumerate(case_columns):
        for yb, _, _ in case_columns[i + 1 :]:
            if ya.overlaps(yb):
                raise OverlappingYearRangeError("case_id column year ranges overlap", la)

    return ElementCatalog(
        entries=tuple(entries),
        case_id_columns=tuple((years, col) for years, col, _ in case_columns),
    )


# ---------------------------------------------------------------------------
# Ingest report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IngestIssue:
    kind: str  # ragged_row | unresolved_code | no_locator | bad_value
    detail: str
    file: str = ""
    line: int | None = None
    case_id: str = ""


@dataclass
class IngestReport:
    issues: list[IngestIssue] = field(default_factory=list)
    _seen: set = field(default_factory=set, repr=False)

    def add(self, issue: IngestIssue) -> None:
        # no-locator gaps are per element/year, not per case: one entry each
        if issue.kind == "no_locator":
            key = (issue.kind, issue.detail)
            if key in self._seen:
                return
            self._seen.add(key)
            issue = IngestIssue(kind=issue.kind, detail=issue.detail, file=issue.file, line=issue.line)
        self.issues.append(issue)

    def count(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.issues)
        return sum(1 for i in self.issues if i.kind == kind)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for issue in self.issues:
                fh.write(
                    json.dumps(
                        {
                            "kind": issue.kind,
                            "detail": issue.detail,
                            "file": issue.file,
                            "line": issue.line,
                            "case_id": issue.case_id,
                        },
                        separators=(",", ":"),
                    )
                )
                fh.write("\n")


def _report_or_log(report: IngestReport | None, issue: IngestIssue) -> None:
    if report is not None:
        report.add(issue)
    else:
        logger.warning("%s: %s (file=%s line=%s case=%s)", issue.kind, issue.detail, issue.file, issue.line, issue.case_id)


# ---------------------------------------------------------------------------
# Raw parsing
# ---------------------------------------------------------------------------


@dataclass
class RawCase:
    year: int
    case_id: str
    level_records: dict[str, list[dict[str, str]]] = field(default_factory=dict)


_LEVEL_HINTS = (
    ("EVENT", ("event",)),
    ("VEHICLE", ("vehicle", "veh")),
    ("PERSON", ("person", "per")),
    ("CRASH", ("crash", "accident", "acc")),
)


def detect_level(path: str | Path) -> str:
    """Infer the file level from the file name (override via parse_year's
    levels argument when names do not follow the convention)."""
    stem = Path(path).stem.lower()
    for level, hints in _LEVEL_HINTS:
        if any(h in stem for h in hints):
            return level
    raise IngestError(f"cannot infer file level from name {Path(path).name!r}; pass an explicit level")


def parse_year(
    files: Sequence[str | Path],
    year: int,
    catalog: ElementCatalog,
    report: IngestReport | None = None,
    levels: Mapping[str, str] | None = None,
) -> list[RawCase]:
    """Parse one data year's delimited files into raw cases.

    Rows are grouped by the case-identifier column the catalog declares
    for the year.  Rows whose column count disagrees with the header are
    quarantined into the report (or logged), never silently dropped.
    """
    if not catalog.covers_year(year):
        raise IngestError(f"year {year} is outside the catalog's declared coverage")
    case_column = catalog.case_column(year)
    assert case_column is not None

    cases: dict[str, RawCase] = {}
    for file_path in files:
        path = Path(file_path)
        level = (levels or {}).get(str(file_path)) or (levels or {}).get(path.name) or detect_level(path)
        if level not in FILE_LEVELS:
            raise IngestError(f"unknown file level {level!r} for {path.name}")
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                continue
            header = [h.strip().lstrip("﻿") for h in header]
            if case_column not in header:
                raise IngestError(
                    f"{path.name}: missing case-identifier column {case_column!r} for year {year}"
                )
            case_idx = header.index(case_column)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    _report_or_log(
                        report,
                        IngestIssue(
                            kind="ragged_row",
                            detail=f"expected {len(header)} columns, got {len(row)}",
                            file=path.name,
                            line=lineno,
                        ),
                    )
                    continue
                case_id = row[case_idx].strip()
                record = {h: v.strip() for h, v in zip(header, row)}
                case = cases.setdefault(case_id, RawCase(year=year, case_id=case_id))
                case.level_records.setdefault(level, []).append(record)

    return [cases[k] for k in sorted(cases)]


# ---------------------------------------------------------------------------
# Consolidation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Effects:
    crash_type: str
    counts: SeverityCounts


@dataclass(frozen=True)
class ConsolidatedCase:
    case_id: str
    year: int
    causal: Mapping[str, str]
    effects: Effects
    csi: int
    severity_level: SeverityLevel
    binary_severity: int


def _canonical_numeric(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _first_raw_value(entry: CatalogEntry, raw: RawCase) -> tuple[str | None, LocatorSpec | None]:
    loc = entry.locator_for(raw.year)
    if loc is None:
        return None, None
    for row in raw.level_records.get(loc.level, ()):
        value = row.get(loc.locator, "")
        if value != "":
            return value, loc
    return None, loc


def _resolve_single(
    entry: CatalogEntry, raw: RawCase, report: IngestReport | None
) -> str:
    """Resolve one element of a case to a canonical attribute or value."""
    loc = entry.locator_for(raw.year)
    if loc is None:
        if entry.locators:
            _report_or_log(
                report,
                IngestIssue(
                    kind="no_locator",
                    detail=f"element {entry.element_id!r} has no locator for year {raw.year}",
                ),
            )
        return entry.unknown_id
    value, _ = _first_raw_value(entry, raw)
    if value is None:
        return entry.unknown_id
    if entry.kind == "identifier":
        return entry.unknown_id
    if entry.kind == "numeric":
        try:
            num = float(value)
        except ValueError:
            return entry.unknown_id
        if entry.vmin is not None and num < entry.vmin:
            return entry.unknown_id
        if entry.vmax is not None and num > entry.vmax:
            return entry.unknown_id
        return _canonical_numeric(num)
    try:
        code = int(value)
    except ValueError:
        _report_or_log(
            report,
            IngestIssue(
                kind="bad_value",
                detail=f"element {entry.element_id!r}: non-integer code {value!r}",
                case_id=raw.case_id,
            ),
        )
        return entry.unknown_id
    attr = entry.resolve(raw.year, code)
    if attr is None:
        _report_or_log(
            report,
            IngestIssue(
                kind="unresolved_code",
                detail=f"element {entry.element_id!r}: code {code} unmapped for year {raw.year}",
                case_id=raw.case_id,
            ),
        )
        return entry.unknown_id
    return attr.attr_id


def _measure_count(entry: CatalogEntry, raw: RawCase, report: IngestReport | None) -> int:
    loc = entry.locator_for(raw.year)
    if loc is None:
        if entry.locators:
            _report_or_log(
                report,
                IngestIssue(
                    kind="no_locator",
                    detail=f"measure element {entry.element_id!r} has no locator for year {raw.year}",
                ),
            )
        return 0
    total = 0
    for row in raw.level_records.get(loc.level, ()):
        value = row.get(loc.locator, "")
        if value == "":
            continue
        if entry.agg == "sum":
            try:
                total += int(float(value))
            except ValueError:
                _report_or_log(
                    report,
                    IngestIssue(
                        kind="bad_value",
                        detail=f"measure {entry.measure}: non-numeric value {value!r}",
                        case_id=raw.case_id,
                    ),
                )
        else:
            try:
                code = int(value)
            except ValueError:
                _report_or_log(
                    report,
                    IngestIssue(
                        kind="bad_value",
                        detail=f"measure {entry.measure}: non-integer code {value!r}",
                        case_id=raw.case_id,
                    ),
                )
                continue
            attr = entry.resolve(raw.year, code)
            if attr is None:
                _report_or_log(
                    report,
                    IngestIssue(
                        kind="unresolved_code",
                        detail=f"measure {entry.measure}: code {code} unmapped for year {raw.year}",
                        case_id=raw.case_id,
                    ),
                )
                continue
            if attr.counted:
                total += 1
    return total


def consolidate(raw: RawCase, catalog: ElementCatalog, report: IngestReport | None = None) -> ConsolidatedCase:
    """Normalize one raw case into a year-independent consolidated record.

    Never fails on well-formed raw cases: unresolved codes degrade to the
    element's unknown attribute with a catalog-gap entry in the report.
    """
    if not catalog.covers_year(raw.year):
        raise IngestError(f"year {raw.year} is outside the catalog's declared coverage")

    causal = {
        entry.element_id: _resolve_single(entry, raw, report)
        for entry in catalog.causal_entries()
    }

    crash_type = "unknown"
    counts_kw = dict.fromkeys("abcdefg", 0)
    for entry in catalog.effect_entries():
        if entry.measure == "crash_type":
            crash_type = _resolve_single(entry, raw, report)
        elif entry.measure in counts_kw:
            counts_kw[entry.measure] = _measure_count(entry, raw, report)

    counts = SeverityCounts(**counts_kw)
    csi = compute_csi(counts)
    level = severity_level(csi)
    return ConsolidatedCase(
        case_id=raw.case_id,
        year=raw.year,
        causal=causal,
        effects=Effects(crash_type=crash_type, counts=counts),
        csi=csi,
        severity_level=level,
        binary_severity=binary_severity(level),
    )


# ---------------------------------------------------------------------------
# Dataset split and persistence
# ---------------------------------------------------------------------------


def split_dataset(
    cases: Sequence[T], holdout_fraction: float, seed: int
) -> tuple[list[T], list[T]]:
    """Deterministic exact partition; holdout size is round(N * fraction).

    Original relative order is preserved inside both parts.
    """
    if not (0.0 < holdout_fraction < 1.0):
        raise ValueError(f"holdout fraction must be in (0, 1), got {holdout_fraction}")
    n = len(cases)
    if n == 0:
        return [], []
    h = int(round(n * holdout_fraction))
    perm = np.random.default_rng(seed).permutation(n)
    holdout_idx = np.sort(perm[:h])
    train_idx = np.sort(perm[h:])
    return [cases[i] for i in train_idx], [cases[i] for i in holdout_idx]


def case_to_dict(case: ConsolidatedCase) -> dict:
    counts = case.effects.counts
    return {
        "case_id": case.case_id,
        "year": case.year,
        "causal": dict(sorted(case.causal.items())),
        "effects": {
            "crash_type": case.effects.crash_type,
            "counts": {k: getattr(counts, k) for k in "abcdefg"},
        },
        "csi": case.csi,
        "severity_level": int(case.severity_level),
        "binary_severity": case.binary_severity,
    }


def case_from_dict(obj: Mapping) -> ConsolidatedCase:
    counts = SeverityCounts(**{k: int(v) for k, v in obj["effects"]["counts"].items()})
    return ConsolidatedCase(
        case_id=str(obj["case_id"]),
        year=int(obj["year"]),
        causal={str(k): str(v) for k, v in obj["causal"].items()},
        effects=Effects(crash_type=str(obj["effects"]["crash_type"]), counts=counts),
        csi=int(obj["csi"]),
        severity_level=SeverityLevel(int(obj["severity_level"])),
        binary_severity=int(obj["binary_severity"]),
    )


def write_consolidated(cases: Iterable[ConsolidatedCase], path: str | Path) -> None:
    """One JSON record per line, sorted by case id for stable output."""
    ordered = sorted(cases, key=lambda c: c.case_id)
    with open(path, "w", encoding="utf-8") as fh:
        for case in ordered:
            fh.write(json.dumps(case_to_dict(case), separators=(",", ":")))
            fh.write("\n")


def read_consolidated(path: str | Path) -> list[ConsolidatedCase]:
    cases = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                cases.append(case_from_dict(json.loads(line)))
    return cases
