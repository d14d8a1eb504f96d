"""Ingest raw complaint flat files into validated ComplaintRecord streams.

Handles the NHTSA ODI 49-column tab-separated layout by default, but the
column mapping is configuration: any delimiter-separated file with at least
id/date/manufacturer/component/narrative columns can be parsed.  Malformed
rows are reported and skipped rather than aborting the stream; an optional
error budget turns excessive dirt into a hard failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import IO, Iterable, Iterator, Sequence

# Column order of the public ODI FLAT_CMPL extract (49 variables).
ODI_SCHEMA = (
    "CMPLID", "ODINO", "MFR_NAME", "MAKETXT", "MODELTXT", "YEARTXT", "CRASH",
    "FAILDATE", "FIRE", "INJURED", "DEATHS", "COMPDESC", "CITY", "STATE",
    "VIN", "DATEA", "LDATE", "MILES", "OCCURENCES", "CDESCR", "CMPL_TYPE",
    "POLICE_RPT_YN", "PURCH_DT", "ORIG_OWNER_YN", "ANTI_BRAKES_YN",
    "CRUISE_CONT_YN", "NUM_CYLS", "DRIVE_TRAIN", "FUEL_SYS", "FUEL_TYPE",
    "TRANS_TYPE", "VEH_SPEED", "DOT", "TIRE_SIZE", "LOC_OF_TIRE",
    "TIRE_FAIL_TYPE", "ORIG_EQUIP_YN", "MANUF_DT", "SEAT_TYPE",
    "RESTRAINT_TYPE", "DEALER_NAME", "DEALER_TEL", "DEALER_CITY",
    "DEALER_STATE", "DEALER_ZIP", "PROD_TYPE", "REPAIRED_YN", "MEDICAL_ATTN",
    "VEHICLES_TOWED_YN",
)

# Canonical JSONL key order for serialized records.
_RECORD_KEYS = (
    "complaint_id", "incident_date", "received_date", "manufacturer",
    "make", "model", "model_year", "component", "narrative", "extra",
)


class IngestError(ValueError):
    """Unrecoverable ingest failure (bad schema, blown error budget)."""


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the source columns backing each modeled field."""

    complaint_id: str = "CMPLID"
    incident_date: str = "FAILDATE"
    received_date: str = "DATEA"
    manufacturer: str = "MFR_NAME"
    make: str = "MAKETXT"
    model: str = "MODELTXT"
    model_year: str = "YEARTXT"
    component: str = "COMPDESC"
    narrative: str = "CDESCR"
    date_format: str = "%Y%m%d"

    def required(self) -> tuple[str, ...]:
        return (self.complaint_id, self.incident_date, self.manufacturer,
                self.component, self.narrative)


@dataclass(frozen=True)
class ComplaintRecord:
    """One consumer complaint row; extra holds the unmodeled columns in order."""

    complaint_id: str
    incident_date: date | None
    received_date: date | None
    manufacturer: str
    make: str
    model: str
    model_year: int | None
    component: str
    narrative: str
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.complaint_id:
            raise IngestError("complaint_id must be non-empty")
        if not self.narrative.strip():
            raise IngestError("narrative must be non-empty")


@dataclass(frozen=True)
class RowError:
    """A rejected input row; the stream continues past it."""

    row_index: int
    message: str


@dataclass(frozen=True)
class DateRange:
    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise IngestError(f"date range start {self.start} after end {self.end}")

    def __contains__(self, day: date) -> bool:
        return self.start <= day <= self.end


def _parse_date(raw: str, fmt: str) -> date | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        return datetime.strptime(raw, fmt).date()
    except ValueError:
        try:
            return date.fromisoformat(raw)
        except ValueError:
            return None


def _parse_year(raw: str) -> int | None:
    raw = raw.strip()
    if raw.isdigit() and len(raw) == 4:
        return int(raw)
    return None


def parse_complaints(
    source: IO[bytes] | Iterable[bytes],
    schema: Sequence[str] = ODI_SCHEMA,
    delimiter: str = "\t",
    mapping: ColumnMapping = ColumnMapping(),
    has_header: bool = False,
    encoding_errors: str = "report",
    max_error_fraction: float | None = None,
) -> Iterator[ComplaintRecord | RowError]:
    """Stream records out of a delimiter-separated byte stream.

    Yields a ComplaintRecord or a RowError per non-header row.  With
    encoding_errors="report" undecodable rows become RowErrors; "replace"
    decodes them lossily instead.  When max_error_fraction is set, the
    stream aborts with IngestError once the bad-row fraction exceeds it
    (checked after a 200-row warmup and again at end of stream).
    """
    if len(delimiter) != 1:
        raise IngestError(f"delimiter must be a single character, got {delimiter!r}")
    missing = [name for name in mapping.required() if name not in schema]
    if missing:
        raise IngestError(f"schema is missing required columns: {missing}")
    if encoding_errors not in ("report", "replace"):
        raise IngestError(f"unknown encoding_errors mode {encoding_errors!r}")

    col_index = {name: i for i, name in enumerate(schema)}
    modeled = {getattr(mapping, f) for f in (
        "complaint_id", "incident_date", "received_date", "manufacturer",
        "make", "model", "model_year", "component", "narrative",
    ) if getattr(mapping, f) in col_index}

    def get(fields: list[str], name: str) -> str:
        idx = col_index.get(name)
        return fields[idx].strip() if idx is not None else ""

    rows = 0
    errors = 0

    def budget_hit() -> bool:
        return (max_error_fraction is not None and rows >= 200
                and errors / rows > max_error_fraction)

    for row_index, raw in enumerate(source):
        if has_header and row_index == 0:
            header = raw.decode("utf-8", errors="replace")
            if len(header.rstrip("\r\n").split(delimiter)) != len(schema):
                raise IngestError(
                    f"header has wrong column count (expected {len(schema)})"
                )
            continue
        if not raw.strip():
            continue
        rows += 1
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            if encoding_errors == "report":
                errors += 1
                yield RowError(row_index, "undecodable bytes")
                if budget_hit():
                    raise IngestError(
                        f"error budget exceeded: {errors}/{rows} bad rows"
                    )
                continue
            line = raw.decode("utf-8", errors="replace")
        fields = line.rstrip("\r\n").split(delimiter)
        if len(fields) != len(schema):
            errors += 1
            yield RowError(
                row_index,
                f"column count mismatch: expected {len(schema)}, got {len(fields)}",
            )
        else:
            narrative = get(fields, mapping.narrative).strip()
            if not narrative:
                errors += 1
                yield RowError(row_index, "empty narrative")
            elif not get(fields, mapping.complaint_id):
                errors += 1
                yield RowError(row_index, "empty complaint_id")
            else:
                extra = {
                    name: fields[col_index[name]]
                    for name in schema if name not in modeled
                }
                yield ComplaintRecord(
                    complaint_id=get(fields, mapping.complaint_id),
                    incident_date=_parse_date(get(fields, mapping.incident_date),
                                              mapping.date_format),
                    received_date=_parse_date(get(fields, mapping.received_date),
                                              mapping.date_format),
                    manufacturer=get(fields, mapping.manufacturer),
                    make=get(fields, mapping.make),
                    model=get(fields, mapping.model),
                    model_year=_parse_year(get(fields, mapping.model_year)),
                    component=get(fields, mapping.component),
                    narrative=narrative,
                    extra=extra,
                )
        if budget_hit():
            raise IngestError(f"error budget exceeded: {errors}/{rows} bad rows")
    if max_error_fraction is not None and rows and errors / rows > max_error_fraction:
        raise IngestError(f"error budget exceeded: {errors}/{rows} bad rows")


def split_results(
    results: Iterable[ComplaintRecord | RowError],
) -> tuple[list[ComplaintRecord], list[RowError]]:
    """Separate a parse stream into records and row errors."""
    records: list[ComplaintRecord] = []
    errors: list[RowError] = []
    for item in results:
        (records if isinstance(item, ComplaintRecord) else errors).append(item)
    return records, errors


def dedup_complaints(records: Iterable[ComplaintRecord]) -> list[ComplaintRecord]:
    """Collapse records sharing (complaint_id, narrative) into one survivor.

    The survivor keeps the first occurrence's fields except component, which
    becomes the "; "-joined order-preserving union of the group's components.
    """
    groups: dict[tuple[str, str], ComplaintRecord] = {}
    components: dict[tuple[str, str], list[str]] = {}
    for rec in records:
        key = (rec.complaint_id, rec.narrative)
        if key not in groups:
            groups[key] = rec
            components[key] = [rec.component] if rec.component else []
        elif rec.component and rec.component not in components[key]:
            components[key].append(rec.component)
    out = []
    for key, rec in groups.items():
        joined = "; ".join(components[key])
        if joined != rec.component:
            rec = ComplaintRecord(
                rec.complaint_id, rec.incident_date, rec.received_date,
                rec.manufacturer, rec.make, rec.model, rec.model_year,
                joined, rec.narrative, rec.extra,
            )
        out.append(rec)
    return out


def filter_by_date(
    records: Iterable[ComplaintRecord],
    date_range: DateRange,
    field_name: str = "received_date",
) -> tuple[list[ComplaintRecord], int]:
    """Keep records whose date falls inside the inclusive range.

    field_name selects the primary date field; the other date field is the
    fallback when the primary is missing.  Records with neither date are
    excluded; the second return value counts them.
    """
    if field_name not in ("received_date", "incident_date"):
        raise IngestError(f"unknown date field {field_name!r}")
    fallback = "incident_date" if field_name == "received_date" else "received_date"
    kept: list[ComplaintRecord] = []
    unparseable = 0
    for rec in records:
        day = getattr(rec, field_name) or getattr(rec, fallback)
        if day is None:
            unparseable += 1
        elif day in date_range:
            kept.append(rec)
    return kept, unparseable


def record_to_json(rec: ComplaintRecord) -> str:
    """Serialize one record as a canonical fixed-key-order JSON line."""
    payload = {
        "complaint_id": rec.complaint_id,
        "incident_date": rec.incident_date.isoformat() if rec.incident_date else None,
        "received_date": rec.received_date.isoformat() if rec.received_date else None,
        "manufacturer": rec.manufacturer,
        "make": rec.make,
        "model": rec.model,
        "model_year": rec.model_year,
        "component": rec.component,
        "narrative": rec.narrative,
        "extra": rec.extra,
    }
    return json.dumps(payload, ensure_ascii=True, separators=(", ", ": "))


def record_from_json(line: str) -> ComplaintRecord:
    obj = json.loads(line)
    unknown = set(obj) - set(_RECORD_KEYS)
    if unknown:
        raise IngestError(f"unknown record keys: {sorted(unknown)}")
    return ComplaintRecord(
        complaint_id=obj["complaint_id"],
        incident_date=date.fromisoformat(obj["incident_date"]) if obj.get("incident_date") else None,
        received_date=date.fromisoformat(obj["received_date"]) if obj.get("received_date") else None,
        manufacturer=obj.get("manufacturer", ""),
        make=obj.get("make", ""),
        model=obj.get("model", ""),
        model_year=obj.get("model_year"),
        component=obj.get("component", ""),
        narrative=obj["narrative"],
        extra=dict(obj.get("extra", {})),
    )


def write_records(path, records: Iterable[ComplaintRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_records(path) -> list[ComplaintRecord]:
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(line) for line in fh if line.strip()]
