"""CSV event logs: case_id,activity,timestamp."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .errors import PPCCError


class LogFormatError(PPCCError, ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    case_id: str
    activity: str
    timestamp: datetime


@dataclass(frozen=True)
class TraceVariant:
    activities: tuple[str, ...]
    frequency: int


def parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise LogFormatError(f"bad ISO-8601 timestamp {raw!r}") from exc
    # naive timestamps are taken as UTC so they compare with aware ones
    return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)


def read_events(source: str | Path | io.TextIOBase) -> list[EventRecord]:
    if isinstance(source, (str, Path)):
        try:
            with open(source, newline="", encoding="utf-8") as fh:
                return read_events(fh)
        except OSError as exc:
            raise LogFormatError(f"cannot read log {source}: {exc}") from exc
    reader = csv.DictReader(source)
    needed = {"case_id", "activity", "timestamp"}
    if reader.fieldnames is None:
        return []
    missing = needed - set(reader.fieldnames)
    if missing:
        raise LogFormatError(f"log is missing columns {sorted(missing)}")
    out = []
    for line, row in enumerate(reader, start=2):
        case, act = (row["case_id"] or "").strip(), (row["activity"] or "").strip()
        if not case or not act:
            raise LogFormatError(f"line {line}: empty case_id or activity")
        out.append(EventRecord(case, act, parse_timestamp(row["timestamp"] or "")))
    return out


def traces(events: Iterable[EventRecord]) -> dict[str, tuple[str, ...]]:
    """Activity sequence per case, sorted by timestamp; ties keep file order."""
    cases: dict[str, list[tuple[datetime, int, str]]] = {}
    for i, ev in enumerate(events):
        cases.setdefault(ev.case_id, []).append((ev.timestamp, i, ev.activity))
    return {case: tuple(a for _, _, a in sorted(rows)) for case, rows in cases.items()}


def variants(events: Iterable[EventRecord]) -> list[TraceVariant]:
    """Distinct traces with their frequency, most frequent first."""
    counts = Counter(traces(events).values())
    return [TraceVariant(acts, n)
            for acts, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def log_labels(events: Iterable[EventRecord]) -> set[str]:
    return {ev.activity for ev in events}
