"""Span record model and the NDJSON file format written by instrumented SUTs.

One JSON object per line, UTF-8. Files are named ``spans-<A|B>.ndjson``
inside the benchmark artifact directory. The writer appends whole
batches with a single write so a concurrent reader never sees a torn
record; the reader is lenient and counts malformed lines instead of
failing.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

_HEX16 = re.compile(r"^[0-9a-f]{32}$")
_HEX8 = re.compile(r"^[0-9a-f]{16}$")

NESTING_TOLERANCE_NS = 1_000_000  # clock granularity slack for parent/child checks
DEFAULT_BATCH_SIZE = 256

_FIELDS = (
    "trace_id",
    "span_id",
    "parent_span_id",
    "name",
    "start_unix_ns",
    "end_unix_ns",
    "attributes",
    "request_seq",
    "version_tag",
)


@dataclass(frozen=True)
class SpanRecord:
    trace_id: str
    span_id: str
    parent_span_id: str | None
    name: str
    start_unix_ns: int
    end_unix_ns: int
    attributes: tuple[tuple[str, str], ...]
    request_seq: int
    version_tag: str

    def __post_init__(self):
        if self.end_unix_ns < self.start_unix_ns:
            raise ValueError(f"span {self.name!r}: end < start")
        if self.request_seq < 0:
            raise ValueError(f"span {self.name!r}: negative request_seq")
        if self.version_tag not in ("A", "B"):
            raise ValueError(f"span {self.name!r}: version_tag must be A or B")
        if not _HEX16.match(self.trace_id):
            raise ValueError(f"span {self.name!r}: trace_id must be 16-byte hex")
        if not _HEX8.match(self.span_id):
            raise ValueError(f"span {self.name!r}: span_id must be 8-byte hex")
        if self.parent_span_id is not None and not _HEX8.match(self.parent_span_id):
            raise ValueError(f"span {self.name!r}: parent_span_id must be 8-byte hex")

    @property
    def duration_ns(self) -> int:
        return self.end_unix_ns - self.start_unix_ns

    def to_json(self) -> str:
        return json.dumps(
            {
                "trace_id": self.trace_id,
                "span_id": self.span_id,
                "parent_span_id": self.parent_span_id,
                "name": self.name,
                "start_unix_ns": self.start_unix_ns,
                "end_unix_ns": self.end_unix_ns,
                "attributes": dict(self.attributes),
                "request_seq": self.request_seq,
                "version_tag": self.version_tag,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_doc(cls, doc: dict) -> "SpanRecord":
        missing = [k for k in _FIELDS if k not in doc]
        if missing:
            raise ValueError(f"missing keys: {missing}")
        attrs = doc["attributes"]
        if not isinstance(attrs, dict):
            raise ValueError("attributes must be an object")
        return cls(
            trace_id=doc["trace_id"],
            span_id=doc["span_id"],
            parent_span_id=doc["parent_span_id"],
            name=doc["name"],
            start_unix_ns=int(doc["start_unix_ns"]),
            end_unix_ns=int(doc["end_unix_ns"]),
            attributes=tuple(sorted((str(k), str(v)) for k, v in attrs.items())),
            request_seq=int(doc["request_seq"]),
            version_tag=doc["version_tag"],
        )


@dataclass(frozen=True)
class PairedSeries:
    name: str
    pairs: tuple[tuple[int, int, int], ...]  # (request_seq, duration_A, duration_B)
    dropped_a: int
    dropped_b: int


_append_lock = threading.Lock()


def append_batch(path: str | os.PathLike, records: Sequence[SpanRecord]) -> None:
    """Append records atomically as one write; durable on return."""
    if not records:
        return
    payload = "".join(r.to_json() + "\n" for r in records).encode("utf-8")
    with _append_lock:
        fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, payload)
            os.fsync(fd)
        finally:
            os.close(fd)


def read_spans(
    path: str | os.PathLike,
    name: str | None = None,
    version_tag: str | None = None,
) -> tuple[list[SpanRecord], int]:
    """All matching records in file order, plus a malformed-line count."""
    records: list[SpanRecord] = []
    corrupted = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = SpanRecord.from_doc(json.loads(line))
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                corrupted += 1
                continue
            if name is not None and record.name != name:
                continue
            if version_tag is not None and record.version_tag != version_tag:
                continue
            records.append(record)
    return records, corrupted


def pair_spans(
    records_a: Iterable[SpanRecord],
    records_b: Iterable[SpanRecord],
    name: str,
) -> PairedSeries:
    """Match A and B spans of one name by request_seq.

    A seq pairs only when each side has exactly one record; duplicates
    are ambiguous and the whole seq is dropped.
    """

    def collect(records):
        seen: dict[int, SpanRecord | None] = {}
        total = 0
        for r in records:
            if r.name != name:
                continue
            total += 1
            seen[r.request_seq] = r if r.request_seq not in seen else None
        return seen, total

    by_seq_a, total_a = collect(records_a)
    by_seq_b, total_b = collect(records_b)

    pairs = []
    for seq in sorted(set(by_seq_a) & set(by_seq_b)):
        a, b = by_seq_a[seq], by_seq_b[seq]
        if a is not None and b is not None:
            pairs.append((seq, a.duration_ns, b.duration_ns))
    paired = len(pairs)
    return PairedSeries(
        name=name,
        pairs=tuple(pairs),
        dropped_a=total_a - paired,
        dropped_b=total_b - paired,
    )


def check_nesting(records: Sequence[SpanRecord]) -> list[str]:
    """Warn-level check that children stay inside parent time bounds."""
    by_id = {(r.trace_id, r.span_id): r for r in records}
    warnings = []
    for r in records:
        if r.parent_span_id is None:
            continue
        parent = by_id.get((r.trace_id, r.parent_span_id))
        if parent is None:
            continue
        if (
            r.start_unix_ns < parent.start_unix_ns - NESTING_TOLERANCE_NS
            or r.end_unix_ns > parent.end_unix_ns + NESTING_TOLERANCE_NS
        ):
            warnings.append(
                f"span {r.span_id} ({r.name}) escapes parent {parent.span_id} time bounds"
            )
    return warnings


class SpanWriter:
    """In-process recorder sink: queue span completions, flush in batches.

    Safe under concurrent span completion; one flusher at a time.
    """

    def __init__(self, path: str | os.PathLike, batch_size: int = DEFAULT_BATCH_SIZE):
        self.path = path
        self.batch_size = batch_size
        self._pending: list[SpanRecord] = []
        self._lock = threading.Lock()

    def record(self, record: SpanRecord) -> None:
        flush_now = None
        with self._lock:
            self._pending.append(record)
            if len(self._pending) >= self.batch_size:
                flush_now, self._pending = self._pending, []
        if flush_now:
            append_batch(self.path, flush_now)

    def flush(self) -> None:
        with self._lock:
            pending, self._pending = self._pending, []
        if pending:
            append_batch(self.path, pending)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.flush()
        return False
