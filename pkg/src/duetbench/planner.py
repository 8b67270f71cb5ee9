"""Marker-plan generation: decide where to measure.

Two backends produce plans behind the same interface: a deterministic
heuristic (pure function of the change, the target source, and the
sensitivity level) and a remote inference service reached over HTTP.
Every plan, whatever its origin, passes ``validate_plan`` before it may
reach the instrumenter. Failures degrade to an empty plan with a skip
reason; a batch is never aborted by one bad change.
"""

from __future__ import annotations

import json
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .changeset import ChangeSet, FileChange, render_git_like
from .errors import DuetBenchError, SchemaViolation

_NAME_RE = re.compile(r"^[a-z0-9_.-]+$")
_ATTR_RE = re.compile(r"^[A-Za-z0-9_.,:/ -]*$")

ENDPOINT_ENV = "DUET_INFERENCE_ENDPOINT"
API_KEY_ENV = "DUET_INFERENCE_API_KEY"


class BackendError(DuetBenchError):
    """Transport failure or non-success status from a planner backend."""


class SensitivityLevel(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def instructions(self) -> str:
        return _INSTRUCTIONS[self]


# Placeholder instruction texts; tune per application. The level-to-text
# mapping is the contract, the wording is config.
_INSTRUCTIONS = {
    SensitivityLevel.LOW: (
        "Only flag changes that add or modify loops. Skip everything else."
    ),
    SensitivityLevel.MEDIUM: (
        "Flag changes that add or modify loops, or that change numeric "
        "arguments of function calls (limits, iteration counts, sizes). "
        "Skip comments, logging, and formatting."
    ),
    SensitivityLevel.HIGH: (
        "Flag any change that could plausibly affect performance: loops, "
        "changed numeric arguments, collection operations, I/O calls, and "
        "recursive calls. Skip only comments, logging, and formatting."
    ),
}

DEFAULT_SENSITIVITY = SensitivityLevel.MEDIUM


@dataclass(frozen=True)
class MarkerSpan:
    name: str
    path: str
    new_range: tuple[int, int]
    old_range: tuple[int, int] | None = None
    attributes: tuple[tuple[str, str], ...] = ()
    handles_exit_points: bool = False

    def __post_init__(self):
        if self.new_range[0] > self.new_range[1]:
            raise SchemaViolation("end < start", f"span {self.name!r} new_range")
        if self.old_range is not None and self.old_range[0] > self.old_range[1]:
            raise SchemaViolation("end < start", f"span {self.name!r} old_range")
        if not _NAME_RE.match(self.name):
            raise SchemaViolation("invalid name charset", f"span {self.name!r}")


@dataclass(frozen=True)
class MarkerPlan:
    change_fingerprint: str
    spans: tuple[MarkerSpan, ...]
    backend_id: str
    sensitivity: SensitivityLevel
    skip_reason: str | None = None  # not part of the wire schema

    def __post_init__(self):
        names = [s.name for s in self.spans]
        if len(set(names)) != len(names):
            raise SchemaViolation("duplicate name", "spans")
        paths = {s.path for s in self.spans}
        if len(paths) > 1:
            raise SchemaViolation("spans reference multiple files", "spans")


def plan_to_doc(plan: MarkerPlan) -> dict:
    return {
        "fingerprint": plan.change_fingerprint,
        "spans": [
            {
                "name": s.name,
                "path": s.path,
                "new_range": {"start": s.new_range[0], "end": s.new_range[1]},
                "old_range": (
                    {"start": s.old_range[0], "end": s.old_range[1]}
                    if s.old_range
                    else None
                ),
                "attributes": dict(s.attributes),
                "handles_exit_points": s.handles_exit_points,
            }
            for s in plan.spans
        ],
        "backend": plan.backend_id,
        "sensitivity": plan.sensitivity.value,
    }


MARKER_PLAN_SCHEMA = {
    "type": "object",
    "required": ["fingerprint", "spans", "backend", "sensitivity"],
    "properties": {
        "fingerprint": {"type": "string"},
        "backend": {"type": "string"},
        "sensitivity": {"enum": ["low", "medium", "high"]},
        "spans": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "path", "new_range"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[a-z0-9_.-]+$"},
                    "path": {"type": "string"},
                    "new_range": {
                        "type": "object",
                        "required": ["start", "end"],
                        "properties": {
                            "start": {"type": "integer", "minimum": 1},
                            "end": {"type": "integer", "minimum": 1},
                        },
                    },
                    "old_range": {"type": ["object", "null"]},
                    "attributes": {"type": "object"},
                    "handles_exit_points": {"type": "boolean"},
                },
            },
        },
    },
}


def validate_plan(
    raw: dict,
    fc: FileChange,
    file_line_count: int | None = None,
) -> MarkerPlan:
    """Check a plan document against the marker-plan schema.

    Raises SchemaViolation with a path into the document; the caller
    records the change as skipped.
    """
    if not isinstance(raw, dict):
        raise SchemaViolation("document must be an object")
    for key in ("fingerprint", "spans", "backend", "sensitivity"):
        if key not in raw:
            raise SchemaViolation("missing required key", key)
    if raw["fingerprint"] != fc.fingerprint:
        raise SchemaViolation("fingerprint does not match the change", "fingerprint")
    try:
        sensitivity = SensitivityLevel(raw["sensitivity"])
    except ValueError:
        raise SchemaViolation("unknown level", "sensitivity") from None
    if not isinstance(raw["spans"], list):
        raise SchemaViolation("must be a list", "spans")

    spans: list[MarkerSpan] = []
    seen_names: set[str] = set()
    for idx, span_doc in enumerate(raw["spans"]):
        where = f"spans[{idx}]"
        if not isinstance(span_doc, dict):
            raise SchemaViolation("must be an object", where)
        for key in ("name", "path", "new_range"):
            if key not in span_doc:
                raise SchemaViolation("missing required key", f"{where}.{key}")
        name = span_doc["name"]
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise SchemaViolation("invalid name charset", f"{where}.name")
        if name in seen_names:
            raise SchemaViolation("duplicate name", f"{where}.name")
        seen_names.add(name)
        if span_doc["path"] != fc.path:
            raise SchemaViolation("span path does not match the change", f"{where}.path")
        new_range = _parse_range(span_doc["new_range"], f"{where}.new_range")
        old_range = None
        if span_doc.get("old_range") is not None:
            old_range = _parse_range(span_doc["old_range"], f"{where}.old_range")
        if file_line_count is not None and new_range[1] > file_line_count:
            raise SchemaViolation(
                f"range exceeds file length {file_line_count}", f"{where}.new_range"
            )
        attrs = span_doc.get("attributes", {})
        if not isinstance(attrs, dict):
            raise SchemaViolation("must be an object", f"{where}.attributes")
        for k, v in attrs.items():
            # attribute text ends up inside source trees; allow plain
            # labels only, never anything that could read as code
            for part in (str(k), str(v)):
                if not _ATTR_RE.match(part):
                    raise SchemaViolation(
                        f"attribute text {part!r} outside the label charset",
                        f"{where}.attributes",
                    )
        spans.append(
            MarkerSpan(
                name=name,
                path=fc.path,
                new_range=new_range,
                old_range=old_range,
                attributes=tuple(sorted((str(k), str(v)) for k, v in attrs.items())),
                handles_exit_points=bool(span_doc.get("handles_exit_points", False)),
            )
        )
    return MarkerPlan(
        change_fingerprint=fc.fingerprint,
        spans=tuple(spans),
        backend_id=str(raw["backend"]),
        sensitivity=sensitivity,
    )


def _parse_range(doc, where: str) -> tuple[int, int]:
    if not isinstance(doc, dict) or "start" not in doc or "end" not in doc:
        raise SchemaViolation("range needs start and end", where)
    try:
        start, end = int(doc["start"]), int(doc["end"])
    except (TypeError, ValueError):
        raise SchemaViolation("range bounds must be integers", where) from None
    if start < 1:
        raise SchemaViolation("lines are 1-based", where)
    if end < start:
        raise SchemaViolation("end < start", where)
    return start, end


# --- heuristic backend -------------------------------------------------

_LOOP_RE = re.compile(r"\b(for|while)\b|\.forEach\(|\.map\(|\.reduce\(|\.filter\(")
_COLLECTION_RE = re.compile(
    r"\.(push|pop|sort|splice|concat|slice|shift|unshift|reverse|append|extend)\("
    r"|\bsorted\(|\bshuffle"
)
_IO_RE = re.compile(
    r"\bfetch\(|\bopen\(|\.(read|write|query|send|recv)\w*\(|\brequests?\.|\baxios\b|\bhttp[sx]?\."
)
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")
_CALL_WITH_NUMBER_RE = re.compile(r"\w+\s*\([^()]*\d")
_COMMENT_PREFIXES = ("//", "#", "/*", "*", "*/", "--")
_LOG_RE = re.compile(r"\bconsole\.\w+\(|\blogger?\.\w+\(|\bprint\(|\blog\(")
_EXIT_RE = re.compile(r"\breturn\b|\bthrow\b|\braise\b")
_FUNC_DEF_RE = re.compile(
    r"^\s*(?:export\s+)?(?:async\s+)?function\s+(\w+)"
    r"|^\s*def\s+(\w+)"
    r"|^\s*(?:export\s+)?(?:const|let|var)\s+(\w+)\s*=\s*(?:async\s*)?(?:\(|function)"
)


def _is_noise_line(text: str) -> bool:
    stripped = text.strip()
    if not stripped:
        return True
    if any(stripped.startswith(p) for p in _COMMENT_PREFIXES):
        return True
    return bool(_LOG_RE.search(stripped))


def _numeric_skeleton(text: str) -> str:
    return _NUMBER_RE.sub("#", text.strip())


def _hunk_signals(hunk, source_lines: list[str]) -> set[str]:
    added = [text for tag, text in hunk.lines if tag == "add"]
    removed = [text for tag, text in hunk.lines if tag == "del"]
    signal_lines = [t for t in added if not _is_noise_line(t)]
    if not signal_lines:
        return set()

    signals: set[str] = set()
    for text in signal_lines:
        if _LOOP_RE.search(text):
            signals.add("loop")
        if _COLLECTION_RE.search(text):
            signals.add("collection")
        if _IO_RE.search(text):
            signals.add("io")

    removed_skeletons = {_numeric_skeleton(t): t for t in removed}
    for text in signal_lines:
        if not _CALL_WITH_NUMBER_RE.search(text):
            continue
        skeleton = _numeric_skeleton(text)
        old = removed_skeletons.get(skeleton)
        if old is not None and old.strip() != text.strip():
            signals.add("numeric_argument")

    func = _enclosing_function_name(source_lines, _first_added_line(hunk))
    if func and any(re.search(rf"\b{re.escape(func)}\s*\(", t) for t in signal_lines):
        signals.add("recursion")
    return signals


_LEVEL_SIGNALS = {
    SensitivityLevel.LOW: {"loop"},
    SensitivityLevel.MEDIUM: {"loop", "numeric_argument"},
    SensitivityLevel.HIGH: {"loop", "numeric_argument", "collection", "io", "recursion"},
}


def _first_added_line(hunk) -> int | None:
    new_line = hunk.new_start
    for tag, _ in hunk.lines:
        if tag == "add":
            return new_line
        if tag in ("context", "add"):
            new_line += 1
    return None


def _added_extent(hunk) -> tuple[int, int] | None:
    new_line = hunk.new_start
    lo = hi = None
    for tag, _ in hunk.lines:
        if tag == "add":
            if lo is None:
                lo = new_line
            hi = new_line
        if tag in ("context", "add"):
            new_line += 1
    if lo is None:
        return None
    return lo, hi


def _indent(line: str) -> int:
    return len(line) - len(line.lstrip(" \t"))


def _enclosing_function_name(lines: list[str], at: int | None) -> str | None:
    if at is None:
        return None
    for i in range(min(at, len(lines)) - 1, -1, -1):
        m = _FUNC_DEF_RE.match(lines[i])
        if m:
            return next(g for g in m.groups() if g)
    return None


def enclosing_block(lines: list[str], lo: int, hi: int) -> tuple[int, int]:
    """Smallest statement block containing lines [lo, hi] (1-based, inclusive).

    Brace-scanning for C-style sources, indentation otherwise. Falls back
    to the input range when no enclosing structure is found.
    """
    if not lines:
        return max(1, lo), max(1, hi)
    lo = min(max(1, lo), len(lines))
    hi = min(max(lo, hi), len(lines))
    content = [i for i in range(lo, hi + 1) if lines[i - 1].strip()]
    if not content:
        return lo, hi
    base_indent = min(_indent(lines[i - 1]) for i in content)

    # a changed line that itself opens a block (loop/function header) is
    # its own smallest enclosing statement
    first = min(i for i in content if _indent(lines[i - 1]) == base_indent)
    header = None
    if lines[first - 1].rstrip().endswith(("{", ":")):
        header = first
    else:
        for i in range(lo - 1, 0, -1):
            text = lines[i - 1]
            if text.strip() and _indent(text) < base_indent:
                header = i
                break
    if header is None:
        return lo, hi

    header_text = lines[header - 1]
    if header_text.rstrip().endswith("{"):
        depth = 0
        for i in range(header, len(lines) + 1):
            depth += lines[i - 1].count("{") - lines[i - 1].count("}")
            if depth == 0 and i >= header:
                return header, i
        return header, len(lines)

    # indentation block: run of lines deeper than the header
    end = hi
    for i in range(hi + 1, len(lines) + 1):
        text = lines[i - 1]
        if not text.strip():
            continue
        if _indent(text) <= _indent(header_text):
            break
        end = i
    return header, end


def _slug(path: str) -> str:
    stem = Path(path).name
    slug = re.sub(r"[^a-z0-9_.-]", "_", stem.lower())
    return slug or "file"


def heuristic_plan(
    fc: FileChange,
    source_target: str,
    s: SensitivityLevel,
    backend_id: str = "heuristic",
) -> MarkerPlan:
    """Deterministic offline planner.

    Proposes one span per hunk whose added lines match the level's
    performance-signal rules, spanning the smallest enclosing statement
    block. Comment-only and log-only hunks never produce spans.
    """
    lines = source_target.splitlines()
    spans: list[MarkerSpan] = []
    allowed = _LEVEL_SIGNALS[s]
    for idx, hunk in enumerate(fc.hunks):
        signals = _hunk_signals(hunk, lines)
        matched = sorted(signals & allowed)
        if not matched:
            continue
        extent = _added_extent(hunk)
        if extent is None:
            continue
        start, end = enclosing_block(lines, *extent)
        block_text = "\n".join(lines[start - 1 : end])
        spans.append(
            MarkerSpan(
                name=f"{_slug(fc.path)}.h{idx}",
                path=fc.path,
                new_range=(start, end),
                attributes=(
                    ("category", matched[0]),
                    ("signals", ",".join(matched)),
                ),
                handles_exit_points=bool(_EXIT_RE.search(block_text)),
            )
        )
    return MarkerPlan(
        change_fingerprint=fc.fingerprint,
        spans=tuple(spans),
        backend_id=backend_id,
        sensitivity=s,
    )


# --- backends and orchestration ----------------------------------------


class PlannerBackend(Protocol):
    backend_id: str

    def plan(self, fc: FileChange, s: SensitivityLevel) -> MarkerPlan: ...


class HeuristicBackend:
    """Pure, offline backend; resolves target source text through a callable."""

    backend_id = "heuristic"

    def __init__(self, source_resolver: Callable[[str], str]):
        self._resolve = source_resolver

    def plan(self, fc: FileChange, s: SensitivityLevel) -> MarkerPlan:
        source = self._resolve(fc.path)
        raw = plan_to_doc(heuristic_plan(fc, source, s, self.backend_id))
        # same validation gate as remote plans
        return validate_plan(raw, fc, file_line_count=len(source.splitlines()))


@dataclass(frozen=True)
class InferenceConfig:
    url: str
    api_key: str = ""
    timeout_s: float = 30.0
    rounds: int = 1  # 1 = single shot; up to 3 re-prompts with the validation error

    @classmethod
    def from_env(cls, env=os.environ) -> "InferenceConfig":
        url = env.get(ENDPOINT_ENV, "")
        if not url:
            raise BackendError(f"{ENDPOINT_ENV} is not set")
        return cls(url=url, api_key=env.get(API_KEY_ENV, ""))


class InferenceBackend:
    """Remote planner over HTTP.

    Sends the git-like rendered change, the sensitivity instructions, and
    the marker-plan schema; the response's plan document goes through
    ``validate_plan``. Responses are data, never code: nothing from the
    endpoint is ever written to a source tree.
    """

    def __init__(self, config: InferenceConfig, source_resolver=None):
        self.config = config
        self.backend_id = "inference"
        self._resolve = source_resolver
        self.requests_sent = 0
        self._lock = threading.Lock()

    def plan(self, fc: FileChange, s: SensitivityLevel) -> MarkerPlan:
        change_text = render_git_like(
            ChangeSet("A", "B", (fc,))
        )
        line_count = None
        if self._resolve is not None:
            line_count = len(self._resolve(fc.path).splitlines())
        rounds = max(1, min(self.config.rounds, 3))
        error: SchemaViolation | None = None
        for attempt in range(rounds):
            payload = {
                "instructions": s.instructions
                + (f"\nPrevious attempt failed validation: {error}" if error else ""),
                "change": change_text,
                "schema": MARKER_PLAN_SCHEMA,
            }
            doc = self._post(payload)
            try:
                return validate_plan(doc, fc, file_line_count=line_count)
            except SchemaViolation as exc:
                error = exc
        raise error

    def _post(self, payload: dict) -> dict:
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        try:
            response = httpx.post(
                self.config.url,
                json=payload,
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        with self._lock:
            self.requests_sent += 1
        if response.status_code // 100 != 2:
            raise BackendError(f"endpoint returned status {response.status_code}")
        try:
            body = response.json()
        except ValueError:
            raise SchemaViolation("response body is not JSON") from None
        if not isinstance(body, dict) or "plan" not in body:
            raise SchemaViolation("response has no 'plan' object")
        return body["plan"]


class PlanCache:
    """Directory of plan files keyed by fingerprint, level, and backend.

    Hits return a byte-identical plan document. Writes are serialized;
    concurrent readers are safe (files are written atomically via rename).
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, fingerprint: str, s: SensitivityLevel, backend_id: str) -> Path:
        return self.directory / f"{fingerprint}-{s.value}-{backend_id}.json"

    def get(self, fc: FileChange, s: SensitivityLevel, backend_id: str) -> MarkerPlan | None:
        path = self._path(fc.fingerprint, s, backend_id)
        if not path.exists():
            return None
        raw = json.loads(path.read_text(encoding="utf-8"))
        return validate_plan(raw, fc)

    def put(self, fc: FileChange, plan: MarkerPlan) -> None:
        path = self._path(fc.fingerprint, plan.sensitivity, plan.backend_id)
        payload = json.dumps(plan_to_doc(plan), indent=2, sort_keys=True)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            tmp.replace(path)


def plan_changes(
    cs: ChangeSet,
    s: SensitivityLevel,
    backend: PlannerBackend,
    cache: PlanCache | None = None,
    workers: int = 4,
) -> list[MarkerPlan]:
    """One MarkerPlan per FileChange, in ChangeSet order.

    Cache is consulted before the backend and populated after. Per-change
    failures degrade to an empty plan with a skip reason.
    """

    def plan_one(fc: FileChange) -> MarkerPlan:
        if cache is not None:
            cached = cache.get(fc, s, backend.backend_id)
            if cached is not None:
                return cached
        try:
            plan = backend.plan(fc, s)
        except SchemaViolation:
            return MarkerPlan(fc.fingerprint, (), backend.backend_id, s, "schema_violation")
        except (BackendError, OSError):
            return MarkerPlan(fc.fingerprint, (), backend.backend_id, s, "backend_error")
        if cache is not None:
            cache.put(fc, plan)
        return plan

    if not cs.file_changes:
        return []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(plan_one, cs.file_changes))
