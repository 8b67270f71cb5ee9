"""Change extraction: unified diffs and annotated JSON changes, normalized to a ChangeSet.

Both input formats converge on the same immutable model so downstream
stages never care where a change came from. Fingerprints are stable
cache keys: sha256 over a canonical serialization of path + hunks.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import MalformedDiff, SchemaError

_HUNK_HEADER = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")

# Git metadata we refuse to instrument: only plain text edits are supported.
_REJECTED_PREFIXES = (
    "Binary files ",
    "GIT binary patch",
    "rename from ",
    "rename to ",
    "old mode ",
    "new mode ",
)


@dataclass(frozen=True)
class Hunk:
    """One contiguous edit region, exactly as emitted by ``diff -u``.

    ``lines`` holds (tag, text) pairs with tag in {"context", "add", "del"}.
    """

    old_start: int
    old_count: int
    new_start: int
    new_count: int
    lines: tuple[tuple[str, str], ...]

    def validate(self) -> None:
        old = sum(1 for tag, _ in self.lines if tag in ("context", "del"))
        new = sum(1 for tag, _ in self.lines if tag in ("context", "add"))
        if old != self.old_count:
            raise MalformedDiff(
                f"hunk claims old_count={self.old_count} but has {old} old-side lines"
            )
        if new != self.new_count:
            raise MalformedDiff(
                f"hunk claims new_count={self.new_count} but has {new} new-side lines"
            )

    def canonical(self) -> str:
        head = f"@@ -{self.old_start},{self.old_count} +{self.new_start},{self.new_count} @@\n"
        body = "".join(f"{_TAG_CHAR[tag]}{text}\n" for tag, text in self.lines)
        return head + body


_TAG_CHAR = {"context": " ", "add": "+", "del": "-"}
_CHAR_TAG = {" ": "context", "+": "add", "-": "del"}


@dataclass(frozen=True)
class FileChange:
    path: str
    hunks: tuple[Hunk, ...]
    fingerprint: str = ""

    def __post_init__(self):
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", fingerprint(self))

    def added_ranges(self) -> list[tuple[int, int]]:
        """Target-version line ranges touched by added lines, one per run of adds."""
        ranges = []
        for hunk in self.hunks:
            new_line = hunk.new_start
            run_start = None
            for tag, _ in hunk.lines:
                if tag == "add":
                    if run_start is None:
                        run_start = new_line
                    new_line += 1
                else:
                    if run_start is not None:
                        ranges.append((run_start, new_line - 1))
                        run_start = None
                    if tag == "context":
                        new_line += 1
            if run_start is not None:
                ranges.append((run_start, new_line - 1))
        return ranges


@dataclass(frozen=True)
class ChangeSet:
    base_version_id: str
    target_version_id: str
    file_changes: tuple[FileChange, ...]

    def __post_init__(self):
        paths = [fc.path for fc in self.file_changes]
        if len(set(paths)) != len(paths):
            raise MalformedDiff("duplicate file path in change set")
        if paths != sorted(paths):
            object.__setattr__(
                self,
                "file_changes",
                tuple(sorted(self.file_changes, key=lambda fc: fc.path)),
            )

    def by_path(self, path: str) -> FileChange | None:
        for fc in self.file_changes:
            if fc.path == path:
                return fc
        return None


@dataclass(frozen=True)
class GroundTruthChange:
    path: str
    change_id: str
    relevant: bool
    ideal_span: tuple[int, int] | None = None
    note: str = ""

    def __post_init__(self):
        if self.relevant and self.ideal_span is None:
            raise SchemaError("relevant change must carry an ideal_span", self.change_id)
        if not self.relevant and self.ideal_span is not None:
            raise SchemaError("neutral change must not carry an ideal_span", self.change_id)
        if self.ideal_span is not None and self.ideal_span[0] > self.ideal_span[1]:
            raise SchemaError("ideal_span start > end", self.change_id)


def fingerprint(change: FileChange) -> str:
    """Stable 64-hex-char digest of (path, hunk contents)."""
    h = hashlib.sha256()
    h.update(change.path.encode("utf-8") + b"\n")
    for hunk in change.hunks:
        h.update(hunk.canonical().encode("utf-8"))
    return h.hexdigest()


def parse_unified_diff(
    text: str,
    base_version_id: str = "A",
    target_version_id: str = "B",
) -> ChangeSet:
    """Parse standard ``--- a/x / +++ b/x / @@`` unified diff text.

    Binary patches, renames, and mode changes raise MalformedDiff; the
    instrumenter only handles text source.
    """
    lines = text.splitlines()
    changes: list[FileChange] = []

    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        for prefix in _REJECTED_PREFIXES:
            if line.startswith(prefix):
                raise MalformedDiff(f"unsupported diff entry: {prefix.strip()!r}", i + 1)
        if line.startswith("--- "):
            old_path = _strip_path(line[4:], i + 1)
            i += 1
            if i >= n or not lines[i].startswith("+++ "):
                raise MalformedDiff("'---' header without matching '+++'", i)
            new_path = _strip_path(lines[i][4:], i + 1)
            path = new_path if new_path is not None else old_path
            if path is None:
                raise MalformedDiff("both sides of a file header are /dev/null", i + 1)
            i += 1
            hunks, i = _parse_hunks(lines, i)
            if not hunks:
                raise MalformedDiff(f"file header for {path!r} with no hunks", i)
            changes.append(FileChange(path=path, hunks=tuple(hunks)))
        else:
            # diff --git / index / context chatter between files
            i += 1

    return ChangeSet(base_version_id, target_version_id, tuple(changes))


def _strip_path(raw: str, line_no: int) -> str | None:
    raw = raw.split("\t")[0].strip()
    if raw == "/dev/null":
        return None
    for prefix in ("a/", "b/"):
        if raw.startswith(prefix):
            return raw[len(prefix):]
    if not raw:
        raise MalformedDiff("empty path in file header", line_no)
    return raw


def _parse_hunks(lines: list[str], i: int) -> tuple[list[Hunk], int]:
    hunks: list[Hunk] = []
    n = len(lines)
    while i < n:
        m = _HUNK_HEADER.match(lines[i])
        if not m:
            break
        old_start = int(m.group(1))
        old_count = int(m.group(2)) if m.group(2) is not None else 1
        new_start = int(m.group(3))
        new_count = int(m.group(4)) if m.group(4) is not None else 1
        header_line = i + 1
        i += 1
        body: list[tuple[str, str]] = []
        seen_old = seen_new = 0
        while i < n and (seen_old < old_count or seen_new < new_count):
            raw = lines[i]
            if raw.startswith("\\"):
                # "\ No newline at end of file" — metadata, not content
                i += 1
                continue
            if raw == "":
                raw = " "  # some tools emit bare empty lines for blank context
            tag = _CHAR_TAG.get(raw[0])
            if tag is None:
                break
            if tag in ("context", "del"):
                seen_old += 1
            if tag in ("context", "add"):
                seen_new += 1
            body.append((tag, raw[1:]))
            i += 1
        hunk = Hunk(old_start, old_count, new_start, new_count, tuple(body))
        try:
            hunk.validate()
        except MalformedDiff as exc:
            raise MalformedDiff(str(exc), header_line) from None
        if hunks and hunk.old_start < hunks[-1].old_start + hunks[-1].old_count:
            raise MalformedDiff("overlapping or unsorted hunks", header_line)
        hunks.append(hunk)
        # swallow trailing no-newline marker
        while i < n and lines[i].startswith("\\"):
            i += 1
    return hunks, i


def render_git_like(cs: ChangeSet) -> str:
    """Render a ChangeSet back to unified diff text.

    Round-trips: ``parse_unified_diff(render_git_like(cs))`` equals ``cs``
    field for field, fingerprints included.
    """
    out: list[str] = []
    for fc in cs.file_changes:
        out.append(f"--- a/{fc.path}")
        out.append(f"+++ b/{fc.path}")
        for hunk in fc.hunks:
            out.append(
                f"@@ -{hunk.old_start},{hunk.old_count} "
                f"+{hunk.new_start},{hunk.new_count} @@"
            )
            for tag, text in hunk.lines:
                out.append(f"{_TAG_CHAR[tag]}{text}")
    if not out:
        return ""
    return "\n".join(out) + "\n"


def parse_json_changes(doc: Any) -> tuple[ChangeSet, list[GroundTruthChange]]:
    """Parse the annotated JSON change format.

    Schema: ``{"base": str, "target": str, "changes": [{"id", "path",
    "diff", "relevant", "ideal_span", "note"}]}``. The embedded diffs are
    per-change unified diffs; ground truth entries link back by id.
    """
    if not isinstance(doc, dict):
        raise SchemaError("document must be an object")
    for key in ("base", "target", "changes"):
        if key not in doc:
            raise SchemaError("missing required key", key)
    if not isinstance(doc["changes"], list):
        raise SchemaError("must be a list", "changes")

    file_changes: dict[str, list[Hunk]] = {}
    ground_truth: list[GroundTruthChange] = []
    for idx, entry in enumerate(doc["changes"]):
        where = f"changes[{idx}]"
        if not isinstance(entry, dict):
            raise SchemaError("must be an object", where)
        for key in ("id", "path", "diff", "relevant"):
            if key not in entry:
                raise SchemaError("missing required key", f"{where}.{key}")
        if not isinstance(entry["relevant"], bool):
            raise SchemaError("must be a boolean", f"{where}.relevant")
        span_doc = entry.get("ideal_span")
        if entry["relevant"] and span_doc is None:
            raise SchemaError("relevant change requires ideal_span", f"{where}.ideal_span")
        if not entry["relevant"] and span_doc is not None:
            raise SchemaError("neutral change must not set ideal_span", f"{where}.ideal_span")
        ideal_span = None
        if span_doc is not None:
            if not isinstance(span_doc, dict) or "start" not in span_doc or "end" not in span_doc:
                raise SchemaError("ideal_span needs start and end", f"{where}.ideal_span")
            ideal_span = (int(span_doc["start"]), int(span_doc["end"]))
            if ideal_span[0] > ideal_span[1]:
                raise SchemaError("start > end", f"{where}.ideal_span")

        try:
            sub = parse_unified_diff(entry["diff"])
        except MalformedDiff as exc:
            raise SchemaError(f"embedded diff invalid: {exc}", f"{where}.diff") from None
        for fc in sub.file_changes:
            if fc.path != entry["path"]:
                raise SchemaError(
                    f"embedded diff touches {fc.path!r}, expected {entry['path']!r}",
                    f"{where}.diff",
                )
            file_changes.setdefault(fc.path, []).extend(fc.hunks)

        ground_truth.append(
            GroundTruthChange(
                path=str(entry["path"]),
                change_id=str(entry["id"]),
                relevant=entry["relevant"],
                ideal_span=ideal_span,
                note=str(entry.get("note", "")),
            )
        )

    merged = tuple(
        FileChange(path=path, hunks=tuple(sorted(hunks, key=lambda h: h.old_start)))
        for path, hunks in sorted(file_changes.items())
    )
    for fc in merged:
        starts_ends = [(h.old_start, h.old_start + h.old_count) for h in fc.hunks]
        for (s1, e1), (s2, _) in zip(starts_ends, starts_ends[1:]):
            if s2 < e1:
                raise SchemaError(f"overlapping hunks for {fc.path!r}", "changes")
    cs = ChangeSet(str(doc["base"]), str(doc["target"]), merged)
    return cs, ground_truth


def changeset_to_doc(cs: ChangeSet) -> dict:
    """Serializable form used by the CLI stage files."""
    return {
        "base": cs.base_version_id,
        "target": cs.target_version_id,
        "files": [
            {
                "path": fc.path,
                "fingerprint": fc.fingerprint,
                "hunks": [
                    {
                        "old_start": h.old_start,
                        "old_count": h.old_count,
                        "new_start": h.new_start,
                        "new_count": h.new_count,
                        "lines": [[tag, text] for tag, text in h.lines],
                    }
                    for h in fc.hunks
                ],
            }
            for fc in cs.file_changes
        ],
    }


def changeset_from_doc(doc: dict) -> ChangeSet:
    files = tuple(
        FileChange(
            path=f["path"],
            hunks=tuple(
                Hunk(
                    h["old_start"],
                    h["old_count"],
                    h["new_start"],
                    h["new_count"],
                    tuple((tag, text) for tag, text in h["lines"]),
                )
                for h in f["hunks"]
            ),
        )
        for f in doc["files"]
    )
    return ChangeSet(doc["base"], doc["target"], files)
