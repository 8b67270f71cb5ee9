"""Symmetric source instrumentation driven by marker plans.

Insertion is line-based text splicing guided by a language adapter:
original lines are never modified, every inserted line ends with a
sentinel comment (``<prefix> duet-span:<name>``) so stripping restores
the original file byte for byte. A span is applied to both trees or to
neither; after insertion every modified file must pass the adapter's
syntax check or its spans are reverted in both trees.
"""

from __future__ import annotations

import datetime
import json
import re
import shutil
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .changeset import ChangeSet, FileChange
from .errors import DuetBenchError, RangeOutOfBounds, SentinelCorrupted
from .planner import MarkerPlan, MarkerSpan

TOOL_VERSION = "0.1.0"

SENTINEL = "duet-span:"
_SENTINEL_NAME = r"[a-z0-9_.-]+"

APPLIED = "applied"
SKIPPED_ASYMMETRIC = "skipped_asymmetric"
SKIPPED_SYNTAX = "skipped_syntax"
SKIPPED_UNMAPPABLE = "skipped_unmappable"


class UnwrappableRange(DuetBenchError):
    """Exit wrapping is required but impossible at this indentation."""


@dataclass(frozen=True)
class LanguageAdapter:
    id: str
    span_begin_template: str      # placeholders: {name}, {attributes}
    span_end_template: str        # placeholder: {name}
    exit_wrap_open: str           # placeholder: {name}
    exit_wrap_close: str          # placeholder: {name}; must end the span
    exit_keywords: tuple[str, ...]
    syntax_check_command: tuple[str, ...]  # "{file}" placeholder
    comment_prefix: str
    indent_sensitive: bool = False

    def exit_pattern(self) -> re.Pattern:
        return re.compile("|".join(rf"\b{k}\b" for k in self.exit_keywords))

    def sentinel(self, name: str) -> str:
        return f"{self.comment_prefix} {SENTINEL}{name}"

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "span_begin_template": self.span_begin_template,
            "span_end_template": self.span_end_template,
            "exit_wrap_open": self.exit_wrap_open,
            "exit_wrap_close": self.exit_wrap_close,
            "exit_keywords": list(self.exit_keywords),
            "syntax_check_command": list(self.syntax_check_command),
            "comment_prefix": self.comment_prefix,
            "indent_sensitive": self.indent_sensitive,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "LanguageAdapter":
        return cls(
            id=doc["id"],
            span_begin_template=doc["span_begin_template"],
            span_end_template=doc["span_end_template"],
            exit_wrap_open=doc["exit_wrap_open"],
            exit_wrap_close=doc["exit_wrap_close"],
            exit_keywords=tuple(doc["exit_keywords"]),
            syntax_check_command=tuple(doc["syntax_check_command"]),
            comment_prefix=doc["comment_prefix"],
            indent_sensitive=bool(doc.get("indent_sensitive", False)),
        )


JAVASCRIPT_ADAPTER = LanguageAdapter(
    id="javascript",
    span_begin_template='globalThis.__duet_begin?.("{name}", {attributes});',
    span_end_template='globalThis.__duet_end?.("{name}");',
    exit_wrap_open="try {{",
    exit_wrap_close='}} finally {{ globalThis.__duet_end?.("{name}"); }}',
    exit_keywords=("return", "throw"),
    syntax_check_command=("node", "--check", "{file}"),
    comment_prefix="//",
)

PYTHON_ADAPTER = LanguageAdapter(
    id="python",
    span_begin_template="__duet_begin({name!r}, {attributes})",
    span_end_template="__duet_end({name!r})",
    exit_wrap_open="",
    exit_wrap_close="",
    # try/finally cannot be spliced into Python without reindenting the
    # body, which would break byte-exact stripping; spans with early
    # exits rely on the recorder closing open spans at request end
    exit_keywords=(),
    syntax_check_command=("python3", "-m", "py_compile", "{file}"),
    comment_prefix="#",
    indent_sensitive=True,
)

BUILTIN_ADAPTERS = {a.id: a for a in (JAVASCRIPT_ADAPTER, PYTHON_ADAPTER)}


def load_adapter(path_or_id: str) -> LanguageAdapter:
    if path_or_id in BUILTIN_ADAPTERS:
        return BUILTIN_ADAPTERS[path_or_id]
    return LanguageAdapter.from_doc(json.loads(Path(path_or_id).read_text()))


@dataclass(frozen=True)
class InstrumentedTree:
    root_dir: Path
    version_tag: str
    applied_spans: tuple[tuple[str, tuple[int, int]], ...]
    skipped: tuple[tuple[str, str], ...]


@dataclass
class InsertionReport:
    statuses: dict[str, str] = field(default_factory=dict)  # span name -> status
    reasons: dict[str, str] = field(default_factory=dict)
    adapter_id: str = ""
    run_id: str = ""
    plans: list[dict] = field(default_factory=list)

    def count(self, status: str) -> int:
        return sum(1 for s in self.statuses.values() if s == status)

    def to_doc(self) -> dict:
        applied = sorted(n for n, s in self.statuses.items() if s == APPLIED)
        skipped = sorted(
            (
                {"name": n, "status": s, "reason": self.reasons.get(n, s)}
                for n, s in self.statuses.items()
                if s != APPLIED
            ),
            key=lambda d: d["name"],
        )
        return {
            "run_id": self.run_id,
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "adapter": self.adapter_id,
            "plans": self.plans,
            "applied": applied,
            "skipped": list(skipped),
            "tool_version": TOOL_VERSION,
        }


def map_new_to_old(fc: FileChange, line: int) -> int | None:
    """Map one target-version line number to base-version coordinates.

    Returns None for lines that only exist in the target (added lines).
    """
    delta = 0
    for hunk in fc.hunks:
        if line < hunk.new_start:
            break
        if line < hunk.new_start + hunk.new_count:
            old, new = hunk.old_start, hunk.new_start
            for tag, _ in hunk.lines:
                if tag == "context":
                    if new == line:
                        return old
                    old += 1
                    new += 1
                elif tag == "add":
                    if new == line:
                        return None
                    new += 1
                else:
                    old += 1
            return None
        delta += hunk.new_count - hunk.old_count
    return line - delta


def _map_boundary(fc: FileChange, line: int, is_start: bool) -> int | None:
    """Map a span boundary, tolerating replacement hunks.

    A boundary on a replaced line (del+add group) snaps to the old-side
    region of that group. A boundary strictly inside an added-only run
    has no base-version counterpart.
    """
    direct = map_new_to_old(fc, line)
    if direct is not None:
        return direct
    for hunk in fc.hunks:
        if not (hunk.new_start <= line < hunk.new_start + hunk.new_count):
            continue
        # group consecutive non-context lines; dels precede adds
        old, new = hunk.old_start, hunk.new_start
        group_old_start = group_old_end = None
        idx = 0
        entries = list(hunk.lines)
        while idx < len(entries):
            tag, _ = entries[idx]
            if tag == "context":
                old += 1
                new += 1
                idx += 1
                continue
            group_old_start, dels, adds = old, 0, 0
            while idx < len(entries) and entries[idx][0] != "context":
                if entries[idx][0] == "del":
                    dels += 1
                    old += 1
                else:
                    adds += 1
                idx += 1
            if new <= line < new + adds:
                if dels == 0:
                    return None  # pure insertion
                group_old_end = group_old_start + dels - 1
                return group_old_start if is_start else group_old_end
            new += adds
    return None


def map_to_old_coordinates(
    span: MarkerSpan, fc: FileChange | None
) -> tuple[int, int] | None:
    """Base-version range for a span, or None when unmappable."""
    if span.old_range is not None:
        return span.old_range
    if fc is None:
        return None
    start = _map_boundary(fc, span.new_range[0], True)
    end = _map_boundary(fc, span.new_range[1], False)
    if start is None or end is None or start > end:
        return None
    return start, end


def _indent_of(line: str) -> str:
    return line[: len(line) - len(line.lstrip(" \t"))]


def insert_span(
    file_text: str,
    name: str,
    range_: tuple[int, int],
    adapter: LanguageAdapter,
    attributes: dict[str, str] | None = None,
) -> str:
    """Insert begin/end hooks (or an exit wrapper) around a 1-based line range.

    Original lines are byte-preserved; all inserted lines carry the
    sentinel marker so they can be stripped again.
    """
    start, end = range_
    had_trailing_newline = file_text.endswith("\n")
    lines = file_text.split("\n")
    if had_trailing_newline:
        lines = lines[:-1]
    if start < 1 or end < start or end > len(lines):
        raise RangeOutOfBounds(f"span {name!r}: range {range_} outside 1..{len(lines)}")

    attrs_json = json.dumps(attributes or {}, sort_keys=True)
    body = lines[start - 1 : end]
    needs_wrap = bool(
        adapter.exit_keywords and adapter.exit_pattern().search("\n".join(body))
    )
    sentinel = adapter.sentinel(name)

    if adapter.indent_sensitive:
        base_indent = min(
            (_indent_of(l) for l in body if l.strip()), key=len, default=""
        )
        if needs_wrap:
            # indentation-block languages cannot take a spliced wrapper
            # without reindenting the body
            raise UnwrappableRange(
                f"span {name!r}: adapter {adapter.id!r} cannot wrap exit points"
            )
        base_indent = min(
            (_indent_of(l) for l in body if l.strip()), key=len, default=""
        )
        inserted_open = [
            f"{base_indent}{adapter.span_begin_template.format(name=name, attributes=attrs_json)}  {sentinel}"
        ]
        inserted_close = [
            f"{base_indent}{adapter.span_end_template.format(name=name)}  {sentinel}"
        ]
    else:
        begin = f"{adapter.span_begin_template.format(name=name, attributes=attrs_json)} {sentinel}"
        if needs_wrap:
            inserted_open = [begin, f"{adapter.exit_wrap_open.format(name=name)} {sentinel}"]
            inserted_close = [f"{adapter.exit_wrap_close.format(name=name)} {sentinel}"]
        else:
            inserted_open = [begin]
            inserted_close = [f"{adapter.span_end_template.format(name=name)} {sentinel}"]

    out = lines[: start - 1] + inserted_open + body + inserted_close + lines[end:]
    text = "\n".join(out)
    return text + "\n" if had_trailing_newline else text


def _sentinel_line_re(adapter: LanguageAdapter) -> re.Pattern:
    return re.compile(
        rf"^.*{re.escape(adapter.comment_prefix)} {SENTINEL}{_SENTINEL_NAME}$"
    )


def strip_text(file_text: str, adapter: LanguageAdapter) -> str:
    """Remove every sentinel-marked line; error on tampered sentinels."""
    pattern = _sentinel_line_re(adapter)
    had_trailing_newline = file_text.endswith("\n")
    lines = file_text.split("\n")
    if had_trailing_newline:
        lines = lines[:-1]
    kept = []
    for idx, line in enumerate(lines, 1):
        if SENTINEL in line:
            if not pattern.match(line):
                raise SentinelCorrupted(f"line {idx}: malformed sentinel: {line!r}")
            continue
        kept.append(line)
    text = "\n".join(kept)
    return text + "\n" if had_trailing_newline else text


def strip_instrumentation(
    tree: str | Path, adapter: LanguageAdapter, out_dir: str | Path
) -> Path:
    """Copy a tree with all instrumentation removed; byte-identical originals."""
    tree = Path(tree)
    out_dir = Path(out_dir)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    shutil.copytree(tree, out_dir)
    for path in sorted(out_dir.rglob("*")):
        if not path.is_file():
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            continue
        if SENTINEL in text:
            path.write_text(strip_text(text, adapter), encoding="utf-8")
    return out_dir


def run_syntax_check(adapter: LanguageAdapter, file_path: Path) -> bool:
    argv = [part.replace("{file}", str(file_path)) for part in adapter.syntax_check_command]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=60)
    except FileNotFoundError:
        raise DuetBenchError(
            f"syntax check binary {argv[0]!r} not found for adapter {adapter.id!r}"
        ) from None
    return proc.returncode == 0


def _ranges_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def apply_plan_symmetric(
    tree_a: str | Path,
    tree_b: str | Path,
    plans: list[MarkerPlan],
    adapter: LanguageAdapter,
    changeset: ChangeSet | None = None,
    out_dir: str | Path = "out",
    run_id: str = "run",
    syntax_workers: int = 4,
) -> tuple[InstrumentedTree, InstrumentedTree, InsertionReport]:
    """Apply marker plans to copies of both trees, symmetrically.

    Every span lands in both trees with the same name or in neither.
    Output layout: ``<out_dir>/{A,B}/...`` plus ``<out_dir>/metadata.json``.
    """
    from .planner import plan_to_doc

    tree_a, tree_b = Path(tree_a), Path(tree_b)
    out = Path(out_dir)
    out_a, out_b = out / "A", out / "B"
    for src, dst in ((tree_a, out_a), (tree_b, out_b)):
        if dst.exists():
            shutil.rmtree(dst)
        shutil.copytree(src, dst)

    report = InsertionReport(adapter_id=adapter.id, run_id=run_id)
    report.plans = [plan_to_doc(p) for p in plans]
    applied: list[tuple[str, tuple[int, int]]] = []
    applied_old: list[tuple[str, tuple[int, int]]] = []
    modified_files: dict[str, tuple[str, str]] = {}  # path -> original (A, B) texts

    for plan in plans:
        if not plan.spans:
            continue
        path = plan.spans[0].path
        fc = changeset.by_path(path) if changeset else None
        file_b = out_b / path
        if not file_b.exists():
            for span in plan.spans:
                report.statuses[span.name] = SKIPPED_UNMAPPABLE
                report.reasons[span.name] = "file missing in target tree"
            continue
        file_a = out_a / path
        text_b = file_b.read_text(encoding="utf-8")
        if file_a.exists():
            text_a = file_a.read_text(encoding="utf-8")
        else:
            for span in plan.spans:
                report.statuses[span.name] = SKIPPED_UNMAPPABLE
                report.reasons[span.name] = "file missing in base tree"
            continue
        original = (text_a, text_b)

        # resolve old-coordinate ranges first; insertion order is
        # bottom-up so earlier insertions don't shift later line numbers
        resolved = []
        for span in plan.spans:
            old_range = map_to_old_coordinates(span, fc)
            if old_range is None:
                report.statuses[span.name] = SKIPPED_UNMAPPABLE
                report.reasons[span.name] = "no base-version mapping"
                continue
            resolved.append((span, old_range))

        taken_new: list[tuple[int, int]] = []
        taken_old: list[tuple[int, int]] = []
        kept = []
        for span, old_range in sorted(resolved, key=lambda r: r[0].new_range):
            if any(_ranges_overlap(span.new_range, t) for t in taken_new) or any(
                _ranges_overlap(old_range, t) for t in taken_old
            ):
                report.statuses[span.name] = SKIPPED_ASYMMETRIC
                report.reasons[span.name] = "overlaps an earlier span"
                continue
            taken_new.append(span.new_range)
            taken_old.append(old_range)
            kept.append((span, old_range))

        file_applied = []
        for span, old_range in sorted(
            kept, key=lambda r: r[0].new_range[0], reverse=True
        ):
            attrs = dict(span.attributes)
            try:
                new_b = insert_span(text_b, span.name, span.new_range, adapter, attrs)
                new_a = insert_span(text_a, span.name, old_range, adapter, attrs)
            except (RangeOutOfBounds, UnwrappableRange) as exc:
                report.statuses[span.name] = (
                    SKIPPED_UNMAPPABLE
                    if isinstance(exc, UnwrappableRange)
                    else SKIPPED_ASYMMETRIC
                )
                report.reasons[span.name] = str(exc)
                continue
            text_a, text_b = new_a, new_b
            report.statuses[span.name] = APPLIED
            file_applied.append((span.name, span.new_range, old_range))

        if file_applied:
            file_a.write_text(text_a, encoding="utf-8")
            file_b.write_text(text_b, encoding="utf-8")
            modified_files[path] = original
            for name, new_range, old_range in file_applied:
                applied.append((name, new_range))
                applied_old.append((name, old_range))

    # syntax gate: a failure on either side reverts the file in both trees
    def check(path: str) -> tuple[str, bool]:
        ok = run_syntax_check(adapter, out_a / path) and run_syntax_check(
            adapter, out_b / path
        )
        return path, ok

    if modified_files:
        with ThreadPoolExecutor(max_workers=max(1, syntax_workers)) as pool:
            results = dict(pool.map(check, modified_files))
        for path, ok in results.items():
            if ok:
                continue
            text_a, text_b = modified_files[path]
            (out_a / path).write_text(text_a, encoding="utf-8")
            (out_b / path).write_text(text_b, encoding="utf-8")
            for plan in plans:
                for span in plan.spans:
                    if span.path == path and report.statuses.get(span.name) == APPLIED:
                        report.statuses[span.name] = SKIPPED_SYNTAX
                        report.reasons[span.name] = "syntax check failed"
            applied = [(n, r) for n, r in applied if report.statuses.get(n) == APPLIED]
            applied_old = [
                (n, r) for n, r in applied_old if report.statuses.get(n) == APPLIED
            ]

    skipped = tuple(
        (name, report.reasons.get(name, status))
        for name, status in sorted(report.statuses.items())
        if status != APPLIED
    )
    tree_a_out = InstrumentedTree(out_a, "A", tuple(applied_old), skipped)
    tree_b_out = InstrumentedTree(out_b, "B", tuple(applied), skipped)

    (out / "metadata.json").write_text(
        json.dumps(report.to_doc(), indent=2), encoding="utf-8"
    )
    return tree_a_out, tree_b_out, report
