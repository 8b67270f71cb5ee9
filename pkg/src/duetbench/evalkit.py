"""Instrumentation quality scoring against ground truth.

Hit-based metrics at a k-line boundary-distance threshold: precision
(generated spans that hit a relevant change), recall (relevant changes
hit at least once), specificity (neutral changes left alone). Distance
between two ranges is the larger of the two boundary offsets, so start
and end drift are penalized symmetrically. Undefined ratios are None,
never 0 — averaging them as zeros would bias reports.

``brute_force_metrics`` is a deliberately naive re-implementation used
as an oracle in tests; keep it independent of ``compute_metrics``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .changeset import FileChange, GroundTruthChange

INF = math.inf


@dataclass(frozen=True)
class GeneratedSpan:
    path: str
    start: int
    end: int
    name: str = ""


@dataclass(frozen=True)
class HitMatrix:
    k: int
    entries: tuple[tuple[str, str | None, float], ...]  # (span name, change id, distance)


@dataclass(frozen=True)
class LocalizationReport:
    k: int
    precision_at_k: float | None
    recall_at_k: float | None
    specificity_at_k: float | None
    localization_errors: tuple[float, ...]
    n_generated: int
    n_relevant: int
    n_neutral: int

    def to_doc(self) -> dict:
        return {
            "k": self.k,
            "precision_at_k": self.precision_at_k,
            "recall_at_k": self.recall_at_k,
            "specificity_at_k": self.specificity_at_k,
            "localization_errors": list(self.localization_errors),
            "n_generated": self.n_generated,
            "n_relevant": self.n_relevant,
            "n_neutral": self.n_neutral,
        }


def span_distance(gen: tuple[int, int], ideal: tuple[int, int]) -> int:
    """Line distance between two ranges in the same file."""
    return max(abs(gen[0] - ideal[0]), abs(gen[1] - ideal[1]))


def change_region(fc: FileChange) -> tuple[int, int]:
    """Target-version extent touched by a change; used for neutral hits."""
    starts = [h.new_start for h in fc.hunks]
    ends = [h.new_start + max(h.new_count, 1) - 1 for h in fc.hunks]
    return min(starts), max(ends)


def hit_matrix(
    generated: Sequence[GeneratedSpan],
    gt: Sequence[GroundTruthChange],
    k: int,
) -> HitMatrix:
    """Nearest relevant ground-truth change per generated span; ties break
    to the lowest change_id."""
    relevant = [g for g in gt if g.relevant]
    entries = []
    for span in generated:
        best_id, best_dist = None, INF
        for change in sorted(relevant, key=lambda g: g.change_id):
            if change.path != span.path:
                continue
            dist = span_distance((span.start, span.end), change.ideal_span)
            if dist < best_dist:
                best_id, best_dist = change.change_id, dist
        entries.append((span.name, best_id if best_dist <= k else None, best_dist))
    return HitMatrix(k=k, entries=tuple(entries))


def compute_metrics(
    generated: Sequence[GeneratedSpan],
    gt: Sequence[GroundTruthChange],
    k: int,
    regions: Mapping[str, tuple[int, int]] | None = None,
) -> LocalizationReport:
    """Score generated spans against labeled changes.

    ``regions`` maps neutral change ids to their affected target-version
    line range (derive with ``change_region``); without it neutral
    changes without spans in their file count as correctly skipped.
    """
    regions = regions or {}
    relevant = [g for g in gt if g.relevant]
    neutral = [g for g in gt if not g.relevant]

    def dist_to_relevant(span: GeneratedSpan) -> float:
        candidates = [
            span_distance((span.start, span.end), g.ideal_span)
            for g in relevant
            if g.path == span.path
        ]
        return min(candidates, default=INF)

    distances = [dist_to_relevant(s) for s in generated]
    hits = sum(1 for d in distances if d <= k)
    precision = hits / len(generated) if generated else None

    recalled = 0
    for g in relevant:
        if any(
            s.path == g.path
            and span_distance((s.start, s.end), g.ideal_span) <= k
            for s in generated
        ):
            recalled += 1
    recall = recalled / len(relevant) if relevant else None

    clean = 0
    for g in neutral:
        region = regions.get(g.change_id)
        touched = any(
            s.path == g.path
            and region is not None
            and span_distance((s.start, s.end), region) <= k
            for s in generated
        )
        if not touched:
            clean += 1
    specificity = clean / len(neutral) if neutral else None

    return LocalizationReport(
        k=k,
        precision_at_k=precision,
        recall_at_k=recall,
        specificity_at_k=specificity,
        localization_errors=tuple(d for d in distances if d != INF),
        n_generated=len(generated),
        n_relevant=len(relevant),
        n_neutral=len(neutral),
    )


def brute_force_metrics(
    generated: Sequence[GeneratedSpan],
    gt: Sequence[GroundTruthChange],
    k: int,
    regions: Mapping[str, tuple[int, int]] | None = None,
) -> LocalizationReport:
    """Independent oracle: exhaustive pairwise distance table, no shortcuts."""
    regions = dict(regions or {})
    table: dict[tuple[int, str], float] = {}
    for i, span in enumerate(generated):
        for g in gt:
            if g.path != span.path:
                d = INF
            elif g.relevant:
                d = max(
                    abs(span.start - g.ideal_span[0]), abs(span.end - g.ideal_span[1])
                )
            elif g.change_id in regions:
                r = regions[g.change_id]
                d = max(abs(span.start - r[0]), abs(span.end - r[1]))
            else:
                d = INF
            table[(i, g.change_id)] = d

    relevant_ids = [g.change_id for g in gt if g.relevant]
    neutral_ids = [g.change_id for g in gt if not g.relevant]

    hits = 0
    errors = []
    for i in range(len(generated)):
        ds = [table[(i, cid)] for cid in relevant_ids]
        best = INF
        for d in ds:
            if d < best:
                best = d
        if best <= k:
            hits += 1
        if best != INF:
            errors.append(best)
    precision = hits / len(generated) if len(generated) > 0 else None

    recalled = 0
    for cid in relevant_ids:
        found = False
        for i in range(len(generated)):
            if table[(i, cid)] <= k:
                found = True
        if found:
            recalled += 1
    recall = recalled / len(relevant_ids) if len(relevant_ids) > 0 else None

    clean = 0
    for cid in neutral_ids:
        touched = False
        for i in range(len(generated)):
            if table[(i, cid)] <= k:
                touched = True
        if not touched:
            clean += 1
    specificity = clean / len(neutral_ids) if len(neutral_ids) > 0 else None

    return LocalizationReport(
        k=k,
        precision_at_k=precision,
        recall_at_k=recall,
        specificity_at_k=specificity,
        localization_errors=tuple(errors),
        n_generated=len(generated),
        n_relevant=len(relevant_ids),
        n_neutral=len(neutral_ids),
    )


def average_reports(
    reports: Mapping[str, LocalizationReport],
) -> dict[str, dict[str, float | None]]:
    """Macro (mean of per-case ratios) and micro (pooled counts) averages.

    Undefined per-case ratios are excluded from the macro mean.
    """

    def macro(values):
        defined = [v for v in values if v is not None]
        return sum(defined) / len(defined) if defined else None

    macro_avg = {
        "precision_at_k": macro([r.precision_at_k for r in reports.values()]),
        "recall_at_k": macro([r.recall_at_k for r in reports.values()]),
        "specificity_at_k": macro([r.specificity_at_k for r in reports.values()]),
    }

    def ratio(num, den):
        return num / den if den else None

    gen = sum(r.n_generated for r in reports.values())
    rel = sum(r.n_relevant for r in reports.values())
    neu = sum(r.n_neutral for r in reports.values())
    hit_count = sum(
        round((r.precision_at_k or 0) * r.n_generated) for r in reports.values()
    )
    recall_count = sum(
        round((r.recall_at_k or 0) * r.n_relevant) for r in reports.values()
    )
    clean_count = sum(
        round((r.specificity_at_k or 0) * r.n_neutral) for r in reports.values()
    )
    micro_avg = {
        "precision_at_k": ratio(hit_count, gen),
        "recall_at_k": ratio(recall_count, rel),
        "specificity_at_k": ratio(clean_count, neu),
    }
    return {"macro": macro_avg, "micro": micro_avg}


@dataclass
class SeverityGrid:
    severities: list[int]
    cells: dict[tuple[int, str], str] = field(default_factory=dict)  # (sev, source) -> verdict
    errors: dict[tuple[int, str], str] = field(default_factory=dict)

    def minimal_detected(self, source: str) -> int | None:
        """Smallest nonzero severity whose verdict is regression."""
        for sev in sorted(s for s in self.severities if s > 0):
            if self.cells.get((sev, source)) == "regression":
                return sev
        return None

    def to_doc(self) -> dict:
        sources = sorted({src for _, src in self.cells})
        return {
            "severities": self.severities,
            "legend": ["no_change", "regression", "improvement"],
            "grid": {
                src: {
                    str(sev): self.cells.get((sev, src))
                    for sev in self.severities
                }
                for src in sources
            },
            "errors": {f"{sev}:{src}": msg for (sev, src), msg in self.errors.items()},
        }


def severity_sweep(
    severities: Sequence[int],
    cell_runner: Callable[[int], tuple[Mapping[str, str], Mapping[str, str]]],
) -> SeverityGrid:
    """Run one benchmark cell per severity and tabulate verdicts.

    ``cell_runner(severity)`` returns (span-level verdicts keyed by span
    source, endpoint-level verdicts keyed by endpoint id). A failing cell
    is recorded and the sweep continues.
    """
    grid = SeverityGrid(severities=list(severities))
    for sev in severities:
        try:
            span_verdicts, endpoint_verdicts = cell_runner(sev)
        except Exception as exc:  # noqa: BLE001 — cells are isolated by design
            grid.errors[(sev, "*")] = f"{type(exc).__name__}: {exc}"
            continue
        for source, v in span_verdicts.items():
            grid.cells[(sev, f"span:{source}")] = v
        for source, v in endpoint_verdicts.items():
            grid.cells[(sev, f"endpoint:{source}")] = v
    return grid
