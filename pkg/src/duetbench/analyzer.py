"""Statistical engine for duet results.

Relative per-pair changes, bootstrap percentile intervals over the
relative median, intersect-zero verdicts, and distribution similarity
(Hellinger distance, Q-Q exports) for A/A overhead checks.

Quantile rule everywhere: linear interpolation between order statistics
(numpy's "linear" method).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientData, ZeroBaseline

Verdict = str  # "no_change" | "regression" | "improvement"

DEFAULT_LEVEL = 0.95
DEFAULT_RESAMPLES = 10_000
DEFAULT_HELLINGER_BINS = 50


@dataclass(frozen=True)
class RelativeChangeSeries:
    """Per-pair relative changes in percent: (x_B / x_A - 1) * 100."""

    values: tuple[float, ...]
    source: str = ""


@dataclass(frozen=True)
class DetectionResult:
    relative_median: float
    ci_lower: float
    ci_upper: float
    level: float
    resamples: int
    seed: int
    verdict: Verdict
    n: int
    source: str = ""

    def to_doc(self) -> dict:
        return {
            "median_pct": self.relative_median,
            "ci": [self.ci_lower, self.ci_upper],
            "level": self.level,
            "resamples": self.resamples,
            "verdict": self.verdict,
            "n_pairs": self.n,
        }


@dataclass(frozen=True)
class DistributionComparison:
    hellinger: float
    bins: int
    qq_points: tuple[tuple[int, float, float], ...]


def relative_changes(
    pairs: Iterable[tuple[float, float]], source: str = ""
) -> RelativeChangeSeries:
    """Δ per pair; pairs are (x_A, x_B) with x_A > 0."""
    values = []
    for x_a, x_b in pairs:
        if x_a == 0:
            raise ZeroBaseline(f"x_A == 0 in source {source!r}")
        values.append((x_b / x_a - 1.0) * 100.0)
    return RelativeChangeSeries(tuple(values), source)


def bootstrap_ci_median(
    series: RelativeChangeSeries | Sequence[float],
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> DetectionResult:
    """Percentile bootstrap interval for the median of the series.

    Resamples with replacement, takes the median of each resample, and
    reads the (1-level)/2 and 1-(1-level)/2 quantiles of the resampled
    medians. Deterministic for a fixed seed.
    """
    source = series.source if isinstance(series, RelativeChangeSeries) else ""
    values = np.asarray(
        series.values if isinstance(series, RelativeChangeSeries) else series,
        dtype=np.float64,
    )
    n = values.size
    if n < 2:
        raise InsufficientData(f"need at least 2 values, got {n}")
    if resamples < 100:
        raise InsufficientData(f"need at least 100 resamples, got {resamples}")
    if not np.all(np.isfinite(values)):
        raise InsufficientData("series contains non-finite values")

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    medians = np.median(values[idx], axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(medians, [alpha, 1.0 - alpha], method="linear")
    point = float(np.median(values))
    result = DetectionResult(
        relative_median=point,
        ci_lower=float(lo),
        ci_upper=float(hi),
        level=level,
        resamples=resamples,
        seed=seed,
        verdict="",
        n=n,
        source=source,
    )
    return DetectionResult(**{**result.__dict__, "verdict": verdict(result)})


def verdict(result: DetectionResult) -> Verdict:
    """Intersect-zero rule: positive interval = B slower = regression."""
    if result.ci_lower > 0:
        return "regression"
    if result.ci_upper < 0:
        return "improvement"
    return "no_change"


def aggregate_verdicts(per_span: Sequence[DetectionResult | Verdict]) -> Verdict:
    """A change is reported if at least one measurement point shows one.

    Regression dominates improvement when spans disagree.
    """
    if not per_span:
        raise InsufficientData("no detection results to aggregate")
    verdicts = [r.verdict if isinstance(r, DetectionResult) else r for r in per_span]
    if "regression" in verdicts:
        return "regression"
    if "improvement" in verdicts:
        return "improvement"
    return "no_change"


def hellinger(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    bins: int = DEFAULT_HELLINGER_BINS,
) -> float:
    """Hellinger distance between two empirical distributions.

    Shared equal-width bins over the pooled range; H = sqrt(1 - sum(sqrt(p*q))).
    0 = identical histograms, 1 = disjoint supports.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InsufficientData("both samples must be non-empty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        hi = lo + 1.0  # all mass in one bin either way
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(a, bins=edges)[0].astype(np.float64) / a.size
    q = np.histogram(b, bins=edges)[0].astype(np.float64) / b.size
    # sqrt(1 - sum(sqrt(p*q))) in the numerically exact-at-zero form
    # sqrt(0.5 * sum((sqrt(p) - sqrt(q))^2))
    h = np.sqrt(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return float(np.clip(h, 0.0, 1.0))


def qq_points(
    sample_a: Sequence[float], sample_b: Sequence[float]
) -> list[tuple[int, float, float]]:
    """Quantile pairs at percentiles 1..99 with step 1."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InsufficientData("both samples must be non-empty")
    percentiles = np.arange(1, 100)
    qa = np.quantile(a, percentiles / 100.0, method="linear")
    qb = np.quantile(b, percentiles / 100.0, method="linear")
    return [(int(p), float(x), float(y)) for p, x, y in zip(percentiles, qa, qb)]


def compare_distributions(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    bins: int = DEFAULT_HELLINGER_BINS,
) -> DistributionComparison:
    return DistributionComparison(
        hellinger=hellinger(sample_a, sample_b, bins),
        bins=bins,
        qq_points=tuple(qq_points(sample_a, sample_b)),
    )
