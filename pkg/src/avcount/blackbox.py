"""End-to-end counting metrics: Acc, OBOA, MAE, RMSE with breakdowns.

The Long and Ref settings share this code path; they differ only in which
prediction file the caller scores. Parse failures count as wrong answers
and contribute a configurable fallback count (default 0) to the error
metrics, so a model cannot improve its MAE by emitting garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .model import Count, CountTarget, ParseFailure, ParsedAnswer, QueryModality

DEFAULT_COUNT_BUCKETS: tuple[tuple[int, Optional[int]], ...] = (
    (1, 5), (6, 10), (11, 20), (21, None))


@dataclass(frozen=True)
class SampleScore:
    """Per-sample black-box outcome plus the attributes used for breakdowns."""

    sample_id: str
    correct: bool
    off_by_one: bool
    abs_err: float
    parse_failed: bool
    target: Optional[CountTarget] = None
    modality: Optional[QueryModality] = None
    gt_count: Optional[int] = None
    pred_count: Optional[int] = None


@dataclass(frozen=True)
class MetricBlock:
    n: int
    acc: float
    oboa: float
    mae: float
    rmse: float


@dataclass(frozen=True)
class BlackBoxReport:
    n_samples: int
    n_parse_failures: int
    acc: float
    oboa: float
    mae: float
    rmse: float
    breakdowns: dict[str, dict[str, MetricBlock]] = field(default_factory=dict)


def score_sample(pred: ParsedAnswer, gt_count: int, fallback: int = 0) -> tuple[bool, bool, float]:
    """Score one counting prediction: (correct, off_by_one, abs_err).

    A ParseFailure is wrong in both accuracy senses and enters the error
    metrics as if the model had answered ``fallback``.
    """
    if isinstance(pred, Count):
        err = abs(pred.value - gt_count)
        return pred.value == gt_count, err <= 1, float(err)
    if isinstance(pred, ParseFailure):
        return False, False, float(abs(fallback - gt_count))
    raise ValueError(f"black-box scoring expects Count or ParseFailure, got {type(pred).__name__}")


def count_bucket(
    gt_count: int,
    buckets: Sequence[tuple[int, Optional[int]]] = DEFAULT_COUNT_BUCKETS,
) -> Optional[str]:
    """Map a ground-truth count to its range bucket label, e.g. "6-10" or ">20"."""
    for lo, hi in buckets:
        if hi is None:
            if gt_count >= lo:
                return f">{lo - 1}"
        elif lo <= gt_count <= hi:
            return f"{lo}-{hi}"
    return None


def _metric_block(scores: Sequence[SampleScore]) -> MetricBlock:
    n = len(scores)
    acc = 100.0 * sum(s.correct for s in scores) / n
    oboa = 100.0 * sum(s.off_by_one for s in scores) / n
    mae = sum(s.abs_err for s in scores) / n
    rmse = math.sqrt(sum(s.abs_err * s.abs_err for s in scores) / n)
    return MetricBlock(n=n, acc=acc, oboa=oboa, mae=mae, rmse=rmse)


def aggregate(
    scores: Iterable[SampleScore],
    buckets: Sequence[tuple[int, Optional[int]]] = DEFAULT_COUNT_BUCKETS,
) -> BlackBoxReport:
    """Reduce per-sample scores to the headline metrics and breakdowns.

    Breakdowns are emitted per count target, per query modality, and per
    ground-truth count range; samples lacking an attribute (or falling
    outside every bucket) are skipped in that dimension only.
    """
    scores = list(scores)
    if not scores:
        raise ValueError("cannot aggregate an empty sample list")

    overall = _metric_block(scores)

    by_dim: dict[str, dict[str, list[SampleScore]]] = {
        "target": {}, "modality": {}, "count_range": {}}
    for s in scores:
        if s.target is not None:
            by_dim["target"].setdefault(s.target.value, []).append(s)
        if s.modality is not None:
            by_dim["modality"].setdefault(s.modality.value, []).append(s)
        if s.gt_count is not None:
            bucket = count_bucket(s.gt_count, buckets)
            if bucket is not None:
                by_dim["count_range"].setdefault(bucket, []).append(s)

    breakdowns = {
        dim: {bucket: _metric_block(group) for bucket, group in sorted(groups.items())}
        for dim, groups in by_dim.items()
        if groups
    }

    return BlackBoxReport(
        n_samples=overall.n,
        n_parse_failures=sum(s.parse_failed for s in scores),
        acc=overall.acc,
        oboa=overall.oboa,
        mae=overall.mae,
        rmse=overall.rmse,
        breakdowns=breakdowns,
    )


def report_to_dict(report: BlackBoxReport) -> dict:
    def block(b: MetricBlock) -> dict:
        return {"n": b.n, "acc": b.acc, "oboa": b.oboa, "mae": b.mae, "rmse": b.rmse}

    return {
        "n_samples": report.n_samples,
        "n_parse_failures": report.n_parse_failures,
        "acc": report.acc,
        "oboa": report.oboa,
        "mae": report.mae,
        "rmse": report.rmse,
        "breakdowns": {
            dim: {bucket: block(b) for bucket, b in groups.items()}
            for dim, groups in report.breakdowns.items()
        },
    }


def report_to_table(report: BlackBoxReport) -> str:
    """Render the report as an aligned plain-text table."""
    rows = [("overall", "", report.n_samples, report.acc, report.oboa, report.mae, report.rmse)]
    for dim, groups in report.breakdowns.items():
        for bucket, b in groups.items():
            rows.append((dim, bucket, b.n, b.acc, b.oboa, b.mae, b.rmse))

    header = ("group", "bucket", "n", "acc", "oboa", "mae", "rmse")
    table = [header] + [
        (dim, bucket, str(n), f"{acc:.2f}", f"{oboa:.2f}", f"{mae:.3f}", f"{rmse:.3f}")
        for dim, bucket, n, acc, oboa, mae, rmse in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append(f"parse failures: {report.n_parse_failures}/{report.n_samples}")
    return "\n".join(lines)
