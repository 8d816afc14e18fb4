"""White-box counting score and instruction-following accuracy.

A sample's score couples two per-cluster quantities through a geometric
mean: localization accuracy (mean IoU of ground-truth instances with
their greedily matched predictions) and a counting penalty that scales
linearly from 1 at an exact count to 0 once the count error reaches the
ground-truth count. Event and object questions form a single cluster;
attribute questions score one cluster per attribute value and average.

Output that cannot be parsed into the required answer format scores 0 and
counts against instruction-following accuracy. Recovered-but-valid JSON
(a bracket-matched extraction that satisfies the answer schema) still
counts as following the format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .extract import (
    normalize_frame_key,
    parse_attribute_answer,
    parse_event_answer,
    parse_object_answer,
)
from .geometry import MatchResult, box_iou, greedy_match, interval_iou
from .model import (
    AttributeBoxes,
    AttributeClues,
    BoundingBox,
    CountingQuestion,
    CountTarget,
    EventClues,
    EventSegments,
    ObjectBoxes,
    ObjectClues,
    ParseFailure,
    TimeInterval,
)


@dataclass(frozen=True)
class ClusterScore:
    la: float
    cap: float
    score: float  # sqrt(la * cap)


@dataclass(frozen=True)
class WhiteBoxSampleResult:
    sample_id: str
    format_ok: bool
    per_cluster: tuple[ClusterScore, ...]
    wcs: float  # 0..100
    failure_reason: Optional[str] = None


@dataclass(frozen=True)
class TargetStats:
    n: int
    wcs_mean: float
    ifa: float


@dataclass(frozen=True)
class WhiteBoxReport:
    n_samples: int
    wcs_mean: float
    ifa: float
    per_target: dict[str, TargetStats] = field(default_factory=dict)


def localization_accuracy(match: MatchResult, n_gt: int) -> float:
    """Mean IoU over ground-truth instances; unmatched ones contribute 0."""
    if n_gt < 1:
        raise ValueError("localization accuracy needs at least one ground-truth instance")
    return match.total_iou / n_gt


def counting_penalty(n_pred: int, n_gt: int) -> float:
    """max{0, 1 - |n_pred - n_gt| / n_gt}: zero once the error reaches the count."""
    if n_gt < 1:
        raise ValueError("counting penalty needs at least one ground-truth instance")
    return max(0.0, 1.0 - abs(n_pred - n_gt) / n_gt)


def _failure(sample_id: str, reason: str) -> WhiteBoxSampleResult:
    return WhiteBoxSampleResult(sample_id, False, (), 0.0, failure_reason=reason)


def _single_cluster_result(sample_id: str, la: float, cap: float) -> WhiteBoxSampleResult:
    score = math.sqrt(la * cap)
    return WhiteBoxSampleResult(
        sample_id, True, (ClusterScore(la, cap, score),), 100.0 * score)


def score_event(
    pred: EventSegments | ParseFailure,
    gt: Sequence[TimeInterval],
    sample_id: str = "",
) -> WhiteBoxSampleResult:
    if isinstance(pred, ParseFailure):
        return _failure(sample_id, pred.reason)
    match = greedy_match(pred.segments, gt, interval_iou)
    la = localization_accuracy(match, len(gt))
    cap = counting_penalty(len(pred.segments), len(gt))
    return _single_cluster_result(sample_id, la, cap)


def _frame_gated_iou(pred: tuple[str, BoundingBox], gt: tuple[str, BoundingBox]) -> float:
    # a correct box on the wrong frame is wrong grounding, so it scores 0
    if pred[0] != gt[0]:
        return 0.0
    return box_iou(pred[1], gt[1])


def _flatten_boxes(by_frame: dict[str, tuple[BoundingBox, ...]]) -> list[tuple[str, BoundingBox]]:
    flat = []
    for frame, boxes in by_frame.items():
        for box in boxes:
            flat.append((frame, box))
    return flat


def score_object(
    pred: ObjectBoxes | ParseFailure,
    gt: Sequence[tuple[str, BoundingBox]],
    clue_frames: Sequence[str] = (),
    sample_id: str = "",
) -> WhiteBoxSampleResult:
    """Score first-appearance box predictions against object clues.

    Predictions are flattened to (frame, box) instances and matched
    against clues with frame-gated IoU; every predicted box counts toward
    the counting penalty, whichever frame it was placed on.
    """
    if isinstance(pred, ParseFailure):
        return _failure(sample_id, pred.reason)
    gt_instances = [(normalize_frame_key(frame), box) for frame, box in gt]
    pred_instances = _flatten_boxes(pred.by_frame)
    match = greedy_match(pred_instances, gt_instances, _frame_gated_iou)
    la = localization_accuracy(match, len(gt_instances))
    cap = counting_penalty(len(pred_instances), len(gt_instances))
    return _single_cluster_result(sample_id, la, cap)


def score_attribute(
    pred: AttributeBoxes | ParseFailure,
    gt: dict[str, Sequence[tuple[str, BoundingBox]]],
    clue_frames: Sequence[str] = (),
    sample_id: str = "",
) -> WhiteBoxSampleResult:
    """Score labeled box predictions against attribute clusters.

    Predicted boxes are grouped by label into predicted clusters. Cluster
    correspondence is greedy on localization accuracy (computed per pair
    via frame-gated greedy box matching), with index tie-breaks over
    label-sorted cluster lists. Ground-truth clusters left unmatched score
    la=0 and cap=0; surplus predicted clusters are ignored since the score
    averages over ground-truth clusters only.
    """
    if isinstance(pred, ParseFailure):
        return _failure(sample_id, pred.reason)

    gt_labels = sorted(gt.keys())
    gt_clusters = [
        [(normalize_frame_key(frame), box) for frame, box in gt[label]] for label in gt_labels]
    if any(not cluster for cluster in gt_clusters) or not gt_clusters:
        raise ValueError("attribute scoring needs non-empty ground-truth clusters")

    pred_groups: dict[str, list[tuple[str, BoundingBox]]] = {}
    for frame, items in pred.by_frame.items():
        for box, label in items:
            pred_groups.setdefault(label, []).append((frame, box))
    pred_labels = sorted(pred_groups.keys())
    pred_clusters = [pred_groups[label] for label in pred_labels]

    # pairwise la between every predicted and ground-truth cluster
    la_matrix = [
        [greedy_match(pc, gc, _frame_gated_iou).total_iou / len(gc) for pc in pred_clusters]
        for gc in gt_clusters
    ]

    candidates = [
        (la_matrix[gi][pi], gi, pi)
        for gi in range(len(gt_clusters))
        for pi in range(len(pred_clusters))
    ]
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    assigned: dict[int, int] = {}
    used_pred: set[int] = set()
    n_pairs = min(len(gt_clusters), len(pred_clusters))
    for la, gi, pi in candidates:
        if len(assigned) == n_pairs:
            break
        if gi in assigned or pi in used_pred:
            continue
        assigned[gi] = pi
        used_pred.add(pi)

    per_cluster = []
    for gi, gc in enumerate(gt_clusters):
        if gi in assigned:
            pi = assigned[gi]
            la = la_matrix[gi][pi]
            cap = counting_penalty(len(pred_clusters[pi]), len(gc))
        else:
            la = 0.0
            cap = counting_penalty(0, len(gc))  # == 0.0
        per_cluster.append(ClusterScore(la, cap, math.sqrt(la * cap)))

    wcs = 100.0 * sum(c.score for c in per_cluster) / len(per_cluster)
    return WhiteBoxSampleResult(sample_id, True, tuple(per_cluster), wcs)


def score_question(q: CountingQuestion, text: str) -> WhiteBoxSampleResult:
    """Parse and score one white-box model output for its question."""
    if q.target is CountTarget.EVENT:
        if not isinstance(q.clues, EventClues):
            raise ValueError(f"question {q.id}: Event target with {type(q.clues).__name__}")
        return score_event(_narrow(parse_event_answer(text), EventSegments),
                           q.clues.intervals, sample_id=q.id)
    if q.target is CountTarget.OBJECT:
        if not isinstance(q.clues, ObjectClues):
            raise ValueError(f"question {q.id}: Object target with {type(q.clues).__name__}")
        gt = [(fb.frame_id, fb.box) for fb in q.clues.boxes]
        return score_object(_narrow(parse_object_answer(text), ObjectBoxes),
                            gt, q.clue_frames, sample_id=q.id)
    if not isinstance(q.clues, AttributeClues):
        raise ValueError(f"question {q.id}: Attribute target with {type(q.clues).__name__}")
    gt_clusters = {
        label: [(fb.frame_id, fb.box) for fb in members]
        for label, members in q.clues.clusters.items()
    }
    return score_attribute(_narrow(parse_attribute_answer(text), AttributeBoxes),
                           gt_clusters, q.clue_frames, sample_id=q.id)


def _narrow(parsed, expected_type):
    if isinstance(parsed, (expected_type, ParseFailure)):
        return parsed
    raise ValueError(f"unexpected parse result {type(parsed).__name__}")


def aggregate_whitebox(
    items: Iterable[tuple[CountTarget, WhiteBoxSampleResult]],
) -> WhiteBoxReport:
    """Mean score (failures enter as 0) and instruction-following rate, per target too."""
    items = list(items)
    if not items:
        raise ValueError("cannot aggregate an empty result list")

    def stats(group: list[WhiteBoxSampleResult]) -> TargetStats:
        n = len(group)
        return TargetStats(
            n=n,
            wcs_mean=sum(r.wcs for r in group) / n,
            ifa=100.0 * sum(r.format_ok for r in group) / n,
        )

    by_target: dict[str, list[WhiteBoxSampleResult]] = {}
    for target, result in items:
        by_target.setdefault(target.value, []).append(result)

    overall = stats([r for _, r in items])
    return WhiteBoxReport(
        n_samples=overall.n,
        wcs_mean=overall.wcs_mean,
        ifa=overall.ifa,
        per_target={t: stats(group) for t, group in sorted(by_target.items())},
    )


def report_to_dict(report: WhiteBoxReport) -> dict:
    return {
        "n_samples": report.n_samples,
        "wcs": report.wcs_mean,
        "ifa": report.ifa,
        "per_target": {
            t: {"n": s.n, "wcs": s.wcs_mean, "ifa": s.ifa}
            for t, s in report.per_target.items()
        },
    }


def report_to_table(report: WhiteBoxReport) -> str:
    lines = [
        f"{'group':<12}{'n':>6}{'wcs':>10}{'ifa':>10}",
        f"{'-' * 11:<12}{'-' * 5:>6}{'-' * 9:>10}{'-' * 9:>10}",
        f"{'overall':<12}{report.n_samples:>6}{report.wcs_mean:>10.2f}{report.ifa:>10.2f}",
    ]
    for t, s in report.per_target.items():
        lines.append(f"{t:<12}{s.n:>6}{s.wcs_mean:>10.2f}{s.ifa:>10.2f}")
    return "\n".join(lines)
