"""IoU kernels and one-to-one instance matching.

The production matcher is greedy (highest pairwise score first); an
exhaustive optimal matcher exists only as a test oracle. Matching is
fully deterministic: score ties break on the lower ground-truth index,
then the lower prediction index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Sequence, TypeVar

from .model import BoundingBox, TimeInterval

P = TypeVar("P")
G = TypeVar("G")

PairScorer = Callable[[P, G], float]


@dataclass(frozen=True)
class MatchResult:
    """One-to-one assignment between predictions and ground truths.

    Every index appears exactly once across ``pairs`` and the unmatched
    lists; ``total_iou`` is the sum of the matched pair scores.
    """

    pairs: tuple[tuple[int, int, float], ...]  # (gt_index, pred_index, iou)
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]
    total_iou: float


def interval_iou(a: TimeInterval, b: TimeInterval) -> float:
    """Temporal IoU. Identical zero-length intervals count as a perfect hit."""
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter < 0.0:
        inter = 0.0
    union = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter
    if union <= 0.0:
        # both are points: identical -> 1, distinct -> 0
        return 1.0 if (a.start_s, a.end_s) == (b.start_s, b.end_s) else 0.0
    return inter / union


def _box_intersection(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Spatial IoU. Degenerate boxes have zero area; identical ones score 1."""
    inter = _box_intersection(a, b)
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 1.0 if (a.x_min, a.y_min, a.x_max, a.y_max) == (b.x_min, b.y_min, b.x_max, b.y_max) \
            else 0.0
    return inter / union


def box_ciou(a: BoundingBox, b: BoundingBox) -> float:
    """Complete IoU: plain IoU minus center-distance and aspect-ratio penalties.

    ciou = iou - rho^2 / c^2 - alpha * v, where rho is the center distance,
    c the diagonal of the smallest enclosing box,
    v = (4/pi^2) * (atan(w_b/h_b) - atan(w_a/h_a))^2 and
    alpha = v / ((1 - iou) + v). Zero-height boxes use atan(w/0) := pi/2.
    Identical boxes score exactly 1.0.
    """
    iou = box_iou(a, b)

    enclose_w = max(a.x_max, b.x_max) - min(a.x_min, b.x_min)
    enclose_h = max(a.y_max, b.y_max) - min(a.y_min, b.y_min)
    c2 = enclose_w * enclose_w + enclose_h * enclose_h
    if c2 <= 0.0:
        # both boxes are the same point
        return iou

    ax = (a.x_min + a.x_max) / 2.0
    ay = (a.y_min + a.y_max) / 2.0
    bx = (b.x_min + b.x_max) / 2.0
    by = (b.y_min + b.y_max) / 2.0
    rho2 = (ax - bx) ** 2 + (ay - by) ** 2

    v = (4.0 / math.pi**2) * (_aspect_atan(b) - _aspect_atan(a)) ** 2
    denom = (1.0 - iou) + v
    alpha = v / denom if denom > 0.0 else 0.0

    return iou - rho2 / c2 - alpha * v


def _aspect_atan(box: BoundingBox) -> float:
    w = box.x_max - box.x_min
    h = box.y_max - box.y_min
    if h <= 0.0:
        return math.pi / 2.0 if w > 0.0 else 0.0
    return math.atan(w / h)


def greedy_match(
    preds: Sequence[P],
    gts: Sequence[G],
    iou: PairScorer,
) -> MatchResult:
    """Greedily build a one-to-one matching by descending pairwise score.

    All pairwise scores are computed up front, then the highest-scoring
    pair with both sides unused is taken until one side is exhausted.
    Zero-score pairs are still assignable, so the number of pairs always
    equals min(len(preds), len(gts)): match quality lives in the scores
    while count error is carried separately by the counting penalty.
    """
    scored = [
        (iou(pred, gt), gi, pi)
        for gi, gt in enumerate(gts)
        for pi, pred in enumerate(preds)
    ]
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))

    used_gt = [False] * len(gts)
    used_pred = [False] * len(preds)
    pairs: list[tuple[int, int, float]] = []
    n_pairs = min(len(preds), len(gts))
    for score, gi, pi in scored:
        if len(pairs) == n_pairs:
            break
        if used_gt[gi] or used_pred[pi]:
            continue
        used_gt[gi] = True
        used_pred[pi] = True
        pairs.append((gi, pi, score))

    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=tuple(i for i, used in enumerate(used_gt) if not used),
        unmatched_pred=tuple(i for i, used in enumerate(used_pred) if not used),
        total_iou=sum(score for _, _, score in pairs),
    )


def optimal_match_bruteforce(
    preds: Sequence[P],
    gts: Sequence[G],
    iou: PairScorer,
    max_side: int = 8,
) -> MatchResult:
    """Exhaustively find the assignment maximizing total score (test oracle).

    Factorial in the smaller side; refuses above ``max_side`` to keep the
    guard explicit. Not part of any production scoring path.
    """
    if min(len(preds), len(gts)) > max_side:
        raise ValueError(
            f"brute-force matching refused: min side {min(len(preds), len(gts))} > {max_side}")

    scores = [[iou(pred, gt) for pred in preds] for gt in gts]
    n_gt, n_pred = len(gts), len(preds)

    best_total = -1.0
    best_pairs: tuple[tuple[int, int, float], ...] = ()
    if n_pred <= n_gt:
        # injectively assign each prediction to a distinct gt
        for gt_sel in permutations(range(n_gt), n_pred):
            total = sum(scores[g][p] for p, g in enumerate(gt_sel))
            if total > best_total:
                best_total = total
                best_pairs = tuple((g, p, scores[g][p]) for p, g in enumerate(gt_sel))
    else:
        for pred_sel in permutations(range(n_pred), n_gt):
            total = sum(scores[g][p] for g, p in enumerate(pred_sel))
            if total > best_total:
                best_total = total
                best_pairs = tuple((g, p, scores[g][p]) for g, p in enumerate(pred_sel))

    matched_gt = {g for g, _, _ in best_pairs}
    matched_pred = {p for _, p, _ in best_pairs}
    return MatchResult(
        pairs=tuple(sorted(best_pairs)),
        unmatched_gt=tuple(i for i in range(n_gt) if i not in matched_gt),
        unmatched_pred=tuple(i for i in range(n_pred) if i not in matched_pred),
        total_iou=best_total,
    )
