"""Verifiable rewards for GRPO-style training on QA, grounding, and counting.

Five rule-based signals, all bounded:

* general format: exactly one think block then one answer block -> {0, 1}
* JSON format: recovery multiplier x key completeness -> [0, 1]
* accuracy: normalized exact match -> {0, 1}
* IoU: greedy-matched temporal/spatial overlap averaged over
  max(n_pred, n_gt) groups -> [0, 1]
* relative MAE: 1 - min(1, |pred - gt| / gt) -> [0, 1]

Per-sample totals combine one format component with one task component
under configurable weights (unit weights by default; the split between
format and task credit is a convention, not a fixed rule).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .extract import (
    extract_tagged,
    key_completeness,
    parse_count_answer,
    parse_event_answer,
    recover_json,
)
from .geometry import box_ciou, greedy_match, interval_iou
from .model import BoundingBox, Count, EventSegments, ParseFailure, TimeInterval

_GFORMAT_RE = re.compile(r"\s*<think>.*</think>\s*<answer>.*</answer>\s*\Z", re.DOTALL)

# Key-completeness conventions per answer shape. Positional records (plain
# JSON arrays) count as complete when their length matches the key count.
TEMPORAL_KEYS = frozenset({"start", "end"})
SPATIAL_KEYS = frozenset({"x_min", "y_min", "x_max", "y_max"})
ATTRIBUTE_KEYS = frozenset({"bbox", "label"})


class TaskKind(str, Enum):
    QA = "QA"
    TEMPORAL_GROUNDING = "TemporalGrounding"
    SPATIAL_GROUNDING = "SpatialGrounding"
    COUNTING = "Counting"


# Rollout settings of the training recipe these rewards were designed for.
# Metadata only: the engine scores completed rollouts, it never samples.
GRPO_ROLLOUT_DEFAULTS = {
    "temperature": 1.0,
    "n_rollouts": 8,
    "kl_beta": 0.1,
    "max_new_tokens_qa": 256,
    "max_new_tokens_other": 1024,
}


GROUNDING_TASKS = (TaskKind.TEMPORAL_GROUNDING, TaskKind.SPATIAL_GROUNDING)


@dataclass(frozen=True)
class RewardWeights:
    format: float = 1.0
    task: float = 1.0


@dataclass(frozen=True)
class RewardBreakdown:
    task: TaskKind
    r_gformat: float
    r_jformat: Optional[float]  # grounding tasks only
    r_task: float
    total: float
    w_format: float
    w_task: float


def reward_gformat(text: str) -> float:
    """1.0 iff the output is one think block followed by one answer block."""
    if (text.count("<think>") != 1 or text.count("</think>") != 1
            or text.count("<answer>") != 1 or text.count("</answer>") != 1):
        return 0.0
    return 1.0 if _GFORMAT_RE.fullmatch(text) else 0.0


def reward_jformat(text: str, required_keys: set[str] | frozenset[str]) -> float:
    """JSON-format reward m*s for the answer block of a grounding output.

    Builds on the general format check: without the think/answer block
    structure the reward is 0 regardless of JSON quality.
    """
    if reward_gformat(text) == 0.0:
        return 0.0
    inner = extract_tagged(text, "answer")
    if inner is None:
        return 0.0
    rec = recover_json(inner)
    if rec.m == 0.0:
        return 0.0
    s, _, _ = key_completeness(rec.value, set(required_keys))
    return rec.m * s


def reward_acc(pred: Optional[str], gt: str) -> float:
    """Exact match after trimming, whitespace collapsing, and lowercasing."""
    if pred is None:
        return 0.0
    return 1.0 if _normalize_answer(pred) == _normalize_answer(gt) else 0.0


def _normalize_answer(s: str) -> str:
    return re.sub(r"\s+", " ", s.strip()).lower()


def _clamped_ciou(a: BoundingBox, b: BoundingBox) -> float:
    # negative tail removed so match scores (and the reward) stay in [0, 1]
    return max(0.0, box_ciou(a, b))


def reward_iou(
    preds: Sequence,
    gts: Sequence,
    kind: str,
) -> float:
    """Greedy-matched overlap averaged over max(n_pred, n_gt) groups.

    ``kind`` is "temporal" (interval IoU) or "spatial" (complete IoU
    clamped to [0, 1]). Dividing by the larger side penalizes surplus and
    missing instances symmetrically. Two empty sets are a perfect 1.0.
    """
    if kind == "temporal":
        scorer = interval_iou
    elif kind == "spatial":
        scorer = _clamped_ciou
    else:
        raise ValueError(f"unknown IoU kind {kind!r}")
    if not preds and not gts:
        return 1.0
    if not preds or not gts:
        return 0.0
    match = greedy_match(preds, gts, scorer)
    return match.total_iou / max(len(preds), len(gts))


def reward_rmae(pred_count: Optional[int], gt_count: int) -> float:
    """Relative-MAE reward; falls back to exact-match accuracy when gt is 0."""
    if pred_count is None:
        return 0.0
    if gt_count == 0:
        return 1.0 if pred_count == 0 else 0.0
    return 1.0 - min(1.0, abs(pred_count - gt_count) / gt_count)


# --- composition ---------------------------------------------------------------


def _parse_interval_list(value: object) -> Optional[list[TimeInterval]]:
    if not isinstance(value, list):
        return None
    out = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            return None
        try:
            a, b = float(item[0]), float(item[1])
        except (TypeError, ValueError):
            return None
        out.append(TimeInterval(min(a, b), max(a, b)))
    return out


def _parse_box_list(value: object) -> Optional[list[BoundingBox]]:
    if not isinstance(value, list):
        return None
    out = []
    for item in value:
        if isinstance(item, dict):
            if not SPATIAL_KEYS <= item.keys():
                return None
            coords = [item["x_min"], item["y_min"], item["x_max"], item["y_max"]]
        elif isinstance(item, (list, tuple)) and len(item) == 4:
            coords = list(item)
        else:
            return None
        try:
            x0, y0, x1, y1 = (float(c) for c in coords)
        except (TypeError, ValueError):
            return None
        out.append(BoundingBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)))
    return out


def _predicted_boxes(raw_text: str) -> Optional[list[BoundingBox]]:
    inner = extract_tagged(raw_text, "answer")
    if inner is None:
        return None
    rec = recover_json(inner)
    if rec.m == 0.0:
        return None
    return _parse_box_list(rec.value)


def compute_reward(
    task: TaskKind,
    raw_text: str,
    gt: object,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Score one rollout: a format component plus the task's own reward.

    QA and counting pair the general format reward with exact-match /
    relative-MAE credit; grounding pairs the JSON-format reward with the
    IoU reward. An unparseable prediction earns task reward 0; only a gt
    payload that does not fit the task raises.
    """
    g = reward_gformat(raw_text)
    j: Optional[float] = None

    if task is TaskKind.QA:
        if not isinstance(gt, str):
            raise ValueError(f"QA ground truth must be a string, got {type(gt).__name__}")
        r_task = reward_acc(extract_tagged(raw_text, "answer"), gt)
        fmt = g
    elif task is TaskKind.COUNTING:
        if not isinstance(gt, int) or isinstance(gt, bool) or gt < 0:
            raise ValueError(f"counting ground truth must be a non-negative integer, got {gt!r}")
        parsed = parse_count_answer(raw_text)
        pred = parsed.value if isinstance(parsed, Count) else None
        r_task = reward_rmae(pred, gt)
        fmt = g
    elif task is TaskKind.TEMPORAL_GROUNDING:
        gt_intervals = _parse_interval_list(gt)
        if gt_intervals is None:
            raise ValueError("temporal grounding ground truth must be a list of [start, end] pairs")
        j = reward_jformat(raw_text, TEMPORAL_KEYS)
        parsed = parse_event_answer(raw_text)
        if isinstance(parsed, ParseFailure):
            r_task = 0.0
        else:
            assert isinstance(parsed, EventSegments)
            r_task = reward_iou(list(parsed.segments), gt_intervals, "temporal")
        fmt = j
    elif task is TaskKind.SPATIAL_GROUNDING:
        gt_boxes = _parse_box_list(gt)
        if gt_boxes is None:
            raise ValueError(
                "spatial grounding ground truth must be a list of [x_min, y_min, x_max, y_max] boxes")
        j = reward_jformat(raw_text, SPATIAL_KEYS)
        preds = _predicted_boxes(raw_text)
        r_task = 0.0 if preds is None else reward_iou(preds, gt_boxes, "spatial")
        fmt = j
    else:
        raise ValueError(f"unknown task kind {task!r}")

    total = weights.format * fmt + weights.task * r_task
    return RewardBreakdown(
        task=task,
        r_gformat=g,
        r_jformat=j,
        r_task=r_task,
        total=total,
        w_format=weights.format,
        w_task=weights.task,
    )


# --- batch wire format ----------------------------------------------------------


def compute_reward_from_request(doc: dict, weights: RewardWeights = RewardWeights()) -> dict:
    """Score one batch request {"task", "raw_text", "gt", optional "id"}.

    This is the single entry point behind both the file/stream batch
    command and the in-process bindings, so every consumer sees identical
    numbers.
    """
    if not isinstance(doc, dict):
        raise ValueError(f"expected a JSON object per request, got {type(doc).__name__}")
    missing = {"task", "raw_text", "gt"} - doc.keys()
    if missing:
        raise ValueError(f"missing fields: {sorted(missing)}")
    try:
        task = TaskKind(doc["task"])
    except ValueError:
        raise ValueError(f"unknown task {doc['task']!r}") from None
    if not isinstance(doc["raw_text"], str):
        raise ValueError("raw_text must be a string")

    breakdown = compute_reward(task, doc["raw_text"], doc["gt"], weights)
    out = breakdown_to_dict(breakdown)
    if "id" in doc:
        out = {"id": doc["id"], **out}
    return out


def breakdown_to_dict(b: RewardBreakdown) -> dict:
    return {
        "task": b.task.value,
        "r_gformat": b.r_gformat,
        "r_jformat": b.r_jformat,
        "r_task": b.r_task,
        "total": b.total,
        "w_format": b.w_format,
        "w_task": b.w_task,
    }
