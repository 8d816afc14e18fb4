"""Offline data pipeline: rollout filtering, stage review mixing, sampling.

Three composable steps, re-run before each epoch with fresh rollout
records: drop samples the reference model already solves, mix a fraction
of earlier-stage samples into the current stage (forgetting mitigation),
and draw a task- and difficulty-balanced pool for the final full-task
stage. Every step is driven by an explicit seeded generator, so outputs
are byte-reproducible from (inputs, seed) regardless of thread count.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .rewards import GROUNDING_TASKS, TaskKind

DEFAULT_PASS_THRESHOLD = 0.5  # grounding rollout counts as a pass at IoU >= 0.5
EXPECTED_ROLLOUTS = 5


@dataclass(frozen=True)
class RolloutRecord:
    """Outcomes of the reference model's rollouts for one training sample.

    ``outcomes`` holds booleans for QA/Counting samples and IoU values in
    [0, 1] for grounding samples.
    """

    sample_id: str
    task: TaskKind
    outcomes: tuple
    n_rollouts: int = EXPECTED_ROLLOUTS

    def is_grounding(self) -> bool:
        return self.task in GROUNDING_TASKS


@dataclass(frozen=True)
class StageSpec:
    name: str
    tasks: tuple[TaskKind, ...]
    epochs: int = 2
    review_fraction: float = 0.2


@dataclass(frozen=True)
class CurriculumPlan:
    """Ordered stages (easy to hard) plus the final full-task stage quotas."""

    stages: tuple[StageSpec, ...]
    quota_per_task: int
    seed: int


def default_plan(quota_per_task: int = 2500, seed: int = 0) -> CurriculumPlan:
    return CurriculumPlan(
        stages=(
            StageSpec("qa", (TaskKind.QA,)),
            StageSpec("grounding", (TaskKind.TEMPORAL_GROUNDING, TaskKind.SPATIAL_GROUNDING)),
            StageSpec("counting", (TaskKind.COUNTING,)),
        ),
        quota_per_task=quota_per_task,
        seed=seed,
    )


def _check_record(record: RolloutRecord) -> None:
    if len(record.outcomes) == 0:
        raise ValueError(f"rollout record {record.sample_id!r} has no rollouts")
    if len(record.outcomes) != record.n_rollouts:
        raise ValueError(
            f"rollout record {record.sample_id!r}: {len(record.outcomes)} outcomes "
            f"but n_rollouts={record.n_rollouts}")


def filter_samples(records: Iterable[RolloutRecord]) -> list[str]:
    """Keep sample ids the reference model has not already mastered.

    QA/Counting samples are dropped when every rollout was correct;
    grounding samples when the mean rollout IoU exceeds 0.9.
    """
    kept = []
    for record in records:
        _check_record(record)
        if record.is_grounding():
            mean_iou = sum(float(v) for v in record.outcomes) / len(record.outcomes)
            if mean_iou > 0.9:
                continue
        else:
            if all(bool(v) for v in record.outcomes):
                continue
        kept.append(record.sample_id)
    return kept


def build_stage(
    new_samples: Sequence[str],
    history_samples: Sequence[str],
    review_fraction: float = 0.2,
    seed: int = 0,
) -> list[str]:
    """One stage's training list: all new samples plus a review mix.

    floor(review_fraction * len(new_samples)) samples are drawn uniformly
    without replacement from the history (all of it if smaller), then the
    union is shuffled. Identical inputs and seed give an identical list.
    """
    if not 0.0 <= review_fraction <= 1.0:
        raise ValueError(f"review_fraction must be in [0, 1], got {review_fraction}")
    rng = random.Random(seed)
    n_review = min(int(review_fraction * len(new_samples)), len(history_samples))
    review = rng.sample(list(history_samples), n_review)
    out = list(new_samples) + review
    rng.shuffle(out)
    return out


def difficulty_of(
    record: RolloutRecord,
    pass_threshold: float = DEFAULT_PASS_THRESHOLD,
) -> int:
    """Difficulty bucket = number of passing rollouts out of five.

    A grounding rollout passes at IoU >= ``pass_threshold``; QA/Counting
    rollouts pass when correct. Bucket 0 is hardest, 5 easiest.
    """
    _check_record(record)
    if record.n_rollouts != EXPECTED_ROLLOUTS:
        raise ValueError(
            f"difficulty is defined over {EXPECTED_ROLLOUTS} rollouts, "
            f"got {record.n_rollouts} for {record.sample_id!r}")
    if record.is_grounding():
        return sum(float(v) >= pass_threshold for v in record.outcomes)
    return sum(bool(v) for v in record.outcomes)


@dataclass(frozen=True)
class FullTaskSelection:
    samples: tuple[str, ...]
    warnings: tuple[str, ...] = ()
    per_task: dict[str, int] = field(default_factory=dict)


def sample_full_task(
    pools: dict[TaskKind, dict[int, Sequence[str]]],
    quota_per_task: int,
    seed: int = 0,
) -> FullTaskSelection:
    """Draw a balanced full-task training pool.

    For each task, the quota is spread round-robin over its non-empty
    difficulty buckets (uniform draws without replacement inside a
    bucket); a bucket that runs dry simply drops out of the rotation, so
    its share flows to the others. A task whose whole pool is smaller
    than the quota yields a partial draw plus a warning.
    """
    if quota_per_task < 0:
        raise ValueError(f"quota_per_task must be >= 0, got {quota_per_task}")
    rng = random.Random(seed)

    selected: list[str] = []
    warnings: list[str] = []
    per_task: dict[str, int] = {}

    for task in sorted(pools.keys(), key=lambda t: t.value):
        buckets = {b: list(samples) for b, samples in pools[task].items() if samples}
        capacity = {b: len(samples) for b, samples in buckets.items()}
        counts = {b: 0 for b in buckets}
        order = sorted(buckets.keys())

        total = 0
        while total < quota_per_task:
            open_buckets = [b for b in order if counts[b] < capacity[b]]
            if not open_buckets:
                break
            for b in open_buckets:
                if total == quota_per_task:
                    break
                counts[b] += 1
                total += 1

        if total < quota_per_task:
            warnings.append(
                f"task {task.value}: pool exhausted, drew {total} of {quota_per_task}")

        for b in order:
            selected.extend(rng.sample(buckets[b], counts[b]))
        per_task[task.value] = total

    rng.shuffle(selected)
    return FullTaskSelection(tuple(selected), tuple(warnings), per_task)


# --- wire format -----------------------------------------------------------------


def rollout_from_dict(doc: dict) -> RolloutRecord:
    if not isinstance(doc, dict):
        raise ValueError(f"expected a JSON object per line, got {type(doc).__name__}")
    missing = {"sample_id", "task", "outcomes"} - doc.keys()
    if missing:
        raise ValueError(f"missing fields: {sorted(missing)}")
    try:
        task = TaskKind(doc["task"])
    except ValueError:
        raise ValueError(f"unknown task {doc['task']!r}") from None
    outcomes = doc["outcomes"]
    if not isinstance(outcomes, list) or not outcomes:
        raise ValueError("outcomes must be a non-empty list")
    if task in GROUNDING_TASKS:
        clean = []
        for v in outcomes:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ValueError(f"grounding outcomes must be IoU values in [0, 1], got {v!r}")
            clean.append(float(v))
        parsed = tuple(clean)
    else:
        if not all(isinstance(v, bool) for v in outcomes):
            raise ValueError("QA/Counting outcomes must be booleans")
        parsed = tuple(outcomes)
    n_rollouts = doc.get("n_rollouts", len(outcomes))
    if n_rollouts != len(outcomes):
        raise ValueError(f"n_rollouts={n_rollouts} but {len(outcomes)} outcomes given")
    return RolloutRecord(str(doc["sample_id"]), task, parsed, n_rollouts)


def rollout_to_dict(record: RolloutRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "task": record.task.value,
        "outcomes": list(record.outcomes),
        "n_rollouts": record.n_rollouts,
    }
