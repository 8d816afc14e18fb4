"""Scoring, rewards, and data-curriculum tooling for audio-visual counting."""

__version__ = "0.1.0"

from .extract import (
    JsonRecovery,
    extract_tagged,
    key_completeness,
    parse_attribute_answer,
    parse_count_answer,
    parse_event_answer,
    parse_object_answer,
    recover_json,
)
from .geometry import (
    MatchResult,
    box_ciou,
    box_iou,
    greedy_match,
    interval_iou,
    optimal_match_bruteforce,
)
from .model import (
    AttributeBoxes,
    AttributeClues,
    BoundingBox,
    ClueSet,
    Count,
    CountingQuestion,
    CountTarget,
    EventClues,
    EventSegments,
    FrameBox,
    ObjectBoxes,
    ObjectClues,
    ParsedAnswer,
    ParseFailure,
    QueryModality,
    RawModelOutput,
    Setting,
    TimeInterval,
    Violation,
    validate_question,
)
from .rewards import (
    RewardBreakdown,
    RewardWeights,
    TaskKind,
    compute_reward,
    compute_reward_from_request,
    reward_acc,
    reward_gformat,
    reward_iou,
    reward_jformat,
    reward_rmae,
)

__all__ = [
    "__version__",
    # model
    "AttributeBoxes", "AttributeClues", "BoundingBox", "ClueSet", "Count",
    "CountingQuestion", "CountTarget", "EventClues", "EventSegments", "FrameBox",
    "ObjectBoxes", "ObjectClues", "ParsedAnswer", "ParseFailure", "QueryModality",
    "RawModelOutput", "Setting", "TimeInterval", "Violation", "validate_question",
    # extract
    "JsonRecovery", "extract_tagged", "key_completeness", "recover_json",
    "parse_count_answer", "parse_event_answer", "parse_object_answer",
    "parse_attribute_answer",
    # geometry
    "MatchResult", "box_ciou", "box_iou", "greedy_match", "interval_iou",
    "optimal_match_bruteforce",
    # rewards
    "RewardBreakdown", "RewardWeights", "TaskKind", "compute_reward",
    "compute_reward_from_request", "reward_acc", "reward_gformat", "reward_iou",
    "reward_jformat", "reward_rmae",
]
