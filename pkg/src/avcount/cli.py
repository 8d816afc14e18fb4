"""Command-line harness for batch evaluation, rewards, and data curriculum.

Every command is deterministic given its inputs, flags, and seed, and
drops a run manifest next to its outputs. Exit codes: 0 success, 2 schema
error (with file:line diagnostics), 3 sample-id join error, 4 internal
refusal.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__, baseline, blackbox, whitebox
from .curriculum import (
    difficulty_of,
    filter_samples,
    build_stage,
    rollout_from_dict,
    sample_full_task,
)
from .dataio import JoinError, JsonlError, RunManifest, dump_jsonl_line, read_jsonl, write_jsonl
from .extract import parse_count_answer
from .model import (
    Count,
    Setting,
    question_from_dict,
    raw_output_from_dict,
    raw_output_to_dict,
    validate_question,
)
from .rewards import RewardWeights, compute_reward_from_request

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_JOIN = 3
EXIT_REFUSAL = 4

_TEMPLATES = {
    "blackbox": "blackbox.txt",
    "event": "whitebox_event.txt",
    "object": "whitebox_object.txt",
    "attribute": "whitebox_attribute.txt",
}


def _load_questions(path: str):
    questions = read_jsonl(path, question_from_dict)
    by_id = {}
    for q in questions:
        by_id[q.id] = q
    return questions, by_id


def _join_predictions(preds, by_id, setting: Setting):
    """Predictions of one setting, in file order; unknown ids are a join error."""
    selected = [p for p in preds if p.setting is setting]
    unknown = sorted({p.sample_id for p in selected} - by_id.keys())
    if unknown:
        raise JoinError(f"predictions reference unknown sample ids: {unknown[:5]}"
                        + (" ..." if len(unknown) > 5 else ""))
    if not selected:
        raise JoinError(f"no predictions with setting {setting.value!r}")
    return selected


def cmd_eval_blackbox(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, by_id = _load_questions(args.annotations)
    preds = read_jsonl(args.predictions, raw_output_from_dict)
    setting = Setting.LONG_ACC if args.setting == "long" else Setting.REF_ACC
    selected = _join_predictions(preds, by_id, setting)

    scores = []
    for p in selected:
        q = by_id[p.sample_id]
        parsed = parse_count_answer(p.text)
        correct, off_by_one, abs_err = blackbox.score_sample(parsed, q.gt_count, args.fallback)
        scores.append(blackbox.SampleScore(
            sample_id=p.sample_id,
            correct=correct,
            off_by_one=off_by_one,
            abs_err=abs_err,
            parse_failed=not isinstance(parsed, Count),
            target=q.target,
            modality=q.modality,
            gt_count=q.gt_count,
            pred_count=parsed.value if isinstance(parsed, Count) else None,
        ))

    report = blackbox.aggregate(scores)
    report_json = out_dir / "blackbox_report.json"
    report_txt = out_dir / "blackbox_report.txt"
    per_sample_csv = out_dir / "blackbox_per_sample.csv"

    with open(report_json, "w", encoding="utf-8") as f:
        json.dump(blackbox.report_to_dict(report), f, indent=2)
        f.write("\n")
    report_txt.write_text(blackbox.report_to_table(report) + "\n", encoding="utf-8")
    with open(per_sample_csv, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "target", "modality", "gt_count", "pred_count",
                         "correct", "off_by_one", "abs_err", "parse_failed"])
        for s in scores:
            writer.writerow([s.sample_id, s.target.value, s.modality.value, s.gt_count,
                             "" if s.pred_count is None else s.pred_count,
                             int(s.correct), int(s.off_by_one), s.abs_err, int(s.parse_failed)])

    RunManifest(
        command="eval-blackbox",
        inputs=(args.annotations, args.predictions),
        outputs=(str(report_json), str(report_txt), str(per_sample_csv)),
        config={"setting": args.setting, "fallback": args.fallback},
        seed=None,
    ).write(out_dir / "manifest.json")
    print(blackbox.report_to_table(report))
    return EXIT_OK


def cmd_eval_whitebox(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, by_id = _load_questions(args.annotations)
    preds = read_jsonl(args.predictions, raw_output_from_dict)
    selected = _join_predictions(preds, by_id, Setting.WHITE_BOX)

    items = []
    per_sample = []
    for p in selected:
        q = by_id[p.sample_id]
        try:
            result = whitebox.score_question(q, p.text)
        except ValueError as e:
            raise ValueError(f"sample {p.sample_id}: {e}") from None
        items.append((q.target, result))
        per_sample.append({
            "sample_id": result.sample_id,
            "target": q.target.value,
            "format_ok": result.format_ok,
            "wcs": result.wcs,
            "per_cluster": [
                {"la": c.la, "cap": c.cap, "score": c.score} for c in result.per_cluster],
            "failure_reason": result.failure_reason,
        })

    report = whitebox.aggregate_whitebox(items)
    report_json = out_dir / "whitebox_report.json"
    report_txt = out_dir / "whitebox_report.txt"
    per_sample_jsonl = out_dir / "whitebox_per_sample.jsonl"

    with open(report_json, "w", encoding="utf-8") as f:
        json.dump(whitebox.report_to_dict(report), f, indent=2)
        f.write("\n")
    report_txt.write_text(whitebox.report_to_table(report) + "\n", encoding="utf-8")
    write_jsonl(per_sample_jsonl, per_sample)

    RunManifest(
        command="eval-whitebox",
        inputs=(args.annotations, args.predictions),
        outputs=(str(report_json), str(report_txt), str(per_sample_jsonl)),
        config={},
        seed=None,
    ).write(out_dir / "manifest.json")
    print(whitebox.report_to_table(report))
    return EXIT_OK


def cmd_rewards(args) -> int:
    w_format, w_task = args.w_format, args.w_task
    if args.weights is not None:
        parts = args.weights.split(",")
        if len(parts) != 2:
            raise ValueError(f"--weights expects W_FORMAT,W_TASK, got {args.weights!r}")
        try:
            w_format, w_task = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"--weights expects two numbers, got {args.weights!r}") from None
    weights = RewardWeights(format=w_format, task=w_task)

    if args.batch == "-":
        # streaming mode: per-line problems become structured error records
        # so a long-lived consumer never loses the whole stream to one request
        out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
        try:
            for line_no, line in enumerate(sys.stdin, start=1):
                if not line.strip():
                    continue
                doc = None
                try:
                    doc = json.loads(line)
                    record = compute_reward_from_request(doc, weights)
                except ValueError as e:
                    record = {"error": str(e), "line": line_no}
                    if isinstance(doc, dict) and "id" in doc:
                        record = {"id": doc["id"], **record}
                dump_jsonl_line(record, out)
        finally:
            if out is not sys.stdout:
                out.close()
        return EXIT_OK

    records = read_jsonl(args.batch, lambda doc: compute_reward_from_request(doc, weights))

    if args.out == "-":
        for record in records:
            dump_jsonl_line(record)
    else:
        write_jsonl(args.out, records)
        RunManifest(
            command="rewards",
            inputs=(args.batch,),
            outputs=(args.out,),
            config={"w_format": args.w_format, "w_task": args.w_task},
            seed=None,
        ).write(args.out + ".manifest.json")
    return EXIT_OK


def _read_id_list(path: str) -> list[str]:
    def parse(doc: dict) -> str:
        if not isinstance(doc, dict) or "sample_id" not in doc:
            raise ValueError("expected {\"sample_id\": ...} records")
        return str(doc["sample_id"])

    return read_jsonl(path, parse)


def cmd_curriculum_filter(args) -> int:
    records = read_jsonl(args.rollouts, rollout_from_dict)
    kept = filter_samples(records)
    write_jsonl(args.out, ({"sample_id": s} for s in kept))
    RunManifest(
        command="curriculum-filter",
        inputs=(args.rollouts,),
        outputs=(args.out,),
        config={},
        seed=None,
    ).write(args.out + ".manifest.json")
    print(f"kept {len(kept)}/{len(records)} samples")
    return EXIT_OK


def cmd_curriculum_stage(args) -> int:
    new = _read_id_list(args.new)
    history = _read_id_list(args.history) if args.history else []
    ordered = build_stage(new, history, args.review_fraction, args.seed)
    write_jsonl(args.out, (
        {"position": i, "sample_id": s, "stage": args.stage_name, "epoch": args.epoch}
        for i, s in enumerate(ordered)
    ))
    RunManifest(
        command="curriculum-stage",
        inputs=tuple(p for p in (args.new, args.history) if p),
        outputs=(args.out,),
        config={"review_fraction": args.review_fraction,
                "stage_name": args.stage_name, "epoch": args.epoch},
        seed=args.seed,
    ).write(args.out + ".manifest.json")
    print(f"stage {args.stage_name}: {len(ordered)} samples "
          f"({len(ordered) - len(new)} review)")
    return EXIT_OK


def cmd_curriculum_fulltask(args) -> int:
    records = read_jsonl(args.rollouts, rollout_from_dict)
    if args.keep:
        keep = set(_read_id_list(args.keep))
        records = [r for r in records if r.sample_id in keep]

    pools: dict = {}
    for r in records:
        bucket = difficulty_of(r, args.pass_threshold)
        pools.setdefault(r.task, {}).setdefault(bucket, []).append(r.sample_id)

    selection = sample_full_task(pools, args.quota, args.seed)
    write_jsonl(args.out, (
        {"position": i, "sample_id": s, "stage": "full_task"}
        for i, s in enumerate(selection.samples)
    ))
    RunManifest(
        command="curriculum-fulltask",
        inputs=tuple(p for p in (args.rollouts, args.keep) if p),
        outputs=(args.out,),
        config={"quota": args.quota, "pass_threshold": args.pass_threshold,
                "warnings": list(selection.warnings)},
        seed=args.seed,
    ).write(args.out + ".manifest.json")
    for warning in selection.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"full task: {len(selection.samples)} samples {selection.per_task}")
    return EXIT_OK


def cmd_random_baseline(args) -> int:
    questions, _ = _load_questions(args.annotations)
    settings = tuple(Setting(s) for s in args.settings)
    outputs = baseline.generate_baseline(
        questions, max_count=args.max_count, seed=args.seed, settings=settings)
    write_jsonl(args.out, (raw_output_to_dict(o) for o in outputs))
    RunManifest(
        command="random-baseline",
        inputs=(args.annotations,),
        outputs=(args.out,),
        config={"max_count": args.max_count, "settings": list(args.settings)},
        seed=args.seed,
    ).write(args.out + ".manifest.json")
    return EXIT_OK


def cmd_validate(args) -> int:
    questions, _ = _load_questions(args.annotations)
    n_bad = 0
    for q in questions:
        for v in validate_question(q):
            n_bad += 1
            print(f"{q.id}: {v.field}: {v.rule}")
    print(f"{len(questions)} questions checked, "
          f"{n_bad} violation{'s' if n_bad != 1 else ''}")
    return EXIT_OK


def cmd_prompts(args) -> int:
    name = _TEMPLATES[args.target]
    text = resources.files("avcount.templates").joinpath(name).read_text(encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_api(args) -> int:
    from . import api

    api.serve()
    return EXIT_OK


def build_parser(config_defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avcount",
        description="Batch evaluation, verifiable rewards, and curriculum tooling "
                    "for audio-visual counting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    # subcommands parse into a fresh namespace, so config-file defaults must be
    # applied to every (sub)parser, not just the root
    leaf_parsers: list[argparse.ArgumentParser] = []

    p = sub.add_parser("eval-blackbox", help="score end-to-end counting predictions")
    p.add_argument("annotations")
    p.add_argument("predictions")
    p.add_argument("--setting", choices=["long", "ref"], default="long")
    p.add_argument("--fallback", type=int, default=0,
                   help="count substituted for unparseable answers (default 0)")
    p.add_argument("--out-dir", default="blackbox_eval")
    p.set_defaults(func=cmd_eval_blackbox)
    leaf_parsers.append(p)

    p = sub.add_parser("eval-whitebox", help="score grounded (white-box) predictions")
    p.add_argument("annotations")
    p.add_argument("predictions")
    p.add_argument("--out-dir", default="whitebox_eval")
    p.set_defaults(func=cmd_eval_whitebox)
    leaf_parsers.append(p)

    p = sub.add_parser("rewards", help="score a batch of reward requests (JSONL)")
    p.add_argument("batch", help="request JSONL path, or - for stdin streaming")
    p.add_argument("out", nargs="?", default="-", help="output JSONL path, or - for stdout")
    p.add_argument("--w-format", type=float, default=1.0)
    p.add_argument("--w-task", type=float, default=1.0)
    p.add_argument("--weights", default=None, metavar="W_FORMAT,W_TASK",
                   help="shorthand for --w-format/--w-task, e.g. 1.0,0.5")
    p.set_defaults(func=cmd_rewards)
    leaf_parsers.append(p)

    pc = sub.add_parser("curriculum", help="offline data pipeline steps")
    sub_c = pc.add_subparsers(dest="subcommand", required=True)

    p = sub_c.add_parser("filter", help="drop samples the reference model already solves")
    p.add_argument("rollouts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curriculum_filter)
    leaf_parsers.append(p)

    p = sub_c.add_parser("stage", help="build one stage list with review mixing")
    p.add_argument("--new", required=True, help="JSONL of {\"sample_id\"} for the new stage")
    p.add_argument("--history", default=None, help="JSONL of previously seen sample ids")
    p.add_argument("--review-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage-name", default="stage")
    p.add_argument("--epoch", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curriculum_stage)
    leaf_parsers.append(p)

    p = sub_c.add_parser("fulltask", help="balanced draw across tasks and difficulty")
    p.add_argument("rollouts")
    p.add_argument("--keep", default=None, help="optional JSONL of sample ids to restrict to")
    p.add_argument("--quota", type=int, default=2500, help="samples per task")
    p.add_argument("--pass-threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curriculum_fulltask)
    leaf_parsers.append(p)

    p = sub.add_parser("random-baseline", help="emit seeded random predictions")
    p.add_argument("annotations")
    p.add_argument("--range", "--max-count", dest="max_count", type=int,
                   default=baseline.DEFAULT_MAX_COUNT,
                   help="counts are drawn uniformly from [1, N] (default 76)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--settings", nargs="+", default=[s.value for s in Setting],
                   choices=[s.value for s in Setting])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_random_baseline)
    leaf_parsers.append(p)

    p = sub.add_parser("validate", help="report annotation invariant violations")
    p.add_argument("annotations")
    p.set_defaults(func=cmd_validate)
    leaf_parsers.append(p)

    p = sub.add_parser("prompts", help="print an evaluation prompt template")
    p.add_argument("target", choices=sorted(_TEMPLATES.keys()))
    p.set_defaults(func=cmd_prompts)
    leaf_parsers.append(p)

    p = sub.add_parser(
        "api", help="serve line-buffered op calls on stdin/stdout (for bindings)")
    p.set_defaults(func=cmd_api)
    leaf_parsers.append(p)

    if config_defaults:
        for leaf in leaf_parsers:
            leaf.set_defaults(**config_defaults)

    return parser


# Flag defaults that AVCOUNT_CONFIG (a JSON file) may override; explicit
# flags always win. This is the only environment-variable input.
_CONFIG_KEYS = {
    "setting", "fallback", "out_dir", "w_format", "w_task", "review_fraction",
    "pass_threshold", "seed", "quota", "max_count",
}


def _config_defaults() -> dict:
    path = os.environ.get("AVCOUNT_CONFIG")
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ValueError(f"config {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"config {path}: expected a JSON object of flag defaults")
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in _CONFIG_KEYS:
            raise ValueError(f"config {path}: unknown option {key!r}")
        defaults[dest] = value
    return defaults


def main(argv=None) -> int:
    try:
        parser = build_parser(_config_defaults())
        args = parser.parse_args(argv)
        return args.func(args)
    except JsonlError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except JoinError as e:
        print(f"join error: {e}", file=sys.stderr)
        return EXIT_JOIN
    except ValueError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSAL


if __name__ == "__main__":
    sys.exit(main())
