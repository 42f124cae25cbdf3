"""Command-line front end for the full pipeline.

One executable with subcommands for data generation, curation, training,
self-evolution, evaluation, attention dumping, and the reward/gating
ablation grid. All randomness flows from explicit --seed values; outputs
are byte-identical across reruns and independent of --workers.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import curation, evalkit, synthgym, trainer
from .attention import toy_attention, write_attention_map, write_heatmap_ppm
from .core import DatasetError, write_dataset
from .trainer import NumericError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(part) for part in text.lower().split("x"))
        return rows, cols
    except ValueError as exc:
        raise _UsageError(f"expected ROWSxCOLS, got {text!r}") from exc


_OVERRIDE_FLAGS = (
    ("--seed", "seed", int),
    ("--epochs", "epochs", int),
    ("--group-size", "group_size", int),
    ("--learning-rate", "learning_rate", float),
    ("--alpha", "alpha", float),
    ("--beta", "beta", float),
    ("--gamma", "gamma", float),
    ("--tau", "tau", float),
    ("--stages-max", "stages_max", int),
    ("--convergence-eps", "convergence_eps", float),
    ("--reward-mode", "reward_mode", str),
    ("--gating", "gating", str),
    ("--workers", "workers", int),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value run configuration file")
    for flag, _, typ in _OVERRIDE_FLAGS:
        parser.add_argument(flag, type=typ, default=None)


def _config_from_args(args: argparse.Namespace) -> trainer.TrainConfig:
    overrides = {}
    for _, name, _ in _OVERRIDE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return trainer.load_train_config(args.config, overrides)


def _write_json(payload, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_gen(args) -> int:
    rows, cols = _parse_grid(args.grid)
    screen_w, screen_h = _parse_grid(args.screen) if "x" in args.screen else (int(args.screen), int(args.screen))
    cfg = synthgym.GymConfig(
        rows=rows,
        cols=cols,
        feature_dim=args.feature_dim,
        sigma=args.sigma,
        screen_width=screen_w,
        screen_height=screen_h,
    )
    samples = synthgym.generate_dataset(args.seed, args.count, cfg)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_curate(args) -> int:
    samples = synthgym.load_dataset(args.input)
    if args.replay_file:
        judge: curation.ExternalJudge = curation.ReplayJudge(args.replay_file)
    else:
        judge = curation.HttpJudge(args.judge_url, model=args.judge_model)
    if args.checkpoint:
        policy = trainer.load_checkpoint(args.checkpoint)
    else:
        feature_dim = next(
            (synthgym.synth_screen(s).feature_dim for s in samples if isinstance(s.screen_source, synthgym.SynthScreen)),
            8,
        )
        policy = trainer.initial_policy(trainer.TrainConfig(seed=args.seed), feature_dim)
    # difficulty screening samples at temperature 1, whatever the checkpoint used
    policy = synthgym.GridPolicy(policy.theta, 1.0)

    def rollout_fn(sample, rng):
        return synthgym.sample_rollout(policy, sample, rng, p_garble=0.0)

    cfg = curation.CurationConfig(seed=args.seed, workers=args.workers)
    report_path = args.report or args.out + ".report.json"
    try:
        kept, report = curation.run_pipeline(samples, judge, rollout_fn, cfg)
    except curation.CurationAbort as exc:
        _write_json(exc.report.to_dict(), report_path)
        print(f"data error: {exc} (partial report: {report_path})", file=sys.stderr)
        return 2
    write_dataset(kept, args.out)
    _write_json(report.to_dict(), report_path)
    print(f"kept {report.kept}/{report.input_count} samples -> {args.out} (report: {report_path})")
    return 0


def _stage_files(out_dir: str, records, cfg) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_json([rec.to_dict() for rec in records], os.path.join(out_dir, "stage_records.json"))
    trainer.write_reward_curve_csv(records, os.path.join(out_dir, "reward_curves.csv"))
    for rec in records:
        trainer.save_checkpoint(rec.policy(), os.path.join(out_dir, f"checkpoint_stage{rec.stage_index}.ckpt"))
    trainer.save_checkpoint(records[-1].policy(), os.path.join(out_dir, "checkpoint.ckpt"))


def _write_splits(out_dir: str, dataset) -> None:
    train_ds, eval_ds = trainer.split_dataset(dataset)
    write_dataset(train_ds, os.path.join(out_dir, "train_split.jsonl"))
    write_dataset(eval_ds, os.path.join(out_dir, "eval_split.jsonl"))


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    dataset = synthgym.load_dataset(args.data)
    train_ds, eval_ds = trainer.split_dataset(dataset)
    if not train_ds or not eval_ds:
        raise DatasetError("dataset too small to split into train and eval parts")
    policy = trainer.initial_policy(cfg, synthgym.synth_screen(train_ds[0]).feature_dim)
    gates = [1] * len(train_ds)
    _, record = trainer.train_stage(policy, train_ds, gates, cfg, eval_ds, stage_index=1)
    _stage_files(args.out_dir, [record], cfg)
    _write_splits(args.out_dir, dataset)
    print(f"stage 1: eval_accuracy={record.eval_accuracy:.4f} -> {args.out_dir}")
    return 0


def _cmd_evolve(args) -> int:
    cfg = _config_from_args(args)
    dataset = synthgym.load_dataset(args.data)
    records = trainer.self_evolve(dataset, cfg)
    _stage_files(args.out_dir, records, cfg)
    _write_splits(args.out_dir, dataset)
    summary = ", ".join(f"s{rec.stage_index}={rec.eval_accuracy:.4f}" for rec in records)
    print(f"{len(records)} stages ({summary}) -> {args.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    dataset = synthgym.load_dataset(args.data)
    policy = trainer.load_checkpoint(args.checkpoint)
    accuracy = trainer.evaluate(policy, dataset)
    print(json.dumps({"accuracy": accuracy, "samples": len(dataset)}, sort_keys=True))
    if args.table or args.report:
        from .core import iter_records
        from .synthgym import greedy_point

        tags = {rec["id"]: rec for _, rec in iter_records(args.data)}
        records = [
            evalkit.BenchRecord(s, tags[s.id].get("category"), tags[s.id].get("elem_type")) for s in dataset
        ]
        report = evalkit.score_predictions(records, {s.id: greedy_point(policy, s) for s in dataset})
        if args.table:
            print(evalkit.format_report_table(report))
        if args.report:
            _write_json(report, args.report)
    return 0


def _cmd_attn(args) -> int:
    dataset = synthgym.load_dataset(args.data)
    matches = [s for s in dataset if s.id == args.sample_id]
    if not matches:
        raise DatasetError(f"no sample with id {args.sample_id!r} in {args.data}")
    policy = trainer.load_checkpoint(args.checkpoint)
    attn_map = toy_attention(policy, matches[0])
    write_attention_map(attn_map, args.out)
    write_heatmap_ppm(attn_map, args.out + ".ppm")
    print(f"wrote {args.out} and {args.out}.ppm")
    return 0


def _cmd_ablate(args) -> int:
    base = _config_from_args(args)
    dataset = synthgym.load_dataset(args.data)
    from dataclasses import replace

    results = {}
    for reward_mode in ("dense", "sparse"):
        for gating in ("on", "off"):
            cfg = replace(base, reward_mode=reward_mode, gating=gating)
            records = trainer.self_evolve(dataset, cfg)
            results[f"{reward_mode}/gating_{gating}"] = {
                "final_accuracy": records[-1].eval_accuracy,
                "stages": len(records),
                "stage_accuracies": [rec.eval_accuracy for rec in records],
            }
    header = f"{'reward':<8}{'gating':<8}{'stages':<8}final_accuracy"
    print(header)
    print("-" * len(header))
    for key, res in results.items():
        reward_mode, gating = key.split("/gating_")
        print(f"{reward_mode:<8}{gating:<8}{res['stages']:<8}{res['final_accuracy']:.4f}")
    if args.out:
        _write_json(results, args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="segui", description="Desk-scale GUI-grounding reinforcement fine-tuning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--grid", default="8x8", help="ROWSxCOLS (default 8x8)")
    p.add_argument("--sigma", type=float, default=synthgym.GymConfig().sigma)
    p.add_argument("--feature-dim", type=int, default=synthgym.GymConfig().feature_dim)
    p.add_argument("--screen", default="512x512", help="WIDTHxHEIGHT (default 512x512)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("curate", help="run the three-fold curation pipeline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--judge-url")
    group.add_argument("--replay-file")
    p.add_argument("--judge-model", default="judge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="policy checkpoint for difficulty rollouts")
    p.add_argument("--report", help="where to write the curation report JSON")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("train", help="single-stage training run")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evolve", help="full self-evolutionary run")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("eval", help="grounding accuracy of a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--table", action="store_true", help="print the Text/Icon/Avg. breakdown table")
    p.add_argument("--report", help="write the full accuracy report JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("attn", help="dump a sample's attention map and heatmap")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_attn)

    p = sub.add_parser("ablate", help="dense-vs-sparse and gating ablation grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="optional JSON output path")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, ValueError, OSError, curation.JudgeTransportError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
