"""Command-line entry point.

Subcommands: gen-data, train, distill, eval, table.  Every run persists its
merged configuration into the output directory, and all randomness flows
from a single seed (seed lists spawn independent runs), so any command can
be reproduced byte-for-byte from its artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import string
import sys

from . import corpus, distill as kd, evaluate as ev, trainer
from .heads import TaggerModel

TRAIN_FLAG_FIELDS = {
    "lr": "learning_rate",
    "batch": "batch_size",
    "step1": "step1_steps",
    "step2": "step2_steps",
    "beta": "beta",
    "lam": "lam",
    "clip": "clip_c",
    "critic_iters": "critic_iters",
    "schedule": "schedule",
    "window": "selection_window",
    "eval_interval": "eval_interval",
    "keep_prob": "keep_prob",
    "embed_dim": "embed_dim",
    "hidden_dim": "hidden_dim",
}

DISTILL_FLAG_FIELDS = {
    "warm_steps": "warm_steps",
    "kd_steps": "kd_steps",
    "lr": "learning_rate",
    "batch": "batch_size",
    "keep_prob": "keep_prob",
    "embed_dim": "embed_dim",
    "hidden_dim": "hidden_dim",
}

TEACHER_SEED_OFFSETS = (0, 1000, 2000)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--step1", type=int)
    p.add_argument("--step2", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--critic-iters", type=int, dest="critic_iters")
    p.add_argument("--schedule", choices=("sequential", "interleaved"))
    p.add_argument("--window", type=int)
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--keep-prob", type=float, dest="keep_prob")
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")


def _add_seed_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="single run seed (default 1)")
    p.add_argument("--seeds", help="comma-separated seed list; spawns one run each")


def _load_file_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return cfg


def _merge(args: argparse.Namespace, file_cfg: dict, flag_fields: dict) -> dict:
    merged = {}
    for flag, fieldname in flag_fields.items():
        if flag in file_cfg and file_cfg[flag] is not None:
            merged[fieldname] = file_cfg[flag]
        value = getattr(args, flag, None)
        if value is not None:
            merged[fieldname] = value
    return merged


def _resolve_seeds(args: argparse.Namespace, file_cfg: dict) -> list[int]:
    if getattr(args, "seeds", None):
        return [int(s) for s in args.seeds.split(",") if s.strip()]
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    if "seeds" in file_cfg:
        return [int(s) for s in file_cfg["seeds"]]
    if "seed" in file_cfg:
        return [int(file_cfg["seed"])]
    return [1]


def _persist_config(out: str, doc: dict) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)


def _write_run_artifacts(run_dir: str, result) -> None:
    os.makedirs(run_dir, exist_ok=True)
    trainer.write_log(result.rows, os.path.join(run_dir, "log.jsonl"))
    result.save_checkpoint(os.path.join(run_dir, "checkpoint.json"))
    result.report.save(os.path.join(run_dir, "report.json"))
    ev.write_report_csv(result.report, os.path.join(run_dir, "report.csv"))


def _write_aggregate(out: str, reports: list) -> "ev.EvalReport":
    agg = ev.aggregate(reports)
    agg.save(os.path.join(out, "report.json"))
    ev.write_report_csv(agg, os.path.join(out, "report.csv"))
    return agg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.from_raw:
        examples = corpus.load_raw_file(args.from_raw, args.source_lang, args.target_lang)
        bundle = corpus.bundle_from_examples(examples, args.source_lang,
                                             (args.target_lang,))
    else:
        names = string.ascii_uppercase[1 : 1 + args.targets]
        cfg = corpus.SynthConfig(
            template_count=args.templates,
            aspects_per_polarity=args.aspects,
            train_sentences=args.train,
            dev_sentences=args.dev,
            test_sentences=args.test,
            target_langs=tuple(names),
            shared_vocab_fraction=args.shared_frac,
            article_fraction=args.article_frac,
        )
        bundle = corpus.synth_bilingual(cfg, args.seed)
    corpus.save_bundle(bundle, args.out)
    _persist_config(args.out, {"command": "gen-data", **vars(args)})
    print(corpus.format_stats(bundle))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    seeds = _resolve_seeds(args, file_cfg)
    cfg = trainer.TrainConfig(seeds=tuple(seeds), **_merge(args, file_cfg, TRAIN_FLAG_FIELDS))
    mode = args.mode or file_cfg.get("mode")
    if mode not in trainer.MODES:
        raise ValueError(f"mode must be one of {trainer.MODES}, got {mode!r}")
    bundle = corpus.load_bundle(args.data)
    _persist_config(args.out, {"command": "train", "mode": mode, "data": args.data,
                               "seeds": seeds, **cfg.to_dict()})
    reports = []
    for seed in seeds:
        result = trainer.run_pipeline(bundle, cfg, mode, seed)
        _write_run_artifacts(os.path.join(args.out, f"seed_{seed}"), result)
        reports.append(result.report)
        print(f"mode={mode} seed={seed} "
              f"dev_f1={result.selected.dev_f1:.4f} "
              f"test_mean_f1={result.report.mean_f1():.4f}")
    agg = _write_aggregate(args.out, reports)
    print(f"mode={mode} mean over {len(seeds)} seed(s): {agg.mean_f1():.4f}")
    return 0


def _train_teachers(bundle, cfg: trainer.TrainConfig, mode: str, seed: int) -> list[TaggerModel]:
    count = 3 if mode == "multi" else 1
    models = []
    for offset in TEACHER_SEED_OFFSETS[:count]:
        result = trainer.run_pipeline(bundle, cfg, "msmo", seed + offset)
        models.append(result.model)
    return models


def cmd_distill(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    seeds = _resolve_seeds(args, file_cfg)
    mode = {"distill-s": "single", "distill-m": "multi", "distill-mtl": "multilingual"}[args.mode]
    dcfg = kd.DistillConfig(**_merge(args, file_cfg, DISTILL_FLAG_FIELDS))
    tcfg = trainer.TrainConfig(seeds=tuple(seeds), **_merge(args, file_cfg, TRAIN_FLAG_FIELDS))
    bundle = corpus.load_bundle(args.data)
    _persist_config(args.out, {
        "command": "distill", "mode": args.mode, "data": args.data, "seeds": seeds,
        "teachers": args.teachers, **{f"distill_{k}": v for k, v in
                                      dcfg.__dict__.items()},
    })
    pretrained = None
    if args.teachers:
        pretrained = [TaggerModel.load(p)[0] for p in args.teachers.split(",")]
    reports = []
    for seed in seeds:
        teachers = pretrained or _train_teachers(bundle, tcfg, mode, seed)
        result = kd.distill(mode, teachers, bundle, dcfg, seed)
        run_dir = os.path.join(args.out, f"seed_{seed}")
        os.makedirs(run_dir, exist_ok=True)
        trainer.write_log(result.rows, os.path.join(run_dir, "log.jsonl"))
        result.student.save(os.path.join(run_dir, "student.json"),
                            meta={"mode": args.mode, "seed": seed})
        kd.save_soft_labels(result.soft, os.path.join(run_dir, "soft_labels.jsonl"))
        result.report.save(os.path.join(run_dir, "report.json"))
        ev.write_report_csv(result.report, os.path.join(run_dir, "report.csv"))
        reports.append(result.report)
        print(f"mode={args.mode} seed={seed} test_mean_f1={result.report.mean_f1():.4f}")
    agg = _write_aggregate(args.out, reports)
    print(f"mode={args.mode} mean over {len(seeds)} seed(s): {agg.mean_f1():.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = corpus.load_bundle(args.data)
    model, meta = TaggerModel.load(args.checkpoint)
    report = ev.evaluate_model(model, bundle, args.split, seed=meta.get("seed"))
    for lang, s in report.scores.items():
        print(f"{lang}: P={s.precision:.4f} R={s.recall:.4f} F1={s.f1:.4f} "
              f"(gold={s.n_gold} pred={s.n_predicted} matched={s.n_matched})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _persist_config(args.out, {"command": "eval", "data": args.data,
                                   "checkpoint": args.checkpoint, "split": args.split})
        report.save(os.path.join(args.out, "report.json"))
        ev.write_report_csv(report, os.path.join(args.out, "report.csv"))
    return 0


TABLE_METHODS = ("zero_shot", "msmo", "ablation:no_discriminator",
                 "ablation:no_consistency", "student_baseline",
                 "distill-s", "distill-m")


def cmd_table(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    seeds = _resolve_seeds(args, file_cfg)
    cfg = trainer.TrainConfig(seeds=tuple(seeds), **_merge(args, file_cfg, TRAIN_FLAG_FIELDS))
    dcfg = kd.DistillConfig(**_merge(args, file_cfg, DISTILL_FLAG_FIELDS))
    bundle = corpus.load_bundle(args.data)
    _persist_config(args.out, {"command": "table", "data": args.data,
                               "seeds": seeds, **cfg.to_dict()})

    msmo_runs: dict[int, trainer.RunResult] = {}
    reports: dict[str, list[ev.EvalReport]] = {m: [] for m in TABLE_METHODS}
    for seed in seeds:
        msmo_runs[seed] = trainer.run_pipeline(bundle, cfg, "msmo", seed)
        reports["msmo"].append(msmo_runs[seed].report)
    for method in ("zero_shot", "ablation:no_discriminator", "ablation:no_consistency"):
        for seed in seeds:
            reports[method].append(trainer.run_pipeline(bundle, cfg, method, seed).report)
    for seed in seeds:
        _, baseline_report = kd.train_student_baseline(bundle, dcfg, seed)
        reports["student_baseline"].append(baseline_report)
    # Distillation teachers are the full-pipeline runs; multi-teacher mode
    # rotates three of them per student seed.
    ordered = [msmo_runs[s].model for s in seeds]
    for i, seed in enumerate(seeds):
        reports["distill-s"].append(
            kd.distill("single", [ordered[i]], bundle, dcfg, seed).report)
        trio = [ordered[(i + k) % len(ordered)] for k in range(min(3, len(ordered)))]
        mode = "multi" if len(trio) >= 2 else "single"
        reports["distill-m"].append(kd.distill(mode, trio, bundle, dcfg, seed).report)

    aggregates = {m: ev.aggregate(rs) for m, rs in reports.items()}
    langs = list(bundle.target_langs)
    lines = ["method" + " " * 26 + "".join(f"{l:>10}" for l in langs) + f"{'avg':>10}"]
    for method, agg in aggregates.items():
        cells = "".join(f"{agg.scores[l].f1:>10.4f}" for l in langs)
        lines.append(f"{method:<32}{cells}{agg.mean_f1():>10.4f}")
    table_text = "\n".join(lines)
    print(table_text)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table_text + "\n")
    import csv as _csv

    with open(os.path.join(args.out, "table.csv"), "w", encoding="utf-8", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(["method", "language", "seed", "f1"])
        for method, rs in reports.items():
            for r in rs:
                for lang, s in r.scores.items():
                    writer.writerow([method, lang, r.seed, s.f1])
            for lang, s in aggregates[method].scores.items():
                writer.writerow([method, lang, "mean", s.f1])
    for method, agg in aggregates.items():
        agg.save(os.path.join(args.out, f"report_{method.replace(':', '_')}.json"))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xabsa",
        description="Cross-lingual aspect-sentiment tagging experiments "
                    "on aligned bilingual corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate or ingest an aligned corpus")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--train", type=int, default=160)
    g.add_argument("--dev", type=int, default=48)
    g.add_argument("--test", type=int, default=72)
    g.add_argument("--aspects", type=int, default=8,
                   help="aspect lexicon size per polarity")
    g.add_argument("--templates", type=int, default=14)
    g.add_argument("--targets", type=int, default=1,
                   help="number of synthetic target languages")
    g.add_argument("--shared-frac", type=float, default=0.25, dest="shared_frac")
    g.add_argument("--article-frac", type=float, default=0.35, dest="article_frac")
    g.add_argument("--from-raw", dest="from_raw",
                   help="ingest a raw marker file (source/target line pairs) "
                        "instead of synthesizing")
    g.add_argument("--source-lang", default="A", dest="source_lang")
    g.add_argument("--target-lang", default="B", dest="target_lang")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one of the pipeline modes")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--mode", choices=trainer.MODES)
    _add_seed_flags(t)
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("distill", help="teacher-student distillation")
    d.add_argument("--data", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--mode", required=True,
                   choices=("distill-s", "distill-m", "distill-mtl"))
    d.add_argument("--teachers", help="comma-separated teacher checkpoint paths; "
                                      "omitted teachers are trained on the fly")
    d.add_argument("--warm-steps", type=int, dest="warm_steps")
    d.add_argument("--kd-steps", type=int, dest="kd_steps")
    _add_seed_flags(d)
    _add_train_flags(d)
    d.set_defaults(func=cmd_distill)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", default="test", choices=("train", "dev", "test"))
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    tb = sub.add_parser("table", help="run every method over a seed list and "
                                      "render the comparison grid")
    tb.add_argument("--data", required=True)
    tb.add_argument("--out", required=True)
    tb.add_argument("--warm-steps", type=int, dest="warm_steps")
    tb.add_argument("--kd-steps", type=int, dest="kd_steps")
    _add_seed_flags(tb)
    _add_train_flags(tb)
    tb.set_defaults(func=cmd_table)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # diagnostics, not tracebacks, for operator errors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
