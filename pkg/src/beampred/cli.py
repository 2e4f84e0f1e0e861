"""``beampred`` command line: generate, train, predict, score, correlate.

Exit codes: 0 ok, 2 configuration, 3 I/O or parse, 4 contract/scoring,
5 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset, metrics, model, pipeline
from .errors import BeamPredError, ConfigError, InsufficientDataError
from .geodesy import NormalizationStats

TRAIN_CSV = "train.csv"
TEST_CSV = "test.csv"
LABELS_CSV = "test_labels.csv"
MANIFEST = "manifest.json"

EXIT_IO = 3


def _fresh_file(path: Path) -> Path:
    if path.exists():
        raise FileExistsError(f"refusing to overwrite {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _fresh_dir(path: Path) -> Path:
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        raise FileExistsError(f"output directory {path} exists and is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_config(args) -> pipeline.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = pipeline.ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = pipeline.ExperimentConfig.default()
    return _apply_overrides(cfg, args)


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, model=replace(cfg.model, epochs=args.epochs))
    topk, delta = getattr(args, "topk", None), getattr(args, "delta", None)
    if topk is not None or delta is not None:
        cfg = replace(cfg, metric=metrics.MetricConfig(
            top_k=topk if topk is not None else cfg.metric.top_k,
            delta=delta if delta is not None else cfg.metric.delta))
    return cfg


def _manifest_config(path: Path) -> pipeline.ExperimentConfig:
    manifest = json.loads(path.read_text(encoding="utf-8"))
    return pipeline.ExperimentConfig.from_dict(manifest["config"])


# --- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(args)
    out = _fresh_dir(Path(args.out))
    ch = pipeline.build(cfg)
    dataset.write_csv(ch.train, out / TRAIN_CSV)
    dataset.write_csv(ch.test, out / TEST_CSV, labelled=False)
    dataset.write_hidden_labels(ch.hidden, out / LABELS_CSV)
    manifest = {
        "config": cfg.to_dict(),
        "files": {"train": TRAIN_CSV, "test": TEST_CSV, "hidden_labels": LABELS_CSV},
        "counts": {"train": len(ch.train), "test": len(ch.test),
                   "test_seen": len(ch.seen_ids), "test_unseen": len(ch.unseen_ids)},
        "seen_scenarios": ch.train_scenarios,
        "unseen_scenarios": [ch.unseen_scenario],
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    print(f"wrote {len(ch.train)} training and {len(ch.test)} test samples "
          f"({len(ch.unseen_ids)} unseen) to {out}")
    return 0


def cmd_train(args) -> int:
    data = Path(args.data)
    cfg = _manifest_config(data / MANIFEST)
    if args.config:
        cfg = pipeline.ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    cfg = _apply_overrides(cfg, args)
    samples = dataset.read_csv(data / TRAIN_CSV)
    out = _fresh_dir(Path(args.out))
    snap_dir = out / "checkpoints"
    every = args.snapshot_every

    def on_epoch(epoch, params, log, stats):
        if every and (epoch % every == 0 or epoch == 1):
            snap_dir.mkdir(exist_ok=True)
            model.save_checkpoint(snap_dir / f"epoch_{epoch:04d}.ckpt", params, cfg.model,
                                  stats, {"epoch": epoch})

    tb = pipeline.train_baseline(samples, cfg.bs_refs(), cfg.model, cfg.metric,
                                 split_seed=cfg.seed, ratios=cfg.split_ratios, on_epoch=on_epoch)
    model.save_checkpoint(out / "model.ckpt", tb.params, cfg.model, tb.stats,
                          {"epoch": tb.log.best_epoch})
    tb.stats.save(out / "normalization.txt")
    (out / "train_log.csv").write_text(tb.log.to_csv(), encoding="utf-8")
    (out / "internal_test.csv").write_text(tb.internal_test.to_csv(), encoding="utf-8")
    print(f"trained {cfg.model.epochs} epochs; best validation DBA "
          f"{tb.log.val_dba[tb.log.best_epoch - 1]:.4f} at epoch {tb.log.best_epoch}")
    print(tb.internal_test.format_table())
    return 0


def _test_context(test_path: Path, manifest_arg):
    manifest_path = Path(manifest_arg) if manifest_arg else test_path.parent / MANIFEST
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return manifest, pipeline.ExperimentConfig.from_dict(manifest["config"])


def cmd_predict(args) -> int:
    params, mcfg, stats, _ = model.load_checkpoint(args.checkpoint)
    if stats is None:
        raise ConfigError("checkpoint carries no normalization statistics")
    if args.stats:
        given = NormalizationStats.load(args.stats)
        if given != stats:
            raise ConfigError("normalization statistics do not match the checkpoint; refusing to run")
    test_path = Path(args.test)
    _, cfg = _test_context(test_path, args.manifest)
    samples = dataset.read_csv(test_path)
    k = args.topk if args.topk is not None else cfg.metric.top_k
    preds = pipeline.predict(params, stats, samples, k, cfg.bs_refs())
    dataset.write_predictions([s.sample_id for s in samples], preds, _fresh_file(Path(args.out)))
    print(f"wrote top-{k} predictions for {len(samples)} samples to {args.out}")
    return 0


def _score_inputs(labels_path: Path, test_arg, manifest_arg):
    test_path = Path(test_arg) if test_arg else labels_path.parent / TEST_CSV
    manifest, cfg = _test_context(test_path, manifest_arg)
    scenario_of = {s.sample_id: s.scenario_id for s in dataset.read_csv(test_path)}
    return manifest, cfg, scenario_of


def cmd_score(args) -> int:
    labels_path = Path(args.labels)
    manifest, cfg, scenario_of = _score_inputs(labels_path, args.test, args.manifest)
    mcfg = _apply_overrides(cfg, args).metric
    hidden = dataset.read_hidden_labels(labels_path)
    preds = dataset.read_predictions(args.predictions)
    report = pipeline.score(preds, hidden, scenario_of, mcfg, manifest["seen_scenarios"],
                            manifest["unseen_scenarios"])
    print(report.format_table())
    if "Seen" in report.breakdown and "Unseen" in report.breakdown:
        print(f"Generalization gap (seen DBA - unseen DBA): {pipeline.generalization_gap(report):.4f}")
    if args.out:
        out = _fresh_file(Path(args.out))
        out.write_text(report.to_csv(), encoding="utf-8")
        out.with_suffix(".txt").write_text(report.to_keyvalue(), encoding="utf-8")
    return 0


def cmd_correlate(args) -> int:
    ckpts = sorted(Path(args.checkpoints).glob("*.ckpt"))
    if len(ckpts) < 3:
        raise InsufficientDataError(f"need at least 3 checkpoints in {args.checkpoints}, "
                                    f"found {len(ckpts)}")
    labels_path = Path(args.labels)
    manifest, cfg, scenario_of = _score_inputs(labels_path, args.test, args.manifest)
    mcfg = _apply_overrides(cfg, args).metric
    test_path = Path(args.test) if args.test else labels_path.parent / TEST_CSV
    samples = dataset.read_csv(test_path)
    hidden = dataset.read_hidden_labels(labels_path)
    reports = []
    for path in ckpts:
        params, _, stats, _ = model.load_checkpoint(path)
        ranked = pipeline.predict(params, stats, samples, mcfg.top_k, cfg.bs_refs())
        preds = {s.sample_id: tuple(r) for s, r in zip(samples, ranked)}
        reports.append(pipeline.score(preds, hidden, scenario_of, mcfg))
    table = metrics.metric_correlation(reports, k=1)
    table_k = metrics.metric_correlation(reports, k=mcfg.top_k)
    out = _fresh_file(Path(args.out))
    write_correlation_points(out, [p.name for p in ckpts], reports)
    summary = (f"corr_dba_power_ratio={table.dba_vs_power!r}\n"
               f"corr_top1_power_ratio={table.topk_vs_power!r}\n"
               f"corr_top{mcfg.top_k}_power_ratio={table_k.topk_vs_power!r}\n"
               f"zero_variance={table.zero_variance or table_k.zero_variance}\n")
    out.with_suffix(".txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return 0


def write_correlation_points(path, names, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        ks = range(1, len(reports[0].top_k_accuracy) + 1)
        w.writerow(["checkpoint", "dba", *[f"top{k}" for k in ks], "power_ratio"])
        for name, r in zip(names, reports):
            w.writerow([name, repr(r.dba_score), *[repr(a) for a in r.top_k_accuracy],
                        repr(r.power_ratio)])


def read_correlation_points(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "checkpoint" else float(v)) for k, v in row.items()} for row in rows]


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beampred", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, metric=False):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int)
        if metric:
            p.add_argument("--topk", type=int)
            p.add_argument("--delta", type=int)

    p = sub.add_parser("default-config", help="print the default experiment config as JSON")
    p.set_defaults(func=lambda a: print(pipeline.ExperimentConfig.default().to_json(), end="") or 0)

    p = sub.add_parser("generate", help="simulate scenarios and write the challenge files")
    common(p)
    p.add_argument("--out", required=True, help="new dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the position-only GRU baseline")
    common(p, metric=True)
    p.add_argument("--data", required=True, help="dataset directory from `generate`")
    p.add_argument("--out", required=True, help="new run directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="also write checkpoints/epoch_NNNN.ckpt every N epochs (and epoch 1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank beams for a test file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--manifest", help="dataset manifest (default: next to the test file)")
    p.add_argument("--stats", help="normalization stats file that must match the checkpoint")
    p.add_argument("--topk", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score predictions against the hidden labels")
    common(p, metric=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--test", help="test CSV (default: next to the labels file)")
    p.add_argument("--manifest")
    p.add_argument("--out", help="report CSV; a key=value .txt is written alongside")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("correlate", help="DBA / top-k vs power-ratio correlation over checkpoints")
    common(p, metric=True)
    p.add_argument("--checkpoints", required=True, help="directory of *.ckpt files")
    p.add_argument("--labels", required=True)
    p.add_argument("--test")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True, help="points CSV; correlations go to a .txt alongside")
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BeamPredError as exc:
        print(f"beampred {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"beampred {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
