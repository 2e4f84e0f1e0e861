"""
How well do the scores track delivered power?
=============================================

Snapshots taken during one training run are scored on the test set. Each
snapshot gives a (DBA, top-1, power ratio) point; points.csv holds them.
"""
import csv
import sys
from pathlib import Path

from beampred import pipeline
from beampred.metrics import metric_correlation

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)

cfg = pipeline.ExperimentConfig.default()
ch = pipeline.build(cfg)
hidden = {s.sample_id: (s.label, s.power_vector) for s in ch.hidden}
scenario_of = {s.sample_id: s.scenario_id for s in ch.hidden}
reports = []


def snapshot(epoch, params, log, stats):
    if epoch % 20:
        return
    ranked = pipeline.predict(params, stats, ch.test, cfg.metric.top_k, cfg.bs_refs())
    preds = {s.sample_id: tuple(r) for s, r in zip(ch.test, ranked)}
    r = pipeline.score(preds, hidden, scenario_of, cfg.metric)
    reports.append((epoch, r))
    print(f"epoch {epoch:3d}  DBA {r.dba_score:.3f}  top-1 {r.top_k_accuracy[0]:.3f}  "
          f"P_R {r.power_ratio:.3f}")


pipeline.train_baseline(ch.train, cfg.bs_refs(), cfg.model, cfg.metric, split_seed=cfg.seed,
                        on_epoch=snapshot)
table = metric_correlation([r for _, r in reports], k=1)
print(f"corr(DBA, P_R)   = {table.dba_vs_power:.3f}")
print(f"corr(top-1, P_R) = {table.topk_vs_power:.3f}")

with open(out / "points.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["epoch", "dba", "top1", "power_ratio"])
    for epoch, r in reports:
        w.writerow([epoch, r.dba_score, r.top_k_accuracy[0], r.power_ratio])
