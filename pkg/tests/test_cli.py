import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from beampred import cli, dataset, pipeline
from beampred.model import ModelConfig
from oracles import naive_dba


def tiny_config(epochs=4):
    seen, unseen = pipeline.default_scenarios(num_trajectories=1)
    return pipeline.ExperimentConfig(seen, unseen, model=ModelConfig(hidden_dim=8, epochs=epochs,
                                                                      batch_size=64, seed=3),
                                     seed=3)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(tiny_config().to_json())
    assert cli.main(["generate", "--config", str(root / "cfg.json"), "--out", str(root / "data")]) == 0
    assert cli.main(["train", "--data", str(root / "data"), "--out", str(root / "run"),
                     "--snapshot-every", "1"]) == 0
    return root


def test_default_config_parses_back(capsys):
    assert cli.main(["default-config"]) == 0
    cfg = pipeline.ExperimentConfig.from_json(capsys.readouterr().out)
    assert cfg.to_dict() == pipeline.ExperimentConfig.default().to_dict()


def test_generate_writes_four_files(run):
    names = sorted(p.name for p in (run / "data").iterdir())
    assert names == ["manifest.json", "test.csv", "test_labels.csv", "train.csv"]
    manifest = json.loads((run / "data" / "manifest.json").read_text())
    assert manifest["counts"]["test_seen"] == manifest["counts"]["test_unseen"]
    assert manifest["unseen_scenarios"] == [31]
    assert manifest["config"] == tiny_config().to_dict()


def test_generate_rerun_is_byte_identical(run, tmp_path):
    cli.main(["generate", "--config", str(run / "cfg.json"), "--out", str(tmp_path / "again")])
    for name in ("train.csv", "test.csv", "test_labels.csv", "manifest.json"):
        assert sha(tmp_path / "again" / name) == sha(run / "data" / name)


def test_generate_from_manifest_reproduces(run, tmp_path):
    manifest = json.loads((run / "data" / "manifest.json").read_text())
    (tmp_path / "c.json").write_text(json.dumps(manifest["config"]))
    cli.main(["generate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")])
    assert sha(tmp_path / "d" / "train.csv") == sha(run / "data" / "train.csv")


def test_generate_zero_trajectories_is_config_error(tmp_path):
    d = tiny_config().to_dict()
    d["train_scenarios"][0]["num_trajectories"] = 0
    (tmp_path / "bad.json").write_text(json.dumps(d))
    assert cli.main(["generate", "--config", str(tmp_path / "bad.json"),
                     "--out", str(tmp_path / "x")]) == 2


def test_generate_refuses_non_empty_output(run):
    assert cli.main(["generate", "--config", str(run / "cfg.json"),
                     "--out", str(run / "data")]) == 3


def test_missing_dataset_is_io_error(tmp_path):
    assert cli.main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "r")]) == 3


def test_train_outputs(run):
    log = (run / "run" / "train_log.csv").read_text().splitlines()
    assert len(log) == 1 + 4
    assert sorted(p.name for p in (run / "run" / "checkpoints").iterdir()) == [
        f"epoch_{e:04d}.ckpt" for e in range(1, 5)]
    rows = [r.split(",") for r in log]
    dba = [float(r[rows[0].index("val_dba")]) for r in rows[1:]]
    best = max(dba)
    assert best >= dba[0]


def test_train_same_seed_same_checkpoint(run, tmp_path):
    cli.main(["train", "--data", str(run / "data"), "--out", str(tmp_path / "r")])
    assert sha(tmp_path / "r" / "model.ckpt") == sha(run / "run" / "model.ckpt")
    cli.main(["train", "--data", str(run / "data"), "--out", str(tmp_path / "s"), "--seed", "4"])
    assert sha(tmp_path / "s" / "model.ckpt") != sha(run / "run" / "model.ckpt")


def test_predict_file_shape(run, tmp_path):
    out = tmp_path / "p.csv"
    assert cli.main(["predict", "--checkpoint", str(run / "run" / "model.ckpt"),
                     "--test", str(run / "data" / "test.csv"), "--topk", "3",
                     "--stats", str(run / "run" / "normalization.txt"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sample_id,beam_1,beam_2,beam_3"
    assert len(lines) - 1 == len(dataset.read_csv(run / "data" / "test.csv"))
    for row in lines[1:]:
        beams = [int(v) for v in row.split(",")[1:]]
        assert len(set(beams)) == 3 and all(1 <= b <= 64 for b in beams)


def test_predict_refuses_mismatched_stats(run, tmp_path):
    text = (run / "run" / "normalization.txt").read_text()
    lines = [l if not l.startswith("max_x=") else "max_x=12345.0" for l in text.splitlines()]
    (tmp_path / "other.txt").write_text("\n".join(lines) + "\n")
    code = cli.main(["predict", "--checkpoint", str(run / "run" / "model.ckpt"),
                     "--test", str(run / "data" / "test.csv"), "--stats", str(tmp_path / "other.txt"),
                     "--out", str(tmp_path / "p.csv")])
    assert code == 2 and not (tmp_path / "p.csv").exists()


def _truth_predictions(run, path, k=3):
    hidden = dataset.read_hidden_labels(run / "data" / "test_labels.csv")
    ids = sorted(hidden)
    ranked = np.array([np.argsort(-hidden[i][1], kind="stable")[:k] for i in ids])
    dataset.write_predictions(ids, ranked, path)


def test_score_ground_truth_is_perfect(run, tmp_path, capsys):
    _truth_predictions(run, tmp_path / "p.csv")
    assert cli.main(["score", "--predictions", str(tmp_path / "p.csv"),
                     "--labels", str(run / "data" / "test_labels.csv"),
                     "--out", str(tmp_path / "report.csv")]) == 0
    text = capsys.readouterr().out
    assert "Beam Prediction Accuracy" in text and "DBA-Score" in text
    assert "Generalization gap" in text
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert rows[0] == "dataset,n,top1,top2,top3,dba1,dba2,dba3,power_ratio"
    labels = [r.split(",")[0] for r in rows[1:]]
    assert labels[:3] == ["Test", "Seen", "Unseen"]
    for r in rows[1:]:
        assert all(v == "1.000000" for v in r.split(",")[2:])
    kv = (tmp_path / "report.txt").read_text()
    assert "test.dba3=1.0" in kv


def test_score_random_predictions_matches_expectation(run, tmp_path):
    hidden = dataset.read_hidden_labels(run / "data" / "test_labels.csv")
    ids = sorted(hidden)
    rng = np.random.default_rng(0)
    ranked = np.array([rng.choice(64, 3, replace=False) for _ in ids])
    dataset.write_predictions(ids, ranked, tmp_path / "p.csv")
    cli.main(["score", "--predictions", str(tmp_path / "p.csv"),
              "--labels", str(run / "data" / "test_labels.csv"), "--out", str(tmp_path / "r.csv")])
    kv = dict(l.split("=") for l in (tmp_path / "r.txt").read_text().splitlines())
    # expectation of Y_1 for a uniform guess, exact given the labels
    labels = np.array([hidden[i][0] for i in ids])
    credit = 1 - np.minimum(np.abs(np.arange(64)[None] - labels[:, None]) / 5, 1)
    expect = credit.mean()
    sd = credit.mean(axis=1).std() / np.sqrt(len(ids)) + credit.std() / np.sqrt(len(ids))
    assert abs(float(kv["test.dba1"]) - expect) < 4 * sd
    assert float(kv["test.dba1"]) == pytest.approx(naive_dba(ranked[:, :1], labels, 1, 5)[0])


def test_score_missing_ids_lists_them(run, tmp_path, capsys):
    _truth_predictions(run, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    dropped = lines[1].split(",")[0]
    (tmp_path / "q.csv").write_text("\n".join(lines[:1] + lines[2:]) + "\n")
    code = cli.main(["score", "--predictions", str(tmp_path / "q.csv"),
                     "--labels", str(run / "data" / "test_labels.csv")])
    assert code == 4
    assert dropped in capsys.readouterr().err


def test_score_delta_override(run, tmp_path):
    _truth_predictions(run, tmp_path / "p.csv", k=1)
    assert cli.main(["score", "--predictions", str(tmp_path / "p.csv"), "--topk", "1",
                     "--delta", "1", "--labels", str(run / "data" / "test_labels.csv"),
                     "--out", str(tmp_path / "r.csv")]) == 0
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "dataset,n,top1,dba1,power_ratio"


def test_correlate_points_round_trip(run, tmp_path):
    out = tmp_path / "corr.csv"
    assert cli.main(["correlate", "--checkpoints", str(run / "run" / "checkpoints"),
                     "--labels", str(run / "data" / "test_labels.csv"), "--out", str(out)]) == 0
    points = cli.read_correlation_points(out)
    assert len(points) == 4 and set(points[0]) == {"checkpoint", "dba", "top1", "top2", "top3",
                                                    "power_ratio"}
    summary = (tmp_path / "corr.txt").read_text()
    assert "corr_dba_power_ratio=" in summary and "corr_top1_power_ratio=" in summary
    # the CSV holds repr() floats, so values survive exactly
    again = tmp_path / "again.csv"
    from beampred.metrics import MetricReport
    reports = [MetricReport(0, [p["top1"], p["top2"], p["top3"]], [], p["dba"], p["power_ratio"])
               for p in points]
    cli.write_correlation_points(again, [p["checkpoint"] for p in points], reports)
    assert again.read_text() == out.read_text()


def test_correlate_needs_three_checkpoints(run, tmp_path):
    d = tmp_path / "ck"
    d.mkdir()
    for name in ("a", "b"):
        (d / f"{name}.ckpt").write_bytes((run / "run" / "model.ckpt").read_bytes())
    code = cli.main(["correlate", "--checkpoints", str(d),
                     "--labels", str(run / "data" / "test_labels.csv"), "--out", str(tmp_path / "c.csv")])
    assert code == 4


def test_correlate_duplicates_flag_zero_variance(run, tmp_path):
    d = tmp_path / "ck"
    d.mkdir()
    for name in ("a", "b", "c"):
        (d / f"{name}.ckpt").write_bytes((run / "run" / "model.ckpt").read_bytes())
    assert cli.main(["correlate", "--checkpoints", str(d), "--labels",
                     str(run / "data" / "test_labels.csv"), "--out", str(tmp_path / "c.csv")]) == 0
    assert "zero_variance=True" in (tmp_path / "c.txt").read_text()


def test_bad_flag_exits_with_config_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["score", "--bogus"])
    assert exc.value.code == 2
