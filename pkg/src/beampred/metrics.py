"""Beam prediction scoring: top-k accuracy, distance-based accuracy (DBA) and power ratio.

Predictions are (N, K) integer arrays of 0-based beam indices, most likely
first. Distances between beams are plain integer differences.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, InsufficientDataError


@dataclass(frozen=True)
class PredictionSet:
    ranked_beams: tuple

    def __post_init__(self):
        beams = tuple(int(b) for b in self.ranked_beams)
        if len(set(beams)) != len(beams):
            raise ContractError(f"duplicate beams in prediction {beams}")
        if any(b < 0 for b in beams):
            raise ContractError(f"negative beam index in {beams}")
        object.__setattr__(self, "ranked_beams", beams)

    def __len__(self):
        return len(self.ranked_beams)


@dataclass(frozen=True)
class MetricConfig:
    top_k: int = 3
    delta: int = 5

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.delta < 1:
            raise ConfigError("delta must be >= 1")


def as_prediction_array(predictions, num_beams: int | None = None) -> np.ndarray:
    """Stack predictions into an (N, K) int array and check each row is a valid ranking."""
    if len(predictions) and isinstance(predictions[0], PredictionSet):
        predictions = [p.ranked_beams for p in predictions]
    arr = np.asarray(predictions)
    if arr.ndim != 2:
        raise ContractError(f"predictions must be (N, K), got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.size:
        if arr.min() < 0 or (num_beams is not None and arr.max() >= num_beams):
            raise ContractError("beam index out of range")
        srt = np.sort(arr, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise ContractError("duplicate beams within a prediction row")
    return arr


def _check(predictions, labels, k):
    preds = as_prediction_array(predictions)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape[0] != y.shape[0]:
        raise ContractError(f"{preds.shape[0]} predictions but {y.shape[0]} labels")
    if y.size == 0:
        raise ContractError("no samples to score")
    if k < 1 or k > preds.shape[1]:
        raise ContractError(f"k={k} but predictions carry {preds.shape[1]} beams")
    return preds, y


def top_k_accuracy(predictions, labels, k: int) -> float:
    preds, y = _check(predictions, labels, k)
    hits = np.any(preds[:, :k] == y[:, None], axis=1)
    return float(hits.mean())


def dba_terms(predictions, labels, k: int, delta: int) -> np.ndarray:
    """Y_1..Y_k: one minus the mean saturated distance of the best of the first j guesses."""
    preds, y = _check(predictions, labels, k)
    dist = np.minimum(np.abs(preds[:, :k] - y[:, None]) / delta, 1.0)
    best = np.minimum.accumulate(dist, axis=1)
    # mean of per-sample credits (not 1 - mean distance): with delta=1 the
    # credits are exactly the 0/1 hits, so Y_k equals top-k accuracy bit for bit
    return (1.0 - best).mean(axis=0)


def dba_score(predictions, labels, cfg: MetricConfig | None = None):
    """Return (DBA, Y) with DBA = mean(Y_1..Y_K)."""
    cfg = cfg or MetricConfig()
    y_k = dba_terms(predictions, labels, cfg.top_k, cfg.delta)
    return float(y_k.mean()), y_k


def noise_floors(power_vectors, scenario_ids) -> dict:
    """Minimum observed power per scenario over the supplied vectors."""
    powers = np.asarray(power_vectors, dtype=float)
    sids = np.asarray(scenario_ids)
    return {int(s): float(powers[sids == s].min()) for s in np.unique(sids)}


def power_ratio(predictions, labels, power_vectors, k: int, scenario_ids=None,
                floors: dict | None = None, return_excluded: bool = False):
    """Mean of (P_pred - P_v) / (P_true - P_v) with P_pred the best of the top-k beams.

    P_v is the per-scenario noise floor; by default the minimum power over
    the given vectors of that scenario. Samples whose true power sits on
    the floor are dropped and counted.
    """
    preds, y = _check(predictions, labels, k)
    powers = np.asarray(power_vectors, dtype=float)
    if powers.ndim != 2 or powers.shape[0] != y.shape[0]:
        raise ContractError("need one power vector per sample")
    if preds.max() >= powers.shape[1] or y.max() >= powers.shape[1]:
        raise ContractError("beam index beyond power vector length")
    if scenario_ids is None:
        scenario_ids = np.zeros(len(y), dtype=int)
    sids = np.asarray(scenario_ids)
    if floors is None:
        floors = noise_floors(powers, sids)
    p_v = np.array([floors[int(s)] for s in sids])
    rows = np.arange(len(y))
    p_hat = powers[rows[:, None], preds[:, :k]].max(axis=1)
    p_true = powers[rows, y]
    denom = p_true - p_v
    keep = denom != 0
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"{excluded} sample(s) with ground-truth power at the noise floor excluded",
                      RuntimeWarning, stacklevel=2)
    ratio = float(np.mean((p_hat[keep] - p_v[keep]) / denom[keep])) if keep.any() else float("nan")
    return (ratio, excluded) if return_excluded else ratio


@dataclass
class MetricReport:
    num_samples: int
    top_k_accuracy: list
    dba_per_k: list
    dba_score: float
    power_ratio: float = float("nan")
    excluded: int = 0
    label: str = "Test"
    breakdown: dict = field(default_factory=dict)  # name -> MetricReport

    def dba_at(self, k: int) -> float:
        """DBA-Score when only the top-k beams are used."""
        return float(np.mean(self.dba_per_k[:k]))

    def table_row(self) -> dict:
        row = {"dataset": self.label, "n": self.num_samples}
        for k, acc in enumerate(self.top_k_accuracy, start=1):
            row[f"top{k}"] = acc
        for k in range(1, len(self.dba_per_k) + 1):
            row[f"dba{k}"] = self.dba_at(k)
        row["power_ratio"] = self.power_ratio
        return row

    def all_rows(self) -> list:
        return [self.table_row()] + [r.table_row() for r in self.breakdown.values()]

    def to_csv(self) -> str:
        rows = self.all_rows()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_keyvalue(self) -> str:
        lines = []
        for row in self.all_rows():
            prefix = row["dataset"].lower().replace(" ", "_")
            for key, value in row.items():
                if key == "dataset":
                    continue
                lines.append(f"{prefix}.{key}={value!r}" if isinstance(value, float)
                             else f"{prefix}.{key}={value}")
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        """Two-block text table: top-k accuracy, then DBA-Score at K=1..K."""
        rows = self.all_rows()
        ks = range(1, len(self.top_k_accuracy) + 1)
        width = max(12, max(len(r["dataset"]) for r in rows) + 2)
        head = "Dataset".ljust(width) + "".join(f"top-{k}".rjust(10) for k in ks)
        out = ["Beam Prediction Accuracy", head]
        for r in rows:
            out.append(r["dataset"].ljust(width) + "".join(f"{r[f'top{k}']:10.4f}" for k in ks))
        out += ["DBA-Score", head]
        for r in rows:
            out.append(r["dataset"].ljust(width) + "".join(f"{r[f'dba{k}']:10.4f}" for k in ks))
        out += ["Power ratio"]
        for r in rows:
            out.append(r["dataset"].ljust(width) + f"{r['power_ratio']:10.4f}")
        return "\n".join(out)


def evaluate(predictions, labels, cfg: MetricConfig | None = None, power_vectors=None,
             scenario_ids=None, floors: dict | None = None, label: str = "Test") -> MetricReport:
    cfg = cfg or MetricConfig()
    dba, y_k = dba_score(predictions, labels, cfg)
    accs = [top_k_accuracy(predictions, labels, k) for k in range(1, cfg.top_k + 1)]
    pr, excluded = float("nan"), 0
    if power_vectors is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pr, excluded = power_ratio(predictions, labels, power_vectors, cfg.top_k,
                                       scenario_ids, floors, return_excluded=True)
    return MetricReport(num_samples=len(np.asarray(labels)), top_k_accuracy=accs,
                        dba_per_k=[float(v) for v in y_k], dba_score=dba,
                        power_ratio=pr, excluded=excluded, label=label)


@dataclass(frozen=True)
class CorrelationTable:
    dba_vs_power: float
    topk_vs_power: float
    k: int
    zero_variance: bool
    points: list  # (dba, top-k accuracy, power ratio) per report


def _pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0:
        return float("nan")
    return float((da @ db) / denom)


def metric_correlation(reports, k: int = 1) -> CorrelationTable:
    """Pearson correlation of DBA and of top-k accuracy against power ratio across reports."""
    reports = list(reports)
    if len(reports) < 3:
        raise InsufficientDataError(f"need at least 3 reports, got {len(reports)}")
    dba = [r.dba_score for r in reports]
    acc = [r.top_k_accuracy[k - 1] for r in reports]
    pr = [r.power_ratio for r in reports]
    c1, c2 = _pearson(dba, pr), _pearson(acc, pr)
    return CorrelationTable(dba_vs_power=c1, topk_vs_power=c2, k=k,
                            zero_variance=bool(np.isnan(c1) or np.isnan(c2)),
                            points=list(zip(dba, acc, pr)))
