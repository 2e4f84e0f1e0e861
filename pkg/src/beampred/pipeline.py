"""Experiment wiring shared by the CLI, demos and the acceptance suite."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dataset, geodesy, metrics, model
from .beamsim import ArrayConfig
from .errors import ConfigError, ScoringError
from .geodesy import GeoPosition, UtmCoordinate


def offset_position(origin: GeoPosition, east: float, north: float) -> GeoPosition:
    """Position ``east``/``north`` metres away from ``origin`` on the origin's UTM grid."""
    o = geodesy.latlon_to_utm(origin)
    p = geodesy.utm_to_latlon(UtmCoordinate(o.easting + east, o.northing + north, o.zone, o.north))
    return GeoPosition(round(p.latitude, 9), round(p.longitude, 9))


def _scenario(sid, bs, start, end, **kw):
    return dataset.ScenarioConfig(scenario_id=sid, bs=bs, road_start=offset_position(bs, *start),
                                  road_end=offset_position(bs, *end), **kw)


def default_scenarios(gps_noise_std: float = 1.0, num_trajectories: int = 3):
    """Three seen sites (ids 32-34) and one unseen site (id 31) around one city block.

    Each site is a basestation watching a one-way straight road 60-110 m away.
    """
    kw = dict(gps_noise_std=gps_noise_std, num_trajectories=num_trajectories)
    seen = [
        _scenario(32, GeoPosition(33.4190, -111.9290), (-120.0, 70.0), (120.0, 70.0), **kw),
        _scenario(33, GeoPosition(33.4215, -111.9360), (90.0, 110.0), (90.0, -110.0), **kw),
        _scenario(34, GeoPosition(33.4170, -111.9420), (-110.0, -20.0), (70.0, -120.0), **kw),
    ]
    unseen = _scenario(31, GeoPosition(33.4240, -111.9250), (-60.0, -100.0), (-60.0, 100.0), **kw)
    return seen, unseen


@dataclass
class ExperimentConfig:
    train_scenarios: list
    unseen_scenario: dataset.ScenarioConfig
    array: ArrayConfig = field(default_factory=ArrayConfig)
    # the synthetic sites need more steps than the ModelConfig defaults to separate 64 beams
    model: model.ModelConfig = field(
        default_factory=lambda: model.ModelConfig(learning_rate=3e-3, epochs=300))
    metric: metrics.MetricConfig = field(default_factory=metrics.MetricConfig)
    seed: int = 2022
    holdout_fraction: float = 0.2
    split_ratios: tuple = (0.7, 0.2, 0.1)

    def __post_init__(self):
        if self.model.num_classes != self.array.num_beams:
            raise ConfigError(f"model has {self.model.num_classes} classes but codebook has "
                              f"{self.array.num_beams} beams")
        if self.model.seq_len != dataset.R_POSITIONS:
            raise ConfigError("model seq_len must equal the number of positions per sample")

    @classmethod
    def default(cls, seed: int = 2022, **overrides) -> "ExperimentConfig":
        seen, unseen = default_scenarios()
        return cls(train_scenarios=seen, unseen_scenario=unseen, seed=seed, **overrides)

    def bs_refs(self) -> dict:
        return {c.scenario_id: c.bs for c in self.train_scenarios + [self.unseen_scenario]}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "holdout_fraction": self.holdout_fraction,
            "split_ratios": list(self.split_ratios),
            "array": asdict(self.array),
            "model": {**asdict(self.model), "adam_betas": list(self.model.adam_betas)},
            "metric": asdict(self.metric),
            "train_scenarios": [c.to_dict() for c in self.train_scenarios],
            "unseen_scenario": self.unseen_scenario.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                train_scenarios=[dataset.ScenarioConfig.from_dict(s) for s in d["train_scenarios"]],
                unseen_scenario=dataset.ScenarioConfig.from_dict(d["unseen_scenario"]),
                array=ArrayConfig(**d.get("array", {})),
                model=model.ModelConfig.from_dict(d.get("model", {})),
                metric=metrics.MetricConfig(**d.get("metric", {})),
                seed=int(d.get("seed", 2022)),
                holdout_fraction=float(d.get("holdout_fraction", 0.2)),
                split_ratios=tuple(d.get("split_ratios", (0.7, 0.2, 0.1))),
            )
        except KeyError as exc:
            raise ConfigError(f"experiment config missing {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, model=replace(self.model, seed=seed))


def build(cfg: ExperimentConfig) -> dataset.Challenge:
    return dataset.build_challenge(cfg.train_scenarios, cfg.unseen_scenario, seed=cfg.seed,
                                   array=cfg.array, holdout_fraction=cfg.holdout_fraction)


def raw_features(samples, bs_refs: dict) -> np.ndarray:
    """(N, 2, 2) BS-relative east/north metres of each sample's two GPS fixes."""
    out = np.empty((len(samples), dataset.R_POSITIONS, 2))
    for i, s in enumerate(samples):
        try:
            bs = bs_refs[s.scenario_id]
        except KeyError:
            raise ConfigError(f"no basestation reference for scenario {s.scenario_id}") from None
        out[i] = geodesy.relative_positions(s.positions, bs)
    return out


def features(samples, stats: geodesy.NormalizationStats, bs_refs: dict | None = None):
    refs = dict(stats.bs_refs)
    for sid, ref in (bs_refs or {}).items():
        if sid in refs and refs[sid] != ref:
            raise ConfigError(f"basestation of scenario {sid} differs from the one the "
                              f"normalization statistics were fitted with")
        refs.setdefault(sid, ref)
    return geodesy.apply_minmax(raw_features(samples, refs), stats)


@dataclass
class TrainedBaseline:
    params: dict
    stats: geodesy.NormalizationStats
    log: model.TrainLog
    split: dataset.DatasetSplit
    internal_test: metrics.MetricReport


def train_baseline(train_samples, bs_refs: dict, model_cfg: model.ModelConfig,
                   metric_cfg: metrics.MetricConfig | None = None, split_seed: int = 0,
                   ratios=(0.7, 0.2, 0.1), on_epoch=None) -> TrainedBaseline:
    """70-20-10 split of the labelled data, train-only min-max fit, GRU training.

    ``on_epoch(epoch, params, log, stats)`` is forwarded to :func:`model.train`
    with the fitted normalization statistics appended.
    """
    metric_cfg = metric_cfg or metrics.MetricConfig()
    split = dataset.split_dataset(train_samples, ratios, seed=split_seed)
    parts = [dataset.select(train_samples, ids) for ids in (split.train, split.validation, split.test)]
    used = {s.scenario_id for s in train_samples}
    refs = {sid: ref for sid, ref in bs_refs.items() if sid in used}
    raw_train = raw_features(parts[0], refs)
    stats = geodesy.fit_minmax(raw_train.reshape(-1, 2)).with_refs(refs)
    xs = [geodesy.apply_minmax(raw_train, stats)] + [features(p, stats) for p in parts[1:]]
    ys = [np.array([s.label for s in p]) for p in parts]
    hook = None if on_epoch is None else (lambda e, p, lg: on_epoch(e, p, lg, stats))
    params, log = model.train(xs[0], ys[0], xs[1], ys[1], model_cfg, metric_cfg, on_epoch=hook)
    report = metrics.MetricReport(0, [], [], float("nan"), label="Internal test")
    if len(parts[2]):
        preds = model.predict_topk(params, xs[2], metric_cfg.top_k)
        report = metrics.evaluate(preds, ys[2], metric_cfg,
                                  np.array([s.power_vector for s in parts[2]]),
                                  [s.scenario_id for s in parts[2]], label="Internal test")
    return TrainedBaseline(params, stats, log, split, report)


def predict(params, stats, samples, k: int, bs_refs: dict | None = None) -> np.ndarray:
    return model.predict_topk(params, features(samples, stats, bs_refs), k)


def score(predictions: dict, hidden: dict, scenario_of: dict, cfg: metrics.MetricConfig,
          seen_scenarios=(), unseen_scenarios=()) -> metrics.MetricReport:
    """Overall, per-scenario and seen/unseen reports.

    ``predictions``: sample_id -> ranked beams; ``hidden``: sample_id ->
    (label, power vector); ``scenario_of``: sample_id -> scenario id.
    Noise floors are per scenario over the scored power vectors.
    """
    missing = sorted(set(hidden) - set(predictions))
    if missing:
        raise ScoringError(f"no prediction for sample_id(s) {missing[:20]}"
                           + (" ..." if len(missing) > 20 else ""))
    extra = sorted(set(predictions) - set(hidden))
    if extra:
        raise ScoringError(f"prediction for unknown sample_id(s) {extra[:20]}")
    ids = sorted(hidden)
    preds = np.array([predictions[i][:cfg.top_k] for i in ids])
    labels = np.array([hidden[i][0] for i in ids])
    powers = np.array([hidden[i][1] for i in ids])
    sids = np.array([scenario_of[i] for i in ids])
    floors = metrics.noise_floors(powers, sids)

    def sub(mask, name):
        return metrics.evaluate(preds[mask], labels[mask], cfg, powers[mask], sids[mask],
                                floors, label=name)

    report = sub(np.ones(len(ids), bool), "Test")
    groups = [("Seen", np.isin(sids, list(seen_scenarios))),
              ("Unseen", np.isin(sids, list(unseen_scenarios)))]
    for name, mask in groups:
        if mask.any():
            report.breakdown[name] = sub(mask, name)
    for sid in np.unique(sids):
        report.breakdown[f"Scenario {sid}"] = sub(sids == sid, f"Scenario {sid}")
    return report


def generalization_gap(report: metrics.MetricReport) -> float:
    return report.breakdown["Seen"].dba_score - report.breakdown["Unseen"].dba_score
