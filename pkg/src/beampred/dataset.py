"""Synthetic challenge scenarios, sequence samples, splits and the CSV schema.

Beam indices are 0-based in memory and 1-based on disk. Every float that
ends up in a file is quantized to 9 significant digits at creation time, so
in-memory datasets and their CSV round trips are identical.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import beamsim
from .errors import ConfigError, ContractError, ParseError
from .geodesy import (GeoPosition, UtmCoordinate, latlon_to_utm, relative_position,
                      utm_to_latlon)

R_WINDOW = 5
R_POSITIONS = 2
MODALITIES = ("img", "lidar", "radar")
_MODALITY_PATHS = {"img": ("camera_data", "jpg"), "lidar": ("lidar_data", "ply"),
                   "radar": ("radar_data", "npy")}


def q9(x: float) -> float:
    """Round to the 9 significant digits used in CSV files."""
    return float(f"{x:.9g}")


def fmt(x: float) -> str:
    return f"{x:.9g}"


@dataclass(frozen=True)
class ScenarioConfig:
    """A basestation watching a straight one-way road segment.

    ``boresight_deg`` is the array broadside azimuth (clockwise from north);
    ``None`` points it at the closest point of the road line.
    """
    scenario_id: int
    bs: GeoPosition
    road_start: GeoPosition
    road_end: GeoPosition
    num_trajectories: int = 3
    speed: float = 10.0
    sample_rate: float = 10.0
    gps_noise_std: float = 1.0
    seed: int = 0
    boresight_deg: float | None = None
    lane_offset_std: float = 0.5
    speed_std: float = 0.5
    noise_power: float = 1e-6
    ref_distance: float = 1.0
    path_loss_exponent: float = 1.0

    def __post_init__(self):
        if int(self.num_trajectories) != self.num_trajectories or self.num_trajectories < 1:
            raise ConfigError(f"scenario {self.scenario_id}: num_trajectories must be >= 1")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be > 0")
        if not self.speed > 0:
            raise ConfigError("speed must be > 0")
        if self.gps_noise_std < 0 or self.lane_offset_std < 0 or self.speed_std < 0:
            raise ConfigError("noise standard deviations must be >= 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for key in ("bs", "road_start", "road_end"):
            d[key] = [d[key].latitude, d[key].longitude]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        for key in ("bs", "road_start", "road_end"):
            if key not in d:
                raise ConfigError(f"scenario config missing {key!r}")
            d[key] = GeoPosition(*d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TimeStep:
    scenario_id: int
    trajectory: int
    step: int
    true_xy: np.ndarray   # BS-relative east/north metres
    gps_xy: np.ndarray
    true_position: GeoPosition
    gps: GeoPosition      # quantized to 9 significant digits
    power_vector: np.ndarray
    label: int


@dataclass
class ChallengeSample:
    sample_id: int
    scenario_id: int
    positions: tuple  # two GeoPositions, steps t-4 and t-3
    modality_refs: dict  # modality -> 5 reference strings
    power_vector: np.ndarray | None = None
    label: int | None = None

    def __post_init__(self):
        if len(self.positions) != R_POSITIONS:
            raise ContractError(f"sample {self.sample_id}: need {R_POSITIONS} positions")
        for m in MODALITIES:
            if len(self.modality_refs.get(m, ())) != R_WINDOW:
                raise ContractError(f"sample {self.sample_id}: need {R_WINDOW} {m} references")
        if self.power_vector is not None:
            self.power_vector = np.asarray(self.power_vector, dtype=float)
            if self.label is not None and self.label != int(np.argmax(self.power_vector)):
                raise ContractError(f"sample {self.sample_id}: label is not the argmax beam")
        if self.label is not None and self.label < 0:
            raise ContractError(f"sample {self.sample_id}: negative label")

    def __eq__(self, other):
        if not isinstance(other, ChallengeSample):
            return NotImplemented
        if (self.power_vector is None) != (other.power_vector is None):
            return False
        same_powers = self.power_vector is None or np.array_equal(self.power_vector,
                                                                  other.power_vector)
        return (self.sample_id == other.sample_id and self.scenario_id == other.scenario_id
                and tuple(self.positions) == tuple(other.positions)
                and {k: tuple(v) for k, v in self.modality_refs.items()}
                == {k: tuple(v) for k, v in other.modality_refs.items()}
                and self.label == other.label and same_powers)

    def hidden(self) -> "ChallengeSample":
        """Copy without power vector and label, as released in a test file."""
        return ChallengeSample(self.sample_id, self.scenario_id, self.positions,
                               self.modality_refs)


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    validation: list
    test: list


def derive_seed(*keys: int) -> np.random.SeedSequence:
    """Fixed splitting rule: each (scenario seed, scenario, trajectory[, master]) key owns a stream."""
    return np.random.SeedSequence([int(k) for k in keys])


def _boresight(config: ScenarioConfig, start_xy, end_xy) -> float:
    if config.boresight_deg is not None:
        return float(config.boresight_deg)
    d = end_xy - start_xy
    t = -start_xy @ d / (d @ d)
    foot = start_xy + t * d
    return math.degrees(math.atan2(foot[0], foot[1]))


def scenario_geometry(config: ScenarioConfig):
    """Basestation UTM, BS-relative road endpoints and resolved boresight azimuth."""
    bs_utm = latlon_to_utm(config.bs)
    start_xy = relative_position(latlon_to_utm(config.road_start), bs_utm)
    end_xy = relative_position(latlon_to_utm(config.road_end), bs_utm)
    if np.hypot(*(end_xy - start_xy)) == 0.0:
        raise ConfigError(f"scenario {config.scenario_id}: road segment has zero length")
    return bs_utm, start_xy, end_xy, _boresight(config, start_xy, end_xy)


def generate_scenario(config: ScenarioConfig, array: beamsim.ArrayConfig | None = None,
                      master_seed: int | None = None) -> list:
    """Simulate every trajectory of a scenario; returns time-ordered TimeStep records.

    Power vectors and labels come from the true position; only the reported
    GPS fix carries noise.
    """
    array = array or beamsim.ArrayConfig()
    codebook = beamsim.build_codebook(array)
    bs_utm, start_xy, end_xy, boresight = scenario_geometry(config)
    seg = end_xy - start_xy
    length = float(np.hypot(*seg))
    along = seg / length
    normal = np.array([-along[1], along[0]])
    extra_key = [] if master_seed is None else [master_seed]

    def to_geo(xy):
        utm = UtmCoordinate(bs_utm.easting + xy[0], bs_utm.northing + xy[1],
                            bs_utm.zone, bs_utm.north)
        return utm_to_latlon(utm)

    records = []
    for traj in range(config.num_trajectories):
        rng = np.random.default_rng(
            derive_seed(config.seed, config.scenario_id, traj, *extra_key))
        offset = rng.normal(0.0, config.lane_offset_std) if config.lane_offset_std else 0.0
        speed = config.speed + (rng.normal(0.0, config.speed_std) if config.speed_std else 0.0)
        speed = max(speed, 0.1 * config.speed)
        step_len = speed / config.sample_rate
        n_steps = int(length // step_len) + 1
        for i in range(n_steps):
            true_xy = start_xy + along * (i * step_len) + normal * offset
            noise = rng.normal(0.0, config.gps_noise_std, 2) if config.gps_noise_std else np.zeros(2)
            gps_xy = true_xy + noise
            true_geo = to_geo(true_xy)
            if config.gps_noise_std:
                g = to_geo(gps_xy)
            else:
                g = true_geo
            gps = GeoPosition(q9(g.latitude), q9(g.longitude))
            channel = beamsim.synth_channel(
                true_xy, config=array, boresight_deg=boresight,
                ref_distance=config.ref_distance, path_loss_exponent=config.path_loss_exponent,
                noise_power=config.noise_power)
            powers = beamsim.receive_power(channel, codebook) + config.noise_power
            powers = np.array([q9(p) for p in powers])
            records.append(TimeStep(config.scenario_id, traj, i, true_xy, gps_xy, true_geo,
                                    gps, powers, beamsim.optimal_beam(powers)))
    return records


def _refs(scenario_id: int, trajectory: int, steps) -> dict:
    out = {}
    for m in MODALITIES:
        folder, ext = _MODALITY_PATHS[m]
        out[m] = tuple(f"./scenario{scenario_id}/unit1/{folder}/{m}_{trajectory}_{s}.{ext}"
                       for s in steps)
    return out


def assemble_sequences(records: Sequence[TimeStep], r: int = R_WINDOW,
                       r_prime: int = R_POSITIONS, first_id: int = 0) -> list:
    """Stride-1 windows of length r over one trajectory.

    Positions come from the first r_prime window steps; power vector and
    label from the last step. Fewer than r records yields no samples.
    """
    if r_prime > r:
        raise ConfigError("r_prime cannot exceed r")
    samples = []
    for start in range(len(records) - r + 1):
        window = records[start:start + r]
        last = window[-1]
        samples.append(ChallengeSample(
            sample_id=first_id + start,
            scenario_id=last.scenario_id,
            positions=tuple(rec.gps for rec in window[:r_prime]),
            modality_refs=_refs(last.scenario_id, last.trajectory, [rec.step for rec in window]),
            power_vector=last.power_vector,
            label=last.label,
        ))
    return samples


def scenario_samples(config: ScenarioConfig, array=None, first_id: int = 0,
                     master_seed: int | None = None) -> list:
    """Generate a scenario and window each trajectory; ids are consecutive from first_id."""
    records = generate_scenario(config, array, master_seed)
    samples = []
    for traj in range(config.num_trajectories):
        recs = [r for r in records if r.trajectory == traj]
        samples += assemble_sequences(recs, first_id=first_id + len(samples))
    return samples


def _cut_points(n: int, ratios) -> list:
    cum = np.cumsum(ratios)
    return [int(round(n * c)) for c in cum[:-1]]


def split_dataset(samples, ratios=(0.7, 0.2, 0.1), seed: int = 0) -> DatasetSplit:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative values summing to 1: {ratios}")
    if not len(samples):
        raise ConfigError("cannot split an empty sample list")
    ids = np.array([s.sample_id for s in samples])
    perm = np.random.default_rng(derive_seed(seed, 7001)).permutation(len(ids))
    a, b = _cut_points(len(ids), ratios)
    return DatasetSplit(train=ids[perm[:a]].tolist(), validation=ids[perm[a:b]].tolist(),
                        test=ids[perm[b:]].tolist())


def select(samples, ids) -> list:
    by_id = {s.sample_id: s for s in samples}
    return [by_id[i] for i in ids]


@dataclass
class Challenge:
    train: list
    test: list            # labels and powers stripped
    hidden: list          # full test samples (ground truth)
    seen_ids: list
    unseen_ids: list
    train_scenarios: list = field(default_factory=list)
    unseen_scenario: int | None = None


def build_challenge(train_scenarios: Sequence[ScenarioConfig], unseen_scenario: ScenarioConfig,
                    seed: int = 0, array=None, holdout_fraction: float = 0.2,
                    test_size: int | None = None) -> Challenge:
    """Training set from the seen scenarios; a 50/50 seen/unseen test set.

    The seen half is a random hold-out of seen-scenario windows. Its size is
    ``holdout_fraction`` of the seen pool (or ``test_size // 2``), capped by
    what the unseen scenario can supply.
    """
    if not train_scenarios:
        raise ConfigError("need at least one training scenario")
    train_ids = [c.scenario_id for c in train_scenarios]
    if len(set(train_ids)) != len(train_ids):
        raise ConfigError("duplicate training scenario ids")
    if unseen_scenario.scenario_id in train_ids:
        raise ConfigError(f"unseen scenario {unseen_scenario.scenario_id} is also a training scenario")

    pool, next_id = [], 0
    for cfg in train_scenarios:
        s = scenario_samples(cfg, array, first_id=next_id, master_seed=seed)
        pool += s
        next_id += len(s)
    unseen = scenario_samples(unseen_scenario, array, first_id=next_id, master_seed=seed)

    half = test_size // 2 if test_size is not None else int(round(holdout_fraction * len(pool)))
    half = min(half, len(unseen), len(pool))
    rng = np.random.default_rng(derive_seed(seed, 7002))
    seen_pick = np.sort(rng.permutation(len(pool))[:half])
    unseen_pick = np.sort(rng.permutation(len(unseen))[:half])
    held = set(seen_pick.tolist())
    train = [s for i, s in enumerate(pool) if i not in held]
    seen_test = [pool[i] for i in seen_pick]
    unseen_test = [unseen[i] for i in unseen_pick]
    hidden = seen_test + unseen_test
    return Challenge(train=train, test=[s.hidden() for s in hidden], hidden=hidden,
                     seen_ids=[s.sample_id for s in seen_test],
                     unseen_ids=[s.sample_id for s in unseen_test],
                     train_scenarios=train_ids, unseen_scenario=unseen_scenario.scenario_id)


# --- CSV schema -------------------------------------------------------------

def csv_header(num_beams: int | None) -> list:
    cols = ["sample_id", "scenario_id", "lat_1", "lon_1", "lat_2", "lon_2"]
    for m in MODALITIES:
        cols += [f"{m}_{i}" for i in range(1, R_WINDOW + 1)]
    if num_beams:
        cols += [f"power_{i}" for i in range(1, num_beams + 1)] + ["beam_label"]
    return cols


def hidden_header(num_beams: int) -> list:
    return ["sample_id", "beam_label"] + [f"power_{i}" for i in range(1, num_beams + 1)]


def _power_columns(header) -> int:
    n = 0
    while f"power_{n + 1}" in header:
        n += 1
    return n


def write_csv(samples, path, labelled: bool | None = None) -> None:
    """Write samples; ``labelled=None`` writes power/label columns iff every sample has them."""
    samples = list(samples)
    if labelled is None:
        labelled = bool(samples) and all(s.power_vector is not None for s in samples)
    nb = len(samples[0].power_vector) if labelled and samples else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(nb))
        for s in samples:
            row = [s.sample_id, s.scenario_id]
            for p in s.positions:
                row += [fmt(p.latitude), fmt(p.longitude)]
            for m in MODALITIES:
                row += list(s.modality_refs[m])
            if labelled:
                if s.power_vector is None or s.label is None:
                    raise ContractError(f"sample {s.sample_id} has no ground truth to write")
                if len(s.power_vector) != nb:
                    raise ContractError(f"sample {s.sample_id}: power vector length differs")
                row += [fmt(p) for p in s.power_vector] + [s.label + 1]
            w.writerow(row)


def _field(row, col, lineno, conv):
    try:
        value = row[col]
    except KeyError:
        raise ParseError("missing column", row=lineno, column=col) from None
    if value is None or value == "":
        raise ParseError("empty value", row=lineno, column=col)
    try:
        return conv(value)
    except ValueError:
        raise ParseError(f"cannot parse {value!r}", row=lineno, column=col) from None


def _open_dict_reader(fh, required):
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"missing column(s) {missing}", row=1, column=missing[0])
    return reader, header


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader, header = _open_dict_reader(fh, csv_header(None))
        nb = _power_columns(header)
        labelled = nb > 0
        if labelled and "beam_label" not in header:
            raise ParseError("power columns present but beam_label missing", row=1,
                             column="beam_label")
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if None in row:
                raise ParseError("too many fields", row=lineno)
            positions = tuple(
                GeoPosition(_field(row, f"lat_{i}", lineno, float),
                            _field(row, f"lon_{i}", lineno, float))
                for i in range(1, R_POSITIONS + 1))
            refs = {m: tuple(_field(row, f"{m}_{i}", lineno, str) for i in range(1, R_WINDOW + 1))
                    for m in MODALITIES}
            powers = label = None
            if labelled:
                powers = np.array([_field(row, f"power_{i}", lineno, float)
                                   for i in range(1, nb + 1)])
                label = _field(row, "beam_label", lineno, int) - 1
                if not 0 <= label < nb:
                    raise ParseError(f"beam label {label + 1} outside 1..{nb}", row=lineno,
                                     column="beam_label")
            try:
                samples.append(ChallengeSample(
                    _field(row, "sample_id", lineno, int), _field(row, "scenario_id", lineno, int),
                    positions, refs, powers, label))
            except ContractError as exc:
                raise ParseError(str(exc), row=lineno) from None
        return samples


def write_hidden_labels(samples, path) -> None:
    samples = list(samples)
    nb = len(samples[0].power_vector) if samples else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(hidden_header(nb))
        for s in samples:
            w.writerow([s.sample_id, s.label + 1] + [fmt(p) for p in s.power_vector])


def read_hidden_labels(path) -> dict:
    """Return sample_id -> (label, power_vector) with 0-based labels."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader, header = _open_dict_reader(fh, ["sample_id", "beam_label"])
        nb = _power_columns(header)
        for lineno, row in enumerate(reader, start=2):
            sid = _field(row, "sample_id", lineno, int)
            label = _field(row, "beam_label", lineno, int) - 1
            powers = np.array([_field(row, f"power_{i}", lineno, float) for i in range(1, nb + 1)])
            if nb and not 0 <= label < nb:
                raise ParseError(f"beam label {label + 1} outside 1..{nb}", row=lineno,
                                 column="beam_label")
            out[sid] = (label, powers)
    return out


def write_predictions(sample_ids, ranked, path) -> None:
    """``sample_id,beam_1..beam_k`` with 1-based beams."""
    ranked = np.asarray(ranked)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"beam_{i}" for i in range(1, ranked.shape[1] + 1)])
        for sid, row in zip(sample_ids, ranked):
            w.writerow([int(sid)] + [int(b) + 1 for b in row])


def read_predictions(path) -> dict:
    """Return sample_id -> tuple of 0-based beams, rejecting duplicate rows or beams."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader, header = _open_dict_reader(fh, ["sample_id", "beam_1"])
        k = 0
        while f"beam_{k + 1}" in header:
            k += 1
        for lineno, row in enumerate(reader, start=2):
            sid = _field(row, "sample_id", lineno, int)
            beams = tuple(_field(row, f"beam_{i}", lineno, int) - 1 for i in range(1, k + 1))
            if min(beams) < 0:
                raise ParseError("beam indices are 1-based", row=lineno)
            if len(set(beams)) != len(beams):
                raise ParseError(f"duplicate beams {beams}", row=lineno)
            if sid in out:
                raise ParseError(f"duplicate sample_id {sid}", row=lineno, column="sample_id")
            out[sid] = beams
    return out
