"""Uniform linear array, oversampled beam codebook and a geometric OFDM channel.

All complex arithmetic is complex128. Beam indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, DomainError, GeometryError


@dataclass(frozen=True)
class ArrayConfig:
    num_antennas: int = 16
    num_beams: int = 64
    num_subcarriers: int = 32
    element_spacing: float = 0.5

    def __post_init__(self):
        for name in ("num_antennas", "num_beams", "num_subcarriers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.num_beams < self.num_antennas:
            raise ConfigError(
                f"num_beams ({self.num_beams}) must be >= num_antennas ({self.num_antennas})")
        if not self.element_spacing > 0:
            raise ConfigError("element_spacing must be > 0")


@dataclass(frozen=True)
class BeamCodebook:
    config: ArrayConfig
    beams: np.ndarray  # (Q, M) complex, row q is f_q
    grid: np.ndarray   # (Q,) sine of each beam's pointing direction

    @property
    def num_beams(self) -> int:
        return self.beams.shape[0]


@dataclass(frozen=True)
class Path:
    """One propagation path: direction (as sine from broadside), complex gain, normalized delay."""
    sin_angle: float
    gain: complex = 1.0
    delay: float = 0.0


@dataclass(frozen=True)
class ChannelState:
    per_subcarrier: np.ndarray  # (K, M) complex
    noise_power: float = 0.0
    tx_power: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.per_subcarrier)
        if h.ndim != 2:
            raise ContractError(f"per_subcarrier must be (K, M), got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ContractError("channel contains non-finite entries")
        if self.noise_power < 0:
            raise ConfigError("noise_power must be >= 0")
        if not self.tx_power > 0:
            raise ConfigError("tx_power must be > 0")


def steering_vector(sin_angle: float, config: ArrayConfig) -> np.ndarray:
    """Unnormalized ULA response exp(j 2 pi d m s), m = 0..M-1."""
    s = float(sin_angle)
    if not np.isfinite(s) or abs(s) > 1.0:
        raise DomainError(f"sin_angle must lie in [-1, 1], got {sin_angle!r}")
    m = np.arange(config.num_antennas)
    return np.exp(2j * np.pi * config.element_spacing * m * s)


def beam_grid(num_beams: int) -> np.ndarray:
    """Centered uniform grid in sine space: s_q = -1 + (2q + 1) / Q."""
    q = np.arange(num_beams)
    return -1.0 + (2.0 * q + 1.0) / num_beams


def build_codebook(config: ArrayConfig | None = None) -> BeamCodebook:
    config = config or ArrayConfig()
    if config.num_beams < config.num_antennas:
        raise ConfigError("codebook needs num_beams >= num_antennas")
    grid = beam_grid(config.num_beams)
    m = np.arange(config.num_antennas)
    phases = 2.0 * np.pi * config.element_spacing * np.outer(grid, m)
    beams = np.exp(-1j * phases) / np.sqrt(config.num_antennas)
    return BeamCodebook(config=config, beams=beams, grid=grid)


def receive_power(channel: ChannelState, codebook: BeamCodebook) -> np.ndarray:
    """Per-beam received power averaged over subcarriers, scaled by tx power.

    Returns a length-Q float array with entry q = P/K * sum_k |h_k^T f_q|^2.
    """
    h = np.asarray(channel.per_subcarrier, dtype=np.complex128)
    if h.shape[1] != codebook.beams.shape[1]:
        raise ContractError(
            f"channel has {h.shape[1]} antennas, codebook has {codebook.beams.shape[1]}")
    # (K, M) @ (M, Q): h_k^T f_q, no conjugation
    gains = h @ codebook.beams.T
    return channel.tx_power * np.mean(np.abs(gains) ** 2, axis=0)


def optimal_beam(powers: Sequence[float]) -> int:
    p = np.asarray(powers, dtype=float)
    if p.size == 0:
        raise DomainError("cannot select a beam from an empty power vector")
    # np.argmax returns the first maximum, i.e. lowest index on ties
    return int(np.argmax(p))


def sin_from_boresight(user_position, boresight_deg: float = 0.0) -> float:
    """Sine of the angle between the array broadside and the user direction.

    ``user_position`` is (east, north) in meters relative to the BS and
    ``boresight_deg`` is the broadside azimuth, clockwise from north.
    Positive sines lie clockwise of broadside.
    """
    east, north = (float(v) for v in user_position)
    dist = np.hypot(east, north)
    if dist == 0.0:
        raise GeometryError("user position coincides with the basestation")
    b = np.deg2rad(boresight_deg)
    s = (east * np.cos(b) - north * np.sin(b)) / dist
    return float(np.clip(s, -1.0, 1.0))


def los_path(user_position, boresight_deg: float = 0.0, ref_distance: float = 1.0,
             path_loss_exponent: float = 1.0, delay_per_meter: float = 0.0) -> Path:
    """Line-of-sight path with amplitude (ref_distance / d) ** exponent."""
    dist = float(np.hypot(*user_position))
    if dist == 0.0:
        raise GeometryError("user position coincides with the basestation")
    amp = (ref_distance / dist) ** path_loss_exponent
    return Path(sin_angle=sin_from_boresight(user_position, boresight_deg),
                gain=complex(amp), delay=dist * delay_per_meter)


def synth_channel(user_position, paths: Sequence[Path] | None = None,
                  config: ArrayConfig | None = None, *, boresight_deg: float = 0.0,
                  ref_distance: float = 1.0, path_loss_exponent: float = 1.0,
                  delay_per_meter: float = 0.0, tx_power: float = 1.0,
                  noise_power: float = 0.0) -> ChannelState:
    """Geometric multipath channel h_k = sum_l a_l exp(-j 2 pi k d_l / K) a(s_l).

    With ``paths=None`` the channel is the single LOS path towards
    ``user_position``; otherwise exactly the given paths are used (prepend
    :func:`los_path` to combine LOS with extra scatterers).
    """
    config = config or ArrayConfig()
    east, north = (float(v) for v in user_position)
    if np.hypot(east, north) == 0.0:
        raise GeometryError("user position coincides with the basestation")
    if paths is None:
        paths = [los_path((east, north), boresight_deg, ref_distance,
                          path_loss_exponent, delay_per_meter)]
    K = config.num_subcarriers
    k = np.arange(K)
    h = np.zeros((K, config.num_antennas), dtype=np.complex128)
    for path in paths:
        gain = complex(path.gain)
        if not np.isfinite(gain) or not np.isfinite(path.delay):
            raise ContractError(f"non-finite path parameters: {path}")
        phase = np.exp(-2j * np.pi * k * path.delay / K)
        h += gain * np.outer(phase, steering_vector(path.sin_angle, config))
    return ChannelState(per_subcarrier=h, noise_power=noise_power, tx_power=tx_power)


def near_peak_region(powers, fraction: float = 0.5) -> tuple[int, int]:
    """Inclusive index range of the contiguous run around the peak with power >= fraction * peak."""
    p = np.asarray(powers, dtype=float)
    peak = optimal_beam(p)
    thresh = fraction * p[peak]
    lo = peak
    while lo > 0 and p[lo - 1] >= thresh:
        lo -= 1
    hi = peak
    while hi < p.size - 1 and p[hi + 1] >= thresh:
        hi += 1
    return lo, hi
