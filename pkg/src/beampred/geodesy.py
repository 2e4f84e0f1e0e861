"""WGS-84 UTM projection and the three-step position normalization.

The projection uses the Krueger n-series to sixth order, which is good to
well under a millimetre inside a zone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Iterable

import numpy as np

from .errors import ConfigError, DomainError, ParseError

# WGS-84
A_WGS84 = 6378137.0
F_WGS84 = 1.0 / 298.257223563
K0 = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0

_E2 = F_WGS84 * (2.0 - F_WGS84)
_E = math.sqrt(_E2)
_N = F_WGS84 / (2.0 - F_WGS84)
_A_RECT = A_WGS84 / (1.0 + _N) * (1.0 + _N**2 / 4.0 + _N**4 / 64.0 + _N**6 / 256.0)


def _poly(coeffs, n=_N):
    return sum(c * n ** (i + 1) for i, c in enumerate(coeffs))


# rows: coefficients of n, n^2, ..., n^6
_ALPHA = [
    _poly([1 / 2, -2 / 3, 5 / 16, 41 / 180, -127 / 288, 7891 / 37800]),
    _poly([0, 13 / 48, -3 / 5, 557 / 1440, 281 / 630, -1983433 / 1935360]),
    _poly([0, 0, 61 / 240, -103 / 140, 15061 / 26880, 167603 / 181440]),
    _poly([0, 0, 0, 49561 / 161280, -179 / 168, 6601661 / 7257600]),
    _poly([0, 0, 0, 0, 34729 / 80640, -3418889 / 1995840]),
    _poly([0, 0, 0, 0, 0, 212378941 / 319334400]),
]
_BETA = [
    _poly([1 / 2, -2 / 3, 37 / 96, -1 / 360, -81 / 512, 96199 / 604800]),
    _poly([0, 1 / 48, 1 / 15, -437 / 1440, 46 / 105, -1118711 / 3870720]),
    _poly([0, 0, 17 / 480, -37 / 840, -209 / 4480, 5569 / 90720]),
    _poly([0, 0, 0, 4397 / 161280, -11 / 504, -830251 / 7257600]),
    _poly([0, 0, 0, 0, 4583 / 161280, -108847 / 3991680]),
    _poly([0, 0, 0, 0, 0, 20648693 / 638668800]),
]


@dataclass(frozen=True)
class GeoPosition:
    latitude: float
    longitude: float

    def __post_init__(self):
        lat, lon = float(self.latitude), float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise DomainError(f"non-finite coordinates: {lat!r}, {lon!r}")
        if not -90.0 <= lat <= 90.0:
            raise DomainError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise DomainError(f"longitude {lon} outside [-180, 180]")


@dataclass(frozen=True)
class UtmCoordinate:
    easting: float
    northing: float
    zone: int
    north: bool = True

    def __post_init__(self):
        if not 1 <= self.zone <= 60:
            raise DomainError(f"UTM zone {self.zone} outside 1..60")
        if not 0.0 < self.easting < 1_000_000.0:
            raise DomainError(f"easting {self.easting} outside (0, 1e6)")


def zone_number(latitude: float, longitude: float) -> int:
    if 56.0 <= latitude < 64.0 and 3.0 <= longitude < 12.0:
        return 32
    if 72.0 <= latitude <= 84.0 and longitude >= 0.0:
        if longitude < 9.0:
            return 31
        if longitude < 21.0:
            return 33
        if longitude < 33.0:
            return 35
        if longitude < 42.0:
            return 37
    zone = int((longitude + 180.0) // 6.0) + 1
    return min(zone, 60)


def central_meridian(zone: int) -> float:
    return (zone - 1) * 6.0 - 180.0 + 3.0


def latlon_to_utm(pos: GeoPosition, zone: int | None = None) -> UtmCoordinate:
    """Project a WGS-84 position to UTM.

    ``zone`` forces projection into a given zone (useful near boundaries);
    by default the standard zone, including the Norway/Svalbard exceptions,
    is used.
    """
    lat, lon = float(pos.latitude), float(pos.longitude)
    if not -80.0 <= lat <= 84.0:
        raise DomainError(f"latitude {lat} outside the UTM band [-80, 84]")
    if zone is None:
        zone = zone_number(lat, lon)
    phi = math.radians(lat)
    dlam = math.radians(lon - central_meridian(zone))
    dlam = (dlam + math.pi) % (2.0 * math.pi) - math.pi

    sin_phi = math.sin(phi)
    t = math.sinh(math.atanh(sin_phi) - _E * math.atanh(_E * sin_phi))
    xi_p = math.atan2(t, math.cos(dlam))
    eta_p = math.atanh(math.sin(dlam) / math.sqrt(1.0 + t * t))

    xi, eta = xi_p, eta_p
    for j, a in enumerate(_ALPHA, start=1):
        xi += a * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += a * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    easting = FALSE_EASTING + K0 * _A_RECT * eta
    northing = K0 * _A_RECT * xi
    north = lat >= 0.0
    if not north:
        northing += FALSE_NORTHING_SOUTH
    return UtmCoordinate(easting=easting, northing=northing, zone=zone, north=north)


def utm_to_latlon(coord: UtmCoordinate) -> GeoPosition:
    """Inverse projection; accurate to ~1e-9 degree inside a zone."""
    xi = coord.northing - (0.0 if coord.north else FALSE_NORTHING_SOUTH)
    xi /= K0 * _A_RECT
    eta = (coord.easting - FALSE_EASTING) / (K0 * _A_RECT)

    xi_p, eta_p = xi, eta
    for j, b in enumerate(_BETA, start=1):
        xi_p -= b * math.sin(2 * j * xi) * math.cosh(2 * j * eta)
        eta_p -= b * math.cos(2 * j * xi) * math.sinh(2 * j * eta)

    tau_p = math.sin(xi_p) / math.hypot(math.sinh(eta_p), math.cos(xi_p))
    lam = math.atan2(math.sinh(eta_p), math.cos(xi_p))

    # Newton iteration for tau = tan(phi) from the conformal tau'
    tau = tau_p
    for _ in range(8):
        sigma = math.sinh(_E * math.atanh(_E * tau / math.sqrt(1.0 + tau * tau)))
        tau_i = tau * math.sqrt(1.0 + sigma * sigma) - sigma * math.sqrt(1.0 + tau * tau)
        step = ((tau_p - tau_i) / math.sqrt(1.0 + tau_i * tau_i)
                * (1.0 + (1.0 - _E2) * tau * tau)
                / ((1.0 - _E2) * math.sqrt(1.0 + tau * tau)))
        tau += step
        if abs(step) < 1e-14:
            break
    lat = math.degrees(math.atan(tau))
    lon = central_meridian(coord.zone) + math.degrees(lam)
    return GeoPosition(latitude=lat, longitude=lon)


def meridian_arc(latitude: float) -> float:
    """Distance along the WGS-84 meridian from the equator, in metres (unscaled)."""
    coord = latlon_to_utm(GeoPosition(latitude, central_meridian(31)), zone=31)
    northing = coord.northing - (0.0 if coord.north else FALSE_NORTHING_SOUTH)
    return northing / K0


def relative_position(user: UtmCoordinate, bs: UtmCoordinate) -> np.ndarray:
    if user.zone != bs.zone or user.north != bs.north:
        raise DomainError(
            f"user in zone {user.zone}{'N' if user.north else 'S'} but basestation in "
            f"zone {bs.zone}{'N' if bs.north else 'S'}; scenario spans a zone boundary")
    return np.array([user.easting - bs.easting, user.northing - bs.northing])


def relative_positions(positions: Iterable[GeoPosition], bs: GeoPosition) -> np.ndarray:
    """Project positions and subtract the basestation; returns (N, 2) east/north metres."""
    bs_utm = latlon_to_utm(bs)
    rows = [relative_position(latlon_to_utm(p), bs_utm) for p in positions]
    return np.array(rows, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-axis min/max of BS-relative positions, plus the basestation references they were fitted with."""
    minimum: np.ndarray
    maximum: np.ndarray
    bs_refs: dict = field(default_factory=dict)  # scenario_id -> GeoPosition

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=float)
        hi = np.asarray(self.maximum, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ConfigError("normalization stats need max >= min per axis")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    def with_refs(self, bs_refs: dict) -> "NormalizationStats":
        return NormalizationStats(self.minimum, self.maximum, dict(bs_refs))

    def __eq__(self, other):
        if not isinstance(other, NormalizationStats):
            return NotImplemented
        return (np.array_equal(self.minimum, other.minimum)
                and np.array_equal(self.maximum, other.maximum)
                and self.bs_refs == other.bs_refs)

    def to_text(self) -> str:
        lines = ["format=beampred-normstats-1"]
        for axis, name in enumerate(("x", "y")):
            lines.append(f"min_{name}={float(self.minimum[axis])!r}")
            lines.append(f"max_{name}={float(self.maximum[axis])!r}")
        for sid in sorted(self.bs_refs):
            ref = self.bs_refs[sid]
            utm = latlon_to_utm(ref)
            lines.append(f"bs.{sid}.lat={float(ref.latitude)!r}")
            lines.append(f"bs.{sid}.lon={float(ref.longitude)!r}")
            lines.append(f"bs.{sid}.zone={utm.zone}{'N' if utm.north else 'S'}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NormalizationStats":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected key=value", row=lineno)
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        try:
            lo = np.array([float(values["min_x"]), float(values["min_y"])])
            hi = np.array([float(values["max_x"]), float(values["max_y"])])
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r} in normalization stats") from None
        refs = {}
        for key in values:
            if key.startswith("bs.") and key.endswith(".lat"):
                sid = int(key.split(".")[1])
                refs[sid] = GeoPosition(float(values[key]), float(values[f"bs.{sid}.lon"]))
        return cls(lo, hi, refs)

    def save(self, path) -> None:
        FilePath(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        return cls.from_text(FilePath(path).read_text(encoding="utf-8"))


def fit_minmax(positions) -> NormalizationStats:
    pts = np.asarray(positions, dtype=float)
    if pts.size == 0:
        raise DomainError("cannot fit min-max statistics on an empty set")
    pts = pts.reshape(-1, pts.shape[-1])
    return NormalizationStats(pts.min(axis=0), pts.max(axis=0))


def apply_minmax(pos, stats: NormalizationStats) -> np.ndarray:
    """Map each axis to (x - min) / (max - min); constant axes map to 0.5.

    Works on any array whose last axis matches the stats. Values outside the
    fitted range are not clipped.
    """
    x = np.asarray(pos, dtype=float)
    span = stats.maximum - stats.minimum
    degenerate = span == 0
    safe = np.where(degenerate, 1.0, span)
    out = (x - stats.minimum) / safe
    return np.where(degenerate, 0.5, out)
