import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from beampred.errors import ConfigError, DomainError
from beampred.geodesy import (A_WGS84, F_WGS84, K0, GeoPosition, NormalizationStats,
                              UtmCoordinate, apply_minmax, central_meridian, fit_minmax,
                              latlon_to_utm, meridian_arc, relative_position, utm_to_latlon,
                              zone_number)
from oracles import PROJ_REFERENCE


E2 = F_WGS84 * (2 - F_WGS84)


def meridian_arc_quadrature(lat_deg):
    f = lambda phi: A_WGS84 * (1 - E2) / (1 - E2 * math.sin(phi) ** 2) ** 1.5
    return quad(f, 0.0, math.radians(lat_deg), epsabs=1e-9, epsrel=1e-13, limit=200)[0]


def test_equator_on_central_meridian():
    u = latlon_to_utm(GeoPosition(0.0, 3.0))
    assert (u.easting, u.northing, u.zone, u.north) == (500000.0, 0.0, 31, True)


@pytest.mark.parametrize("lat", [1.0, 17.5, 33.4, 45.0, 71.0, 83.9])
def test_central_meridian_northing_is_scaled_arc(lat):
    u = latlon_to_utm(GeoPosition(lat, central_meridian(12)))
    assert u.easting == pytest.approx(500000.0, abs=1e-6)
    assert u.northing == pytest.approx(K0 * meridian_arc_quadrature(lat), abs=1e-4)
    assert meridian_arc(lat) == pytest.approx(meridian_arc_quadrature(lat), abs=1e-4)


@pytest.mark.parametrize("lat,lon,zone,east,north", PROJ_REFERENCE)
def test_against_frozen_reference(lat, lon, zone, east, north):
    u = latlon_to_utm(GeoPosition(lat, lon))
    assert u.zone == zone
    assert u.easting == pytest.approx(east, abs=0.01)
    assert u.northing == pytest.approx(north, abs=0.01)


def test_southern_false_northing():
    u = latlon_to_utm(GeoPosition(-0.000001, 3.0))
    assert not u.north
    assert u.northing == pytest.approx(10_000_000 - 0.11, abs=0.01)


@pytest.mark.parametrize("lat", [-80.01, 84.01, 90.0, -90.0])
def test_polar_latitudes_rejected(lat):
    with pytest.raises(DomainError):
        latlon_to_utm(GeoPosition(lat, 0.0))


def test_geoposition_range():
    with pytest.raises(DomainError):
        GeoPosition(91, 0)
    with pytest.raises(DomainError):
        GeoPosition(0, 181)
    with pytest.raises(DomainError):
        GeoPosition(float("nan"), 0)


def test_zone_numbers():
    assert zone_number(33.4, -111.9) == 12
    assert zone_number(0, 179.99) == 60
    assert zone_number(0, 180.0) == 60
    assert zone_number(60.0, 5.0) == 32  # Norway
    assert zone_number(78.0, 10.0) == 33  # Svalbard


@settings(max_examples=200, deadline=None)
@given(lat=st.floats(-79.9, 83.9), dlon=st.floats(-2.99, 2.99), zone=st.integers(1, 60))
def test_inverse_round_trip(lat, dlon, zone):
    lon = central_meridian(zone) + dlon
    u = latlon_to_utm(GeoPosition(lat, lon), zone=zone)
    back = utm_to_latlon(u)
    assert back.latitude == pytest.approx(lat, abs=1e-9)
    assert back.longitude == pytest.approx(lon, abs=1e-9)


def _one_metre_apart(lat, lon, bearing):
    """Second point 1 m away using local radii of curvature (small-angle)."""
    phi = math.radians(lat)
    w = 1 - E2 * math.sin(phi) ** 2
    m_radius = A_WGS84 * (1 - E2) / w ** 1.5
    n_radius = A_WGS84 / math.sqrt(w)
    dn, de = math.cos(bearing), math.sin(bearing)
    return GeoPosition(lat + math.degrees(dn / m_radius),
                       lon + math.degrees(de / (n_radius * math.cos(phi))))


@pytest.mark.parametrize("lat,lon", [(33.42, -111.93), (45.0, 7.5), (-37.8, 144.9), (52.1, 0.3)])
@pytest.mark.parametrize("bearing", [0.0, 0.7, math.pi / 2, 2.5])
def test_one_metre_preserved(lat, lon, bearing):
    a = GeoPosition(lat, lon)
    b = _one_metre_apart(lat, lon, bearing)
    d = np.hypot(*relative_position(latlon_to_utm(b), latlon_to_utm(a)))
    assert d == pytest.approx(1.0, abs=0.01)


def test_relative_position():
    bs = UtmCoordinate(400000.0, 3700000.0, 12, True)
    assert list(relative_position(bs, bs)) == [0.0, 0.0]
    east = UtmCoordinate(400010.0, 3700000.0, 12, True)
    assert list(relative_position(east, bs)) == [10.0, 0.0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        e1, n1, e2, n2 = rng.uniform(1e5, 9e5, 4)
        got = relative_position(UtmCoordinate(e1, n1, 12), UtmCoordinate(e2, n2, 12))
        assert list(got) == [e1 - e2, n1 - n2]


def test_relative_position_zone_mismatch():
    with pytest.raises(DomainError):
        relative_position(UtmCoordinate(5e5, 0, 12), UtmCoordinate(5e5, 0, 13))
    with pytest.raises(DomainError):
        relative_position(UtmCoordinate(5e5, 0, 12, True), UtmCoordinate(5e5, 0, 12, False))


def test_fit_minmax_examples():
    s = fit_minmax([(0, 0), (2, 4)])
    assert list(s.minimum) == [0, 0] and list(s.maximum) == [2, 4]
    s = fit_minmax([(3, -1)])
    assert list(s.minimum) == list(s.maximum) == [3, -1]
    with pytest.raises(DomainError):
        fit_minmax([])


def test_fit_minmax_matches_scan():
    pts = np.random.default_rng(3).normal(size=(1000, 2)) * 50
    s = fit_minmax(pts)
    lo = [min(p[a] for p in pts) for a in range(2)]
    hi = [max(p[a] for p in pts) for a in range(2)]
    assert list(s.minimum) == lo and list(s.maximum) == hi


def test_apply_minmax_examples():
    s = fit_minmax([(0, 0), (2, 4)])
    assert list(apply_minmax((0, 0), s)) == [0, 0]
    assert list(apply_minmax((2, 4), s)) == [1, 1]
    assert list(apply_minmax((1, 2), s)) == [0.5, 0.5]
    assert list(apply_minmax((4, -4), s)) == [2, -1]  # no clipping
    flat = fit_minmax([(1, 5), (3, 5)])
    assert list(apply_minmax((7, 9), flat)) == [3.0, 0.5]


def test_stats_reject_inverted_range():
    with pytest.raises(ConfigError):
        NormalizationStats(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


finite = st.floats(-1e4, 1e4, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=50))
def test_minmax_maps_extremes_and_preserves_order(points):
    pts = np.array(points)
    s = fit_minmax(pts)
    out = apply_minmax(pts, s)
    for axis in range(2):
        col = pts[:, axis]
        if col.max() > col.min():
            assert out[col.argmin(), axis] == 0.0
            assert out[col.argmax(), axis] == pytest.approx(1.0, abs=1e-12)
            order = np.argsort(col, kind="stable")
            assert np.all(np.diff(out[order, axis]) >= 0)
        else:
            assert np.all(out[:, axis] == 0.5)


def test_projection_is_deterministic():
    p = GeoPosition(33.4255123, -111.9400456)
    assert latlon_to_utm(p) == latlon_to_utm(p)


def test_stats_text_round_trip(tmp_path):
    s = fit_minmax(np.random.default_rng(1).normal(size=(20, 2)) * 100)
    s = s.with_refs({32: GeoPosition(33.419, -111.929), 31: GeoPosition(33.424, -111.925)})
    path = tmp_path / "norm.txt"
    s.save(path)
    back = NormalizationStats.load(path)
    assert back == s
    assert "bs.32.zone=12N" in path.read_text()
