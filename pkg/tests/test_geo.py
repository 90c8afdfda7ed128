import math

import numpy as np
import pytest

from urbantemp.geo import (
    EARTH_RADIUS_M,
    GeoError,
    GridCell,
    geohash_bounds,
    geohash_decode,
    geohash_encode,
    haversine_m,
)


def test_encode_known_point_nyc():
    # 40.713273, -74.005971 is the canonical geohash-reference test point.
    assert geohash_encode(40.713273, -74.005971, 7) == "dr5regw"


def test_encode_origin_boundary_goes_upper():
    # (0, 0) sits on both split boundaries; the first bit must be 1.
    assert geohash_encode(0.0, 0.0, 1) == "s"
    assert geohash_encode(0.0, 0.0, 7) == "s000000"


def test_encode_extreme_corner():
    assert geohash_encode(90.0, 180.0, 7) == "zzzzzzz"
    assert geohash_encode(-90.0, -180.0, 7) == "0000000"


def test_decode_single_char():
    lat, lon, lat_err, lon_err = geohash_decode("s")
    assert (lat, lon, lat_err, lon_err) == (22.5, 22.5, 22.5, 22.5)


def test_decode_known_point():
    lat, lon, lat_err, lon_err = geohash_decode("dr5regw")
    assert abs(lat - 40.713273) <= lat_err
    assert abs(lon - (-74.005971)) <= lon_err
    assert lat_err == pytest.approx(0.0006866455078125, abs=1e-12)
    assert lon_err == pytest.approx(0.000686645507812, abs=1e-12)


def test_roundtrip_random_points():
    rng = np.random.default_rng(1234)
    lats = rng.uniform(-90, 90, size=1000)
    lons = rng.uniform(-180, 180, size=1000)
    for lat, lon in zip(lats, lons):
        gh = geohash_encode(lat, lon, 7)
        clat, clon, lat_err, lon_err = geohash_decode(gh)
        assert abs(clat - lat) <= lat_err + 1e-12
        assert abs(clon - lon) <= lon_err + 1e-12
        # Re-encoding the center must reproduce the cell.
        assert geohash_encode(clat, clon, 7) == gh


def test_bounds_contain_center():
    lat_lo, lat_hi, lon_lo, lon_hi = geohash_bounds("dr5regw")
    lat, lon, _, _ = geohash_decode("dr5regw")
    assert lat_lo < lat < lat_hi
    assert lon_lo < lon < lon_hi


def test_encode_rejects_bad_inputs():
    with pytest.raises(GeoError):
        geohash_encode(91.0, 0.0)
    with pytest.raises(GeoError):
        geohash_encode(0.0, 181.0)
    with pytest.raises(GeoError):
        geohash_encode(0.0, 0.0, precision=0)


def test_decode_rejects_bad_inputs():
    with pytest.raises(GeoError):
        geohash_decode("")
    with pytest.raises(GeoError):
        geohash_decode("dr5a")  # 'a' is not in the alphabet
    with pytest.raises(GeoError):
        geohash_decode("DR5")  # uppercase is rejected


def test_gridcell_from_point():
    cell = GridCell.from_point(40.713273, -74.005971)
    assert cell.geohash == "dr5regw"
    assert cell.center_lat == pytest.approx(40.713273, abs=1e-3)
    assert cell == GridCell.from_geohash("dr5regw")


def test_haversine_one_degree_longitude_at_equator():
    d = haversine_m(0.0, 0.0, 0.0, 1.0)
    assert d == pytest.approx(111195.0802, abs=0.01)


def test_haversine_properties():
    assert haversine_m(40.7, -74.0, 40.7, -74.0) == 0.0
    d_ab = haversine_m(40.7, -74.0, 41.0, -73.5)
    d_ba = haversine_m(41.0, -73.5, 40.7, -74.0)
    assert d_ab == pytest.approx(d_ba, rel=1e-12)
    # Antipodal distance is half the circumference.
    assert haversine_m(0.0, 0.0, 0.0, 180.0) == pytest.approx(
        math.pi * EARTH_RADIUS_M, rel=1e-12
    )
