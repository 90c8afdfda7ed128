"""Geohash grid cells and great-circle distances."""

from __future__ import annotations

import math
from dataclasses import dataclass

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_INDEX = {c: i for i, c in enumerate(BASE32)}

# IUGG mean Earth radius, metres.
EARTH_RADIUS_M = 6371008.8


class GeoError(ValueError):
    """Raised for out-of-range coordinates or malformed geohashes."""


@dataclass(frozen=True)
class GridCell:
    """A geohash cell with its derived center coordinates."""

    geohash: str
    center_lat: float
    center_lon: float

    @classmethod
    def from_geohash(cls, geohash: str) -> "GridCell":
        lat, lon, _, _ = geohash_decode(geohash)
        return cls(geohash, lat, lon)

    @classmethod
    def from_point(cls, lat: float, lon: float, precision: int = 7) -> "GridCell":
        return cls.from_geohash(geohash_encode(lat, lon, precision))


def geohash_encode(lat: float, lon: float, precision: int = 7) -> str:
    """Encode a point as a base-32 geohash of the given length.

    Points exactly on a cell boundary go to the upper cell, so the poles
    and the antimeridian encode to the lexicographically maximal cells.
    """
    if not (-90.0 <= lat <= 90.0):
        raise GeoError(f"latitude {lat!r} outside [-90, 90]")
    if not (-180.0 <= lon <= 180.0):
        raise GeoError(f"longitude {lon!r} outside [-180, 180]")
    if not 1 <= precision <= 12:
        raise GeoError(f"precision {precision!r} outside [1, 12]")

    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    val = 0
    bit = 0
    even = True  # even interleave positions carry longitude
    while len(chars) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if lon >= mid:
                val = (val << 1) | 1
                lon_lo = mid
            else:
                val <<= 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                val = (val << 1) | 1
                lat_lo = mid
            else:
                val <<= 1
                lat_hi = mid
        even = not even
        bit += 1
        if bit == 5:
            chars.append(BASE32[val])
            val = 0
            bit = 0
    return "".join(chars)


def geohash_decode(geohash: str) -> tuple[float, float, float, float]:
    """Decode a geohash to (center_lat, center_lon, lat_error, lon_error).

    The errors are the half-widths of the cell bounding box.
    """
    if not geohash:
        raise GeoError("empty geohash")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in geohash:
        try:
            val = _CHAR_INDEX[c]
        except KeyError:
            raise GeoError(f"invalid geohash character {c!r} in {geohash!r}") from None
        for mask in (16, 8, 4, 2, 1):
            if even:
                mid = (lon_lo + lon_hi) / 2
                if val & mask:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2
                if val & mask:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return (
        (lat_lo + lat_hi) / 2,
        (lon_lo + lon_hi) / 2,
        (lat_hi - lat_lo) / 2,
        (lon_hi - lon_lo) / 2,
    )


def geohash_bounds(geohash: str) -> tuple[float, float, float, float]:
    """Bounding box of a geohash cell as (lat_lo, lat_hi, lon_lo, lon_hi)."""
    lat, lon, lat_err, lon_err = geohash_decode(geohash)
    return lat - lat_err, lat + lat_err, lon - lon_err, lon + lon_err


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres on a sphere of radius EARTH_RADIUS_M."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(a), math.sqrt(1 - a))
