"""Hourly temperature series: CSV ingest, missingness, and imputation.

Missing observations are NaN entries in a contiguous hourly value array,
never omitted slots. Timestamps are UTC hours since the Unix epoch.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import date
from typing import IO, Iterable

import numpy as np

from .geo import GridCell, haversine_m

# Observations outside this range are treated as missing at ingest.
PLAUSIBLE_RANGE = (-60.0, 60.0)

_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()
_TIMESTAMP_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})Z$")


class DataError(ValueError):
    """Raised for malformed input data or impossible pipeline requests."""


def iso_to_hour(text: str) -> int:
    """Parse an ISO-8601 UTC timestamp on a whole hour to epoch hours."""
    m = _TIMESTAMP_RE.match(text)
    if m is None:
        raise DataError(f"bad timestamp {text!r}, expected YYYY-MM-DDTHH:00:00Z")
    year, month, day, hour, minute, second = (int(g) for g in m.groups())
    if minute != 0 or second != 0:
        raise DataError(f"timestamp {text!r} is not on a whole hour")
    if hour > 23:
        raise DataError(f"timestamp {text!r} has hour {hour}")
    try:
        ordinal = date(year, month, day).toordinal()
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}: {exc}") from None
    return (ordinal - _EPOCH_ORDINAL) * 24 + hour


def hour_to_iso(hour: int) -> str:
    """Format epoch hours as an ISO-8601 UTC timestamp."""
    days, hod = divmod(int(hour), 24)
    return f"{date.fromordinal(days + _EPOCH_ORDINAL).isoformat()}T{hod:02d}:00:00Z"


@dataclass(frozen=True)
class TimeSeries:
    """One station's contiguous hourly series; NaN marks missing hours."""

    station_id: str
    start_hour: int
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_hour(self) -> int:
        """One past the last hour, so the span is [start_hour, end_hour)."""
        return self.start_hour + len(self.values)

    def covers(self, t0: int, n: int) -> bool:
        return self.start_hour <= t0 and t0 + n <= self.end_hour

    def window(self, t0: int, n: int) -> np.ndarray:
        """Values for hours [t0, t0 + n); raises when outside the span."""
        if not self.covers(t0, n):
            raise DataError(
                f"station {self.station_id}: hours [{t0}, {t0 + n}) outside "
                f"span [{self.start_hour}, {self.end_hour})"
            )
        i = t0 - self.start_hour
        return self.values[i : i + n].copy()


def parse_station_csv(
    stream: IO[str], plausible: tuple[float, float] = PLAUSIBLE_RANGE
) -> dict[str, TimeSeries]:
    """Read `station_id,timestamp,temp_c` rows into per-station series.

    Hours absent from the file become NaN inside each station's observed
    span; values outside the plausibility range also become NaN. Duplicate
    timestamps for a station and malformed rows are hard errors that name
    the offending line.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return {}
    if [c.strip() for c in header] != ["station_id", "timestamp", "temp_c"]:
        raise DataError(f"line 1: expected header station_id,timestamp,temp_c, got {header}")

    lo, hi = plausible
    observed: dict[str, dict[int, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        station_id, timestamp, temp = row[0].strip(), row[1].strip(), row[2].strip()
        if not station_id:
            raise DataError(f"line {lineno}: empty station_id")
        try:
            hour = iso_to_hour(timestamp)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if temp == "":
            value = np.nan
        else:
            try:
                value = float(temp)
            except ValueError:
                raise DataError(f"line {lineno}: bad temp_c {temp!r}") from None
            if not np.isfinite(value) or not lo <= value <= hi:
                value = np.nan
        hours = observed.setdefault(station_id, {})
        if hour in hours:
            raise DataError(
                f"line {lineno}: duplicate timestamp {timestamp} for station {station_id}"
            )
        hours[hour] = value

    dataset: dict[str, TimeSeries] = {}
    for station_id in sorted(observed):
        hours = observed[station_id]
        start = min(hours)
        values = np.full(max(hours) - start + 1, np.nan)
        for hour, value in hours.items():
            values[hour - start] = value
        dataset[station_id] = TimeSeries(station_id, start, values)
    return dataset


def write_station_csv(stream: IO[str], dataset: dict[str, TimeSeries]) -> None:
    """Inverse of parse_station_csv; missing hours are omitted rows."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["station_id", "timestamp", "temp_c"])
    for station_id in sorted(dataset):
        series = dataset[station_id]
        for i, value in enumerate(series.values):
            if np.isnan(value):
                continue
            writer.writerow([station_id, hour_to_iso(series.start_hour + i), repr(float(value))])


def parse_grid_csv(stream: IO[str]) -> dict[str, GridCell]:
    """Read `station_id,geohash` metadata rows into GridCell lookups."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return {}
    if [c.strip() for c in header] != ["station_id", "geohash"]:
        raise DataError(f"line 1: expected header station_id,geohash, got {header}")
    grid: dict[str, GridCell] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(row)}")
        station_id, geohash = row[0].strip(), row[1].strip()
        if station_id in grid:
            raise DataError(f"line {lineno}: duplicate station_id {station_id!r}")
        try:
            grid[station_id] = GridCell.from_geohash(geohash)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return grid


def write_grid_csv(stream: IO[str], grid: dict[str, GridCell]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["station_id", "geohash"])
    for station_id in sorted(grid):
        writer.writerow([station_id, grid[station_id].geohash])


def missing_ratio(series: TimeSeries) -> float:
    """Fraction of NaN slots in the series."""
    if len(series) == 0:
        raise DataError(f"station {series.station_id}: empty series")
    return float(np.isnan(series.values).mean())


def filter_by_missing_ratio(
    dataset: dict[str, TimeSeries], threshold: float
) -> dict[str, TimeSeries]:
    """Keep stations whose missing ratio is <= threshold; input untouched."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold {threshold!r} outside [0, 1]")
    return {k: s for k, s in dataset.items() if missing_ratio(s) <= threshold}


def interpolate_linear(series: TimeSeries) -> TimeSeries:
    """Fill NaN runs linearly in time; edges take the nearest observation."""
    values = series.values
    mask = np.isfinite(values)
    if not mask.any():
        raise DataError(f"station {series.station_id}: no observed values to interpolate")
    if mask.all():
        return TimeSeries(series.station_id, series.start_hour, values.copy())
    idx = np.arange(len(values))
    filled = np.interp(idx, idx[mask], values[mask])
    return TimeSeries(series.station_id, series.start_hour, filled)


def nearest_k_average(
    dataset: dict[str, TimeSeries],
    grid: dict[str, GridCell],
    station_id: str,
    k: int = 20,
) -> TimeSeries:
    """Replace a station's series by the per-hour mean of its k nearest peers.

    Candidates are stations with grid metadata and a gap-free series covering
    the target's span (the target itself included). Distance is haversine
    between cell centers; ties break by geohash, then station id.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if station_id not in dataset:
        raise DataError(f"unknown station {station_id!r}")
    if station_id not in grid:
        raise DataError(f"station {station_id!r} has no grid metadata")
    target = dataset[station_id]
    cell = grid[station_id]

    candidates = []
    for other_id, series in dataset.items():
        other_cell = grid.get(other_id)
        if other_cell is None or not series.covers(target.start_hour, len(target)):
            continue
        values = series.window(target.start_hour, len(target))
        if np.isnan(values).any():
            continue
        dist = haversine_m(cell.center_lat, cell.center_lon, other_cell.center_lat, other_cell.center_lon)
        candidates.append((dist, other_cell.geohash, other_id, values))
    if len(candidates) < k:
        raise DataError(
            f"station {station_id}: need {k} gap-free neighbors, found {len(candidates)}"
        )
    candidates.sort(key=lambda c: c[:3])
    stacked = np.stack([values for _, _, _, values in candidates[:k]])
    return TimeSeries(station_id, target.start_hour, stacked.mean(axis=0))


def two_step_impute(
    dataset: dict[str, TimeSeries],
    grid: dict[str, GridCell],
    threshold: float,
    k: int = 20,
    smooth: bool = True,
) -> dict[str, TimeSeries]:
    """Filter by missing ratio, interpolate in time, then spatially average.

    With smooth off the result is the filtered, interpolated series only.
    """
    kept = filter_by_missing_ratio(dataset, threshold)
    interpolated = {sid: interpolate_linear(s) for sid, s in kept.items()}
    if not smooth:
        return interpolated
    return {sid: nearest_k_average(interpolated, grid, sid, k) for sid in interpolated}


def dataset_span(dataset: Iterable[TimeSeries]) -> tuple[int, int]:
    """Hour span [min start, max end) across a collection of series."""
    starts_ends = [(s.start_hour, s.end_hour) for s in dataset]
    if not starts_ends:
        raise DataError("empty dataset")
    return min(s for s, _ in starts_ends), max(e for _, e in starts_ends)
