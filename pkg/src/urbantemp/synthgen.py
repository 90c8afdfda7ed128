"""Deterministic synthetic city: a long-history station network plus a
short-history IoT cell grid sampled by passing vehicles.

Every site's truth is mean + seasonal cosine (8760 h period) + diurnal
cosine (24 h period) + an east-west gradient + front ramps + seeded noise.
Vehicle sampling drops an exact per-cell count of hours, weighted toward
night, so realized missing ratios sit on their targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geo import GridCell, geohash_encode
from .kvconfig import KvError, format_kv, parse_kv_file, parse_kv_text
from .seeding import spawn_rng
from .series import TimeSeries, iso_to_hour, write_grid_csv, write_station_csv

START_ISO = "2015-05-01T00:00:00Z"
START_HOUR = iso_to_hour(START_ISO)
# Scenario-relative hours of the warmest point of the year and of the day.
SEASONAL_PEAK_H = 1800
DIURNAL_PEAK_H = 15
# Hour of day (UTC) where vehicle coverage bottoms out.
NIGHT_TROUGH_HOD = 4
# Fronts hold their full magnitude until hour 24, then decay away by hour 72.
FRONT_HOLD_H = 24
FRONT_RECOVER_H = 72

CITY_LAT = 40.75
CITY_LON = -73.95
CITY_SPAN_KM = 10.0
KM_PER_DEG_LAT = 111.195


@dataclass(frozen=True)
class FrontEvent:
    """A rapid temperature excursion starting at 00:00 of a scenario day."""

    day: int
    magnitude: float
    ramp_hours: int

    def __post_init__(self) -> None:
        if not 1 <= self.ramp_hours < FRONT_HOLD_H:
            raise ValueError(f"ramp_hours must be in [1, {FRONT_HOLD_H}), got {self.ramp_hours}")


@dataclass(frozen=True)
class WeatherScenario:
    seed: int = 0
    days: int = 1460
    iot_days: int = 365
    n_iot_cells: int = 60
    n_station_sites: int = 6
    mean_temp: float = 12.0
    seasonal_amp: float = 10.0
    diurnal_amp: float = 6.0
    noise_std: float = 0.5
    spatial_gradient: float = 0.15  # degrees C per km eastward
    missing_low: float = 0.0  # per-cell target ratios drawn uniformly
    missing_high: float = 0.30
    night_weight: float = 0.9  # strength of the 04:00 missingness peak
    station_missing: float = 0.0005
    front_events: tuple[FrontEvent, ...] = ()

    def __post_init__(self) -> None:
        if min(self.seasonal_amp, self.diurnal_amp, self.noise_std) < 0:
            raise ValueError("amplitudes must be >= 0")
        if not 0 < self.iot_days <= self.days:
            raise ValueError("need 0 < iot_days <= days")
        if not 0.0 <= self.missing_low <= self.missing_high < 1.0:
            raise ValueError("need 0 <= missing_low <= missing_high < 1")
        if not 0.0 <= self.night_weight <= 1.0:
            raise ValueError("night_weight must be in [0, 1]")
        if self.n_iot_cells < 1 or self.n_station_sites < 1:
            raise ValueError("need at least one IoT cell and one station site")

    @property
    def station_start(self) -> int:
        return START_HOUR

    @property
    def iot_start(self) -> int:
        return START_HOUR + (self.days - self.iot_days) * 24

    @property
    def end_hour(self) -> int:
        return START_HOUR + self.days * 24

    def to_kv(self) -> dict[str, str]:
        fronts = ",".join(f"{f.day}:{f.magnitude!r}:{f.ramp_hours}" for f in self.front_events)
        return {
            "seed": str(self.seed),
            "days": str(self.days),
            "iot_days": str(self.iot_days),
            "n_iot_cells": str(self.n_iot_cells),
            "n_station_sites": str(self.n_station_sites),
            "mean_temp": repr(self.mean_temp),
            "seasonal_amp": repr(self.seasonal_amp),
            "diurnal_amp": repr(self.diurnal_amp),
            "noise_std": repr(self.noise_std),
            "spatial_gradient": repr(self.spatial_gradient),
            "missing_low": repr(self.missing_low),
            "missing_high": repr(self.missing_high),
            "night_weight": repr(self.night_weight),
            "station_missing": repr(self.station_missing),
            "front_events": fronts,
        }

    @classmethod
    def from_kv(cls, pairs: dict[str, str]) -> "WeatherScenario":
        ints = {"seed", "days", "iot_days", "n_iot_cells", "n_station_sites"}
        floats = {
            "mean_temp", "seasonal_amp", "diurnal_amp", "noise_std", "spatial_gradient",
            "missing_low", "missing_high", "night_weight", "station_missing",
        }
        kwargs: dict = {}
        for key, value in pairs.items():
            if key in ints:
                kwargs[key] = int(value)
            elif key in floats:
                kwargs[key] = float(value)
            elif key == "front_events":
                events = []
                for chunk in filter(None, (c.strip() for c in value.split(","))):
                    parts = chunk.split(":")
                    if len(parts) != 3:
                        raise KvError(f"front event {chunk!r} is not day:magnitude:ramp_hours")
                    events.append(FrontEvent(int(parts[0]), float(parts[1]), int(parts[2])))
                kwargs[key] = tuple(events)
            else:
                raise KvError(f"unknown scenario key {key!r}")
        return cls(**kwargs)


def load_scenario(path: str | Path) -> WeatherScenario:
    return WeatherScenario.from_kv(parse_kv_file(path))


def parse_scenario(text: str) -> WeatherScenario:
    return WeatherScenario.from_kv(parse_kv_text(text))


@dataclass(frozen=True)
class SiteLayout:
    station_ids: tuple[str, ...]
    iot_ids: tuple[str, ...]
    grid: dict[str, GridCell]
    east_km: dict[str, float]


def _jittered_lattice(n: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    """n jittered points over the city square, row-major, as (lat, lon)."""
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    km_per_deg_lon = KM_PER_DEG_LAT * math.cos(math.radians(CITY_LAT))
    points = []
    for r in range(rows):
        for c in range(cols):
            if len(points) == n:
                break
            north = (r + 0.5) / rows * CITY_SPAN_KM + rng.uniform(-0.2, 0.2)
            east = (c + 0.5) / cols * CITY_SPAN_KM + rng.uniform(-0.2, 0.2)
            points.append(
                (CITY_LAT + north / KM_PER_DEG_LAT, CITY_LON + east / km_per_deg_lon)
            )
    return points


def site_layout(scenario: WeatherScenario) -> SiteLayout:
    """Place stations and IoT cells; IoT ids are their geohash cells."""
    km_per_deg_lon = KM_PER_DEG_LAT * math.cos(math.radians(CITY_LAT))
    station_ids = tuple(f"st{i + 1:02d}" for i in range(scenario.n_station_sites))
    grid: dict[str, GridCell] = {}
    east_km: dict[str, float] = {}

    rng = spawn_rng(scenario.seed, "layout-stations")
    for sid, (lat, lon) in zip(station_ids, _jittered_lattice(scenario.n_station_sites, rng)):
        grid[sid] = GridCell.from_point(lat, lon)
        east_km[sid] = (lon - CITY_LON) * km_per_deg_lon

    rng = spawn_rng(scenario.seed, "layout-iot")
    iot_ids = []
    for lat, lon in _jittered_lattice(scenario.n_iot_cells, rng):
        geohash = geohash_encode(lat, lon, 7)
        if geohash in grid:  # lattice spacing makes this effectively unreachable
            raise ValueError(f"geohash collision at {geohash}")
        grid[geohash] = GridCell.from_geohash(geohash)
        east_km[geohash] = (lon - CITY_LON) * km_per_deg_lon
        iot_ids.append(geohash)
    return SiteLayout(station_ids, tuple(iot_ids), grid, east_km)


def _front_offsets(scenario: WeatherScenario, rel_hours: np.ndarray) -> np.ndarray:
    total = np.zeros_like(rel_hours, dtype=np.float64)
    for event in scenario.front_events:
        h = rel_hours - event.day * 24
        total += np.interp(
            h,
            [0.0, float(event.ramp_hours), float(FRONT_HOLD_H), float(FRONT_RECOVER_H)],
            [0.0, event.magnitude, event.magnitude, 0.0],
            left=0.0,
            right=0.0,
        )
    return total


def _site_series(
    scenario: WeatherScenario, site_id: str, east_km: float, start: int, n_hours: int
) -> TimeSeries:
    rel = np.arange(n_hours, dtype=np.float64) + (start - START_HOUR)
    values = np.full(n_hours, scenario.mean_temp)
    values += scenario.seasonal_amp * np.cos(2 * np.pi * (rel - SEASONAL_PEAK_H) / 8760.0)
    values += scenario.diurnal_amp * np.cos(2 * np.pi * (rel - DIURNAL_PEAK_H) / 24.0)
    values += scenario.spatial_gradient * east_km
    values += _front_offsets(scenario, rel)
    if scenario.noise_std > 0:
        rng = spawn_rng(scenario.seed, "noise", site_id)
        values += rng.normal(0.0, scenario.noise_std, n_hours)
    return TimeSeries(site_id, start, values)


def generate_field(scenario: WeatherScenario) -> tuple[dict[str, TimeSeries], SiteLayout]:
    """Ground-truth series for every site: stations span the full history,
    IoT cells the final iot_days."""
    layout = site_layout(scenario)
    field_out: dict[str, TimeSeries] = {}
    for sid in layout.station_ids:
        field_out[sid] = _site_series(
            scenario, sid, layout.east_km[sid], scenario.station_start, scenario.days * 24
        )
    for cid in layout.iot_ids:
        field_out[cid] = _site_series(
            scenario, cid, layout.east_km[cid], scenario.iot_start, scenario.iot_days * 24
        )
    return field_out, layout


def _drop_exact(
    series: TimeSeries, target: float, rng: np.random.Generator, night_weight: float
) -> TimeSeries:
    """Blank an exact count of hours, optionally weighted toward 04:00."""
    n = len(series)
    n_drop = int(round(target * n))
    if n_drop == 0:
        return series
    values = series.values.copy()
    if night_weight > 0:
        hod = (series.start_hour + np.arange(n)) % 24
        weights = 1.0 + night_weight * np.cos(2 * np.pi * (hod - NIGHT_TROUGH_HOD) / 24.0)
        p = weights / weights.sum()
    else:
        p = None
    drop = rng.choice(n, size=n_drop, replace=False, p=p)
    values[drop] = np.nan
    return TimeSeries(series.station_id, series.start_hour, values)


def apply_vehicle_sampling(
    field_out: dict[str, TimeSeries], scenario: WeatherScenario, iot_ids: tuple[str, ...]
) -> dict[str, TimeSeries]:
    """Per-cell missingness with a night-peaked hourly profile.

    Each cell's target ratio is drawn uniformly from the scenario's
    [missing_low, missing_high]; realized ratios land within rounding of
    the target because the drop count is exact.
    """
    sampled: dict[str, TimeSeries] = {}
    for cid in iot_ids:
        rng = spawn_rng(scenario.seed, "sampling", cid)
        target = float(rng.uniform(scenario.missing_low, scenario.missing_high))
        sampled[cid] = _drop_exact(field_out[cid], target, rng, scenario.night_weight)
    return sampled


def realize_datasets(
    scenario: WeatherScenario,
) -> tuple[dict[str, TimeSeries], dict[str, TimeSeries], SiteLayout, dict[str, TimeSeries]]:
    """Sampled station and IoT datasets plus layout and pristine IoT truth."""
    field_out, layout = generate_field(scenario)
    stations: dict[str, TimeSeries] = {}
    for sid in layout.station_ids:
        rng = spawn_rng(scenario.seed, "station-sampling", sid)
        stations[sid] = _drop_exact(field_out[sid], scenario.station_missing, rng, 0.0)
    iot_truth = {cid: field_out[cid] for cid in layout.iot_ids}
    iot = apply_vehicle_sampling(field_out, scenario, layout.iot_ids)
    return stations, iot, layout, iot_truth


def emit_datasets(scenario: WeatherScenario, out_dir: str | Path) -> dict[str, Path]:
    """Write station.csv, iot.csv, grid.csv, iot_truth.csv, scenario.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stations, iot, layout, iot_truth = realize_datasets(scenario)

    paths = {
        "station": out / "station.csv",
        "iot": out / "iot.csv",
        "grid": out / "grid.csv",
        "iot_truth": out / "iot_truth.csv",
        "scenario": out / "scenario.txt",
    }
    with open(paths["station"], "w", encoding="utf-8", newline="") as fh:
        write_station_csv(fh, stations)
    with open(paths["iot"], "w", encoding="utf-8", newline="") as fh:
        write_station_csv(fh, iot)
    with open(paths["grid"], "w", encoding="utf-8", newline="") as fh:
        write_grid_csv(fh, layout.grid)
    with open(paths["iot_truth"], "w", encoding="utf-8", newline="") as fh:
        write_station_csv(fh, iot_truth)
    paths["scenario"].write_text(format_kv(scenario.to_kv()), encoding="utf-8")
    return paths


def scenario_with(scenario: WeatherScenario, **overrides) -> WeatherScenario:
    return replace(scenario, **overrides)
