"""Forecast scoring: per-window RMSE and bias over the 24-hour vector,
per-horizon decomposition, model comparison tables, and extreme-day reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .geo import GridCell
from .series import DataError, TimeSeries
from .windows import IN_LEN, SPAN, TestWindow


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error over the forecast vector as a single entity."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def bias(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean signed error over the forecast vector."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(pred - truth))


@dataclass(frozen=True)
class ForecastReport:
    station_id: str
    t0: int
    target_day: int
    predictions: np.ndarray
    truth: np.ndarray
    rmse: float
    bias: float
    model_kind: str
    recipe: str = ""
    threshold: float | None = None


def make_report(
    station_id: str,
    t0: int,
    predictions: np.ndarray,
    truth: np.ndarray,
    model_kind: str,
    recipe: str = "",
    threshold: float | None = None,
) -> ForecastReport:
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if not np.isfinite(predictions).all() or not np.isfinite(truth).all():
        raise DataError(f"station {station_id}: non-finite prediction or truth at t0={t0}")
    return ForecastReport(
        station_id=station_id,
        t0=t0,
        target_day=(t0 + IN_LEN) // 24,
        predictions=predictions,
        truth=truth,
        rmse=rmse(predictions, truth),
        bias=bias(predictions, truth),
        model_kind=model_kind,
        recipe=recipe,
        threshold=threshold,
    )


Predictor = Callable[[np.ndarray, str], np.ndarray]


def evaluate_model(
    predictor: Predictor,
    test_windows: Sequence[TestWindow],
    dataset: Mapping[str, TimeSeries],
    model_kind: str,
    recipe: str = "",
    threshold: float | None = None,
) -> list[ForecastReport]:
    """Score one predictor on every (station, window) pair.

    The predictor maps a raw 48-hour window and station id to a 24-hour
    forecast. The same window list must be reused across model kinds so
    comparisons stay paired.
    """
    reports = []
    for w in test_windows:
        if w.station_id not in dataset:
            raise DataError(f"test window references unknown station {w.station_id!r}")
        full = dataset[w.station_id].window(w.t0, SPAN)
        if np.isnan(full).any():
            raise DataError(f"station {w.station_id}: test window at {w.t0} has gaps")
        pred = predictor(full[:IN_LEN], w.station_id)
        reports.append(
            make_report(w.station_id, w.t0, pred, full[IN_LEN:], model_kind, recipe, threshold)
        )
    return reports


@dataclass(frozen=True)
class HorizonProfile:
    """Per-horizon-hour errors; index 0 is the first hour after the origin."""

    rmse: np.ndarray
    bias: np.ndarray


def horizon_profile(reports: Sequence[ForecastReport]) -> HorizonProfile:
    """Pool squared errors across reports before the root, per horizon hour."""
    if not reports:
        raise DataError("no reports to profile")
    errors = np.stack([r.predictions - r.truth for r in reports])
    return HorizonProfile(
        rmse=np.sqrt(np.mean(errors**2, axis=0)),
        bias=np.mean(errors, axis=0),
    )


def pooled_rmse(reports: Sequence[ForecastReport]) -> float:
    """RMSE pooled over every (report, horizon hour) squared error."""
    errors = np.stack([r.predictions - r.truth for r in reports])
    return float(np.sqrt(np.mean(errors**2)))


def per_station_mean(reports: Sequence[ForecastReport], attr: str = "rmse") -> dict[str, float]:
    by_station: dict[str, list[float]] = {}
    for r in reports:
        by_station.setdefault(r.station_id, []).append(getattr(r, attr))
    return {sid: float(np.mean(vals)) for sid, vals in sorted(by_station.items())}


def comparison_rows(reports_by_model: Mapping[str, Sequence[ForecastReport]]) -> list[dict]:
    """Min/mean/max of per-station mean RMSE and bias, one row per model."""
    rows = []
    for model_kind, reports in reports_by_model.items():
        station_rmse = list(per_station_mean(reports, "rmse").values())
        station_bias = list(per_station_mean(reports, "bias").values())
        rows.append(
            {
                "model": model_kind,
                "rmse_min": min(station_rmse),
                "rmse_mean": float(np.mean(station_rmse)),
                "rmse_max": max(station_rmse),
                "bias_min": min(station_bias),
                "bias_mean": float(np.mean(station_bias)),
                "bias_max": max(station_bias),
            }
        )
    return rows


def spatial_error_table(
    reports: Sequence[ForecastReport], grid: Mapping[str, GridCell]
) -> list[dict]:
    """Mean RMSE per station with its cell coordinates, plot-ready."""
    rows = []
    for sid, mean_rmse in per_station_mean(reports, "rmse").items():
        cell = grid.get(sid)
        if cell is None:
            raise DataError(f"station {sid!r} has no grid metadata")
        rows.append(
            {
                "station_id": sid,
                "geohash": cell.geohash,
                "lat": cell.center_lat,
                "lon": cell.center_lon,
                "mean_rmse": mean_rmse,
            }
        )
    return rows


@dataclass(frozen=True)
class ExtremeDayReport:
    day_rmse: dict[int, float]  # target epoch day -> mean rmse
    bins: list[tuple[float, float, int]]  # (lo, hi, count) with fixed width
    worst_days: list[int]  # days ranked by mean rmse, worst first
    flagged_days: list[int]  # days whose mean rmse exceeds the flag level
    bin_width: float = 0.5
    flag_threshold: float = 4.0


def extreme_day_report(
    reports: Sequence[ForecastReport],
    bin_width: float = 0.5,
    flag_threshold: float = 4.0,
) -> ExtremeDayReport:
    """Distribution of per-test-day mean RMSE, with outlier days flagged."""
    if not reports:
        raise DataError("no reports to bin")
    by_day: dict[int, list[float]] = {}
    for r in reports:
        by_day.setdefault(r.target_day, []).append(r.rmse)
    day_rmse = {day: float(np.mean(vals)) for day, vals in sorted(by_day.items())}

    counts: dict[int, int] = {}
    for value in day_rmse.values():
        counts[int(value // bin_width)] = counts.get(int(value // bin_width), 0) + 1
    bins = [(i * bin_width, (i + 1) * bin_width, counts[i]) for i in sorted(counts)]

    ranked = sorted(day_rmse, key=lambda d: (-day_rmse[d], d))
    return ExtremeDayReport(
        day_rmse=day_rmse,
        bins=bins,
        worst_days=ranked,
        flagged_days=[d for d in ranked if day_rmse[d] > flag_threshold],
        bin_width=bin_width,
        flag_threshold=flag_threshold,
    )
