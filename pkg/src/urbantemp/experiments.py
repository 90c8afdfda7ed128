"""Experiment drivers: model comparison, missing-ratio sweep, extreme days.

Each driver loads a raw synthetic data directory, fixes a paired test set,
trains whatever it needs, and writes plot-ready CSVs with a rendered figure
next to each one.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import figures
from .arima import arima_auto, arima_forecast
from .baselines import build_fnn, historical_average_forecast, persistence_forecast
from .checkpoint import save_checkpoint
from .geo import GridCell
from .lstm import EpochStats, ModelConfig, build_lstm, predict, train
from .metrics import (
    ForecastReport,
    comparison_rows,
    evaluate_model,
    extreme_day_report,
    horizon_profile,
    per_station_mean,
    spatial_error_table,
)
from .seeding import derive_seed
from .series import (
    DataError,
    TimeSeries,
    filter_by_missing_ratio,
    hour_to_iso,
    interpolate_linear,
    nearest_k_average,
    parse_grid_csv,
    parse_station_csv,
)
from .synthgen import WeatherScenario, parse_scenario
from .windows import (
    IN_LEN,
    SPAN,
    Sample,
    TestWindow,
    exclude_overlapping,
    make_windows,
    select_test_windows,
    split_train_val,
)

log = logging.getLogger("urbantemp.experiments")

SWEEP_THRESHOLDS = (0.055, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50)
RECIPES = ("iot", "iot+history")
MODEL_ORDER = ("persistence", "havg", "arima", "fnn", "lstm_iot", "lstm_iot_history")
EXPERIMENT_NAMES = ("comparison", "sensitivity", "extreme")


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs shared by all experiment drivers.

    The network defaults echo the forecasting setup (2 layers, 48 hidden,
    lr 0.005) but cap epochs and pin the batch size for desk-scale runs;
    batch_size 0 restores the derived ceil(n/8) rule.
    """

    seed: int = 0
    jobs: int = 1
    threshold: float = 0.055  # test-set missing-ratio cutoff
    n_test_days: int = 27
    train_stride: int = 24
    k_neighbors: int = 20
    per_station: bool = False
    num_layers: int = 2
    hidden: int = 48
    learning_rate: float = 0.005
    batch_size: int = 512
    max_epochs: int = 15
    early_stop_factor: float = 10.0
    thresholds: tuple[float, ...] = SWEEP_THRESHOLDS
    recipes: tuple[str, ...] = RECIPES

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold!r} outside [0, 1]")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        for r in self.recipes:
            if r not in RECIPES:
                raise ValueError(f"unknown recipe {r!r}; valid: {', '.join(RECIPES)}")

    def model_config(self, label: str) -> ModelConfig:
        return ModelConfig(
            num_layers=self.num_layers,
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_factor=self.early_stop_factor,
            seed=derive_seed(self.seed, label),
        )

    @classmethod
    def from_kv(cls, pairs: Mapping[str, str]) -> "ExperimentConfig":
        """Build from flat key-value text (same format as scenario files)."""
        kwargs: dict = {}
        valid = {f.name for f in fields(cls)}
        for key, raw in pairs.items():
            if key not in valid:
                raise DataError(f"unknown experiment config key {key!r}")
            if key in ("thresholds",):
                kwargs[key] = tuple(float(v) for v in raw.split(",") if v.strip())
            elif key in ("recipes",):
                kwargs[key] = tuple(v.strip() for v in raw.split(",") if v.strip())
            elif key == "per_station":
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes")
            elif key in ("threshold", "learning_rate", "early_stop_factor"):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


def experiment_config_with(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **overrides)


@dataclass(frozen=True)
class RawData:
    """Contents of a raw data directory: station history, IoT grid, metadata."""

    stations: dict[str, TimeSeries]
    iot: dict[str, TimeSeries]
    grid: dict[str, GridCell]
    scenario: WeatherScenario | None  # present when the directory was synthesized


def load_raw(data_dir: str | Path) -> RawData:
    base = Path(data_dir)
    for name in ("station.csv", "iot.csv", "grid.csv"):
        if not (base / name).is_file():
            raise DataError(f"raw data directory {base} is missing {name}")
    with open(base / "station.csv", encoding="utf-8") as fh:
        stations = parse_station_csv(fh)
    with open(base / "iot.csv", encoding="utf-8") as fh:
        iot = parse_station_csv(fh)
    with open(base / "grid.csv", encoding="utf-8") as fh:
        grid = parse_grid_csv(fh)
    scenario = None
    scenario_path = base / "scenario.txt"
    if scenario_path.is_file():
        scenario = parse_scenario(scenario_path.read_text(encoding="utf-8"))
    return RawData(stations=stations, iot=iot, grid=grid, scenario=scenario)


def impute_iot(
    raw: RawData, threshold: float, k: int = 20, smooth: bool = True
) -> dict[str, TimeSeries]:
    """Filter, align, interpolate, then nearest-k average the IoT grid.

    Survivors are cropped to their common span first, so every cell is a
    valid neighbor for every other. Desk-scale runs can leave fewer than
    k + 1 cells; k is then clamped below the survivor count so the average
    never degenerates to one shared series for all cells. smooth=False
    stops after interpolation.
    """
    kept = filter_by_missing_ratio(raw.iot, threshold)
    if not kept:
        raise DataError(f"no IoT cells at or below missing ratio {threshold}")
    log.info("threshold %.3f: %d of %d IoT cells kept", threshold, len(kept), len(raw.iot))
    lo = max(s.start_hour for s in kept.values())
    hi = min(s.end_hour for s in kept.values())
    if hi - lo < SPAN:
        raise DataError(f"surviving cells share only {hi - lo} common hours, need {SPAN}")
    cropped = {sid: TimeSeries(sid, lo, s.window(lo, hi - lo)) for sid, s in kept.items()}
    interpolated = {sid: interpolate_linear(s) for sid, s in cropped.items()}
    if not smooth:
        return interpolated
    k_eff = min(k, max(1, len(interpolated) - 1))
    if k_eff < k:
        log.info("threshold %.3f: clamping k from %d to %d", threshold, k, k_eff)
    return {sid: nearest_k_average(interpolated, raw.grid, sid, k_eff) for sid in interpolated}


def station_history(raw: RawData) -> dict[str, TimeSeries]:
    """Weather-station series, gap-filled in time only (too few for nearest-k)."""
    return {sid: interpolate_linear(s) for sid, s in raw.stations.items()}


def front_days(raw: RawData) -> tuple[int, ...]:
    """Epoch day of each synthetic front event, if scenario metadata exists."""
    if raw.scenario is None:
        return ()
    base_day = raw.scenario.station_start // 24
    return tuple(base_day + e.day for e in raw.scenario.front_events)


def fixed_test_windows(
    imputed: Mapping[str, TimeSeries],
    config: ExperimentConfig,
    must_include_days: Sequence[int] = (),
) -> list[TestWindow]:
    """The paired (station, day) test set every model is scored on."""
    return select_test_windows(
        dict(imputed),
        n_days=config.n_test_days,
        seed=derive_seed(config.seed, "test-days"),
        must_include_days=must_include_days,
    )


def training_samples(
    dataset: Mapping[str, TimeSeries],
    test_windows: Sequence[TestWindow],
    stride: int,
) -> list[Sample]:
    """Strided windows over every series, minus any that touch a test span."""
    samples: list[Sample] = []
    for sid in sorted(dataset):
        samples.extend(make_windows(dataset[sid], stride=stride))
    return exclude_overlapping(samples, test_windows)


def fit_forecaster(samples: Sequence[Sample], config: ExperimentConfig, kind: str, label: str):
    """Train one pooled model; the label salts every random stream."""
    if len(samples) < 2:
        raise DataError(f"{label}: need at least 2 training samples, got {len(samples)}")
    mc = config.model_config(label)
    train_split, val_split = split_train_val(samples, seed=mc.seed)
    model = build_lstm(mc) if kind == "lstm" else build_fnn(mc)
    model, history = train(model, train_split, val_split, mc)
    log.info("%s: %d samples, %d epochs, val mse %.4f", label, len(samples), len(history), history[-1].val_loss)
    return model, history


Predictor = Callable[[np.ndarray, str], np.ndarray]


def _auto_forecast(values: np.ndarray) -> np.ndarray:
    return arima_forecast(arima_auto(values), values)


def arima_predictor(
    dataset: Mapping[str, TimeSeries],
    test_windows: Sequence[TestWindow],
    jobs: int = 1,
) -> Predictor:
    """Per-window auto-ARIMA, precomputed (optionally in parallel) and cached."""
    inputs = [dataset[w.station_id].window(w.t0, IN_LEN) for w in test_windows]
    if jobs > 1 and len(inputs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_auto_forecast, inputs, chunksize=8))
    else:
        outputs = [_auto_forecast(x) for x in inputs]
    table = {
        (w.station_id, np.asarray(x).tobytes()): out
        for w, x, out in zip(test_windows, inputs, outputs)
    }

    def predictor(window: np.ndarray, station_id: str) -> np.ndarray:
        window = np.asarray(window, dtype=np.float64)
        cached = table.get((station_id, window.tobytes()))
        return cached if cached is not None else _auto_forecast(window)

    return predictor


def model_predictor(models: Mapping[str, object]) -> Predictor:
    """Dispatch on station id; the empty key means one pooled model."""
    if "" in models:
        pooled = models[""]
        return lambda window, station_id: predict(pooled, window)
    return lambda window, station_id: predict(models[station_id], window)


def _train_arm(
    config: ExperimentConfig,
    kind: str,
    label: str,
    iot_samples: Sequence[Sample],
    extra_samples: Sequence[Sample],
    test_stations: Sequence[str],
) -> tuple[dict[str, object], dict[str, list[EpochStats]]]:
    """One experiment arm: pooled by default, per test station on request."""
    if not config.per_station:
        model, history = fit_forecaster(list(iot_samples) + list(extra_samples), config, kind, label)
        return {"": model}, {"": history}
    models: dict[str, object] = {}
    histories: dict[str, list[EpochStats]] = {}
    for sid in sorted(test_stations):
        own = [s for s in iot_samples if s.station_id == sid]
        model, history = fit_forecaster(own + list(extra_samples), config, kind, f"{label}/{sid}")
        models[sid] = model
        histories[sid] = history
    return models, histories


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Sequence[Mapping]) -> Path:
    """Delimited output with repr-formatted floats, stable across platforms."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()}
            )
    return path


def _write_history(path: Path, histories: Mapping[str, list[EpochStats]]) -> Path:
    rows = []
    for key in sorted(histories):
        for h in histories[key]:
            rows.append(
                {"station": key, "epoch": h.epoch, "train_mse": h.train_loss, "val_mse": h.val_loss}
            )
    return write_csv(path, ("station", "epoch", "train_mse", "val_mse"), rows)


def _save_checkpoints(out: Path, label: str, models: Mapping[str, object]) -> list[Path]:
    paths = []
    for key, model in models.items():
        name = f"{label}.ckpt" if key == "" else f"{label}.{key}.ckpt"
        save_checkpoint(model, out / name)
        paths.append(out / name)
    return paths


def run_comparison(raw: RawData, config: ExperimentConfig, out_dir: str | Path) -> dict[str, Path]:
    """Six-predictor comparison on one paired test set; Table-3-shaped CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imputed = impute_iot(raw, config.threshold, config.k_neighbors)
    test_windows = fixed_test_windows(imputed, config)
    test_stations = sorted({w.station_id for w in test_windows})
    log.info("comparison: %d test windows over %d cells", len(test_windows), len(test_stations))

    iot_samples = training_samples(imputed, test_windows, config.train_stride)
    hist_samples = training_samples(station_history(raw), test_windows, config.train_stride)

    written: dict[str, Path] = {}
    predictors: dict[str, tuple[Predictor, str]] = {
        "persistence": (lambda w, sid: persistence_forecast(w), ""),
        "havg": (lambda w, sid: historical_average_forecast(w), ""),
        "arima": (arima_predictor(imputed, test_windows, config.jobs), ""),
    }
    arms = {
        "fnn": ("fnn", hist_samples, "iot+history"),
        "lstm_iot": ("lstm", [], "iot"),
        "lstm_iot_history": ("lstm", hist_samples, "iot+history"),
    }
    for label, (kind, extra, recipe) in arms.items():
        models, histories = _train_arm(config, kind, label, iot_samples, extra, test_stations)
        for path in _save_checkpoints(out, label, models):
            written[path.name] = path
        written[f"history_{label}.csv"] = _write_history(out / f"history_{label}.csv", histories)
        predictors[label] = (model_predictor(models), recipe)

    reports_by_model: dict[str, list[ForecastReport]] = {}
    for name in MODEL_ORDER:
        predictor, recipe = predictors[name]
        reports_by_model[name] = evaluate_model(
            predictor, test_windows, imputed, name, recipe, config.threshold
        )

    rows = comparison_rows(reports_by_model)
    written["comparison.csv"] = write_csv(
        out / "comparison.csv",
        ("model", "rmse_min", "rmse_mean", "rmse_max", "bias_min", "bias_mean", "bias_max"),
        rows,
    )
    written["comparison.png"] = figures.comparison_figure(rows, out / "comparison.png")

    profiles = {name: horizon_profile(reports) for name, reports in reports_by_model.items()}
    horizon_rows = [
        {"model": name, "hour": h + 1, "rmse": float(p.rmse[h]), "bias": float(p.bias[h])}
        for name, p in profiles.items()
        for h in range(24)
    ]
    written["horizon.csv"] = write_csv(
        out / "horizon.csv", ("model", "hour", "rmse", "bias"), horizon_rows
    )
    written["horizon.png"] = figures.horizon_figure(profiles, out / "horizon.png")

    spatial_rows = spatial_error_table(reports_by_model["lstm_iot_history"], raw.grid)
    written["spatial.csv"] = write_csv(
        out / "spatial.csv", ("station_id", "geohash", "lat", "lon", "mean_rmse"), spatial_rows
    )
    written["spatial.png"] = figures.spatial_figure(spatial_rows, out / "spatial.png")
    return written


def sensitivity_rows(raw: RawData, config: ExperimentConfig) -> list[dict]:
    """Mean test error per (threshold, recipe), station-first aggregation.

    The test set is fixed once from the base-threshold imputation; only the
    training pool changes with the threshold, so rows stay paired. Thresholds
    that admit identical cell sets produce identical rows by construction.
    """
    imputed_base = impute_iot(raw, config.threshold, config.k_neighbors)
    test_windows = fixed_test_windows(imputed_base, config)
    hist_samples = training_samples(station_history(raw), test_windows, config.train_stride)

    rows = []
    for threshold in config.thresholds:
        imputed_t = impute_iot(raw, threshold, config.k_neighbors)
        iot_samples = training_samples(imputed_t, test_windows, config.train_stride)
        for recipe in config.recipes:
            extra = hist_samples if recipe == "iot+history" else []
            model, _ = fit_forecaster(
                list(iot_samples) + list(extra), config, "lstm", f"sensitivity/{recipe}"
            )
            reports = evaluate_model(
                model_predictor({"": model}), test_windows, imputed_base, "lstm", recipe, threshold
            )
            rows.append(
                {
                    "threshold": threshold,
                    "recipe": recipe,
                    "rmse_mean": float(np.mean(list(per_station_mean(reports, "rmse").values()))),
                    "bias_mean": float(np.mean(list(per_station_mean(reports, "bias").values()))),
                }
            )
            log.info(
                "sensitivity threshold=%.3f recipe=%s rmse=%.3f", threshold, recipe, rows[-1]["rmse_mean"]
            )
    return rows


def run_sensitivity(raw: RawData, config: ExperimentConfig, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sensitivity_rows(raw, config)
    return {
        "sensitivity.csv": write_csv(
            out / "sensitivity.csv", ("threshold", "recipe", "rmse_mean", "bias_mean"), rows
        ),
        "sensitivity.png": figures.sensitivity_figure(rows, out / "sensitivity.png"),
    }


def run_extreme(raw: RawData, config: ExperimentConfig, out_dir: str | Path) -> dict[str, Path]:
    """Per-day error distribution for the combined-recipe network.

    Synthetic front days from the scenario file are forced into the test set
    so rapid weather changes are represented, mirroring the failure mode the
    analysis is after.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imputed = impute_iot(raw, config.threshold, config.k_neighbors)
    lo = max(s.start_hour for s in imputed.values())
    hi = min(s.end_hour for s in imputed.values())
    first, last = -((lo + IN_LEN) // -24), hi // 24 - 1
    forced = tuple(d for d in front_days(raw) if first <= d <= last)
    if len(forced) < len(front_days(raw)):
        log.info("ignoring %d front days outside the testable span", len(front_days(raw)) - len(forced))
    test_windows = fixed_test_windows(imputed, config, must_include_days=forced)
    test_stations = sorted({w.station_id for w in test_windows})

    iot_samples = training_samples(imputed, test_windows, config.train_stride)
    hist_samples = training_samples(station_history(raw), test_windows, config.train_stride)
    models, histories = _train_arm(
        config, "lstm", "lstm_iot_history", iot_samples, hist_samples, test_stations
    )
    reports = evaluate_model(
        model_predictor(models), test_windows, imputed, "lstm_iot_history", "iot+history", config.threshold
    )
    report = extreme_day_report(reports)

    day_rows = [
        {
            "day": day,
            "date": hour_to_iso(day * 24)[:10],
            "mean_rmse": value,
            "flagged": int(day in report.flagged_days),
        }
        for day, value in report.day_rmse.items()
    ]
    written = {
        "extreme_days.csv": write_csv(
            out / "extreme_days.csv", ("day", "date", "mean_rmse", "flagged"), day_rows
        ),
        "extreme_days.png": figures.extreme_figure(report, out / "extreme_days.png"),
        "history_lstm_iot_history.csv": _write_history(
            out / "history_lstm_iot_history.csv", histories
        ),
    }
    for path in _save_checkpoints(out, "lstm_iot_history", models):
        written[path.name] = path
    return written


def run_experiment(
    name: str, raw: RawData, config: ExperimentConfig, out_dir: str | Path
) -> dict[str, Path]:
    if name == "comparison":
        return run_comparison(raw, config, out_dir)
    if name == "sensitivity":
        return run_sensitivity(raw, config, out_dir)
    if name == "extreme":
        return run_extreme(raw, config, out_dir)
    raise DataError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENT_NAMES)}")
