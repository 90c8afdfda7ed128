"""Command-line entry point: synth, preprocess, train, predict, evaluate, experiment."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .arima import ArimaError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .experiments import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    _auto_forecast,
    arima_predictor,
    experiment_config_with,
    fixed_test_windows,
    impute_iot,
    load_raw,
    run_experiment,
    station_history,
    training_samples,
    write_csv,
)
from .baselines import build_fnn, historical_average_forecast, persistence_forecast
from .figures import horizon_figure
from .geo import GeoError
from .kvconfig import KvError, parse_kv_file
from .lstm import EpochStats, ModelConfig, TrainError, build_lstm, predict, train
from .manifest import RunManifest, hash_files, write_manifest
from .metrics import evaluate_model, horizon_profile, pooled_rmse
from .series import DataError, hour_to_iso, parse_station_csv, write_grid_csv, write_station_csv
from .synthgen import WeatherScenario, emit_datasets, parse_scenario, scenario_with
from .windows import IN_LEN, OUT_LEN, Sample, TestWindow, split_train_val, stack_samples

log = logging.getLogger("urbantemp")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_RUNTIME_ERRORS = (
    DataError,
    TrainError,
    ArimaError,
    KvError,
    CheckpointError,
    GeoError,
    OSError,
    ValueError,
)


class UsageError(Exception):
    """Bad invocation: wrong flags, malformed or missing input files."""


def _setup_logging() -> None:
    level_name = os.environ.get("URBANTEMP_LOG", "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.INFO
    root = logging.getLogger()
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def _load_kv(path_str: str | None) -> dict[str, str]:
    if path_str is None:
        return {}
    path = Path(path_str)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return parse_kv_file(path)


def _experiment_config(args) -> ExperimentConfig:
    try:
        config = ExperimentConfig.from_kv(_load_kv(args.config))
    except (DataError, KvError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "threshold", None) is not None:
        if not 0.0 <= args.threshold <= 1.0:
            raise UsageError(f"threshold {args.threshold} outside [0, 1]")
        overrides["threshold"] = args.threshold
    if getattr(args, "recipe", None) is not None:
        overrides["recipes"] = (args.recipe,)
    if getattr(args, "per_station", False):
        overrides["per_station"] = True
    try:
        return experiment_config_with(config, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _model_config(pairs: dict[str, str], seed: int) -> ModelConfig:
    kwargs: dict = {"seed": seed}
    for key, raw in pairs.items():
        if key in ("learning_rate", "early_stop_factor", "clip_norm", "forget_bias"):
            kwargs[key] = float(raw)
        elif key in ("num_layers", "hidden", "batch_size", "max_epochs", "in_len", "out_len"):
            kwargs[key] = int(raw)
        elif key == "head":
            kwargs[key] = raw.strip()
        else:
            raise UsageError(f"unknown model config key {key!r}")
    try:
        return ModelConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------- sample stores


def save_sample_store(path: Path, samples: list[Sample]) -> None:
    if samples:
        inputs, targets = stack_samples(samples)
    else:
        inputs, targets = np.zeros((0, IN_LEN)), np.zeros((0, OUT_LEN))
    np.savez(
        path,
        inputs=inputs,
        targets=targets,
        station=np.array([s.station_id for s in samples], dtype=np.str_),
        t0=np.array([s.t0 for s in samples], dtype=np.int64),
    )


def load_sample_store(path: Path) -> list[Sample]:
    if not path.is_file():
        raise UsageError(f"sample store not found: {path}")
    with np.load(path) as archive:
        return [
            Sample(str(sid), int(t0), x, y)
            for sid, t0, x, y in zip(
                archive["station"], archive["t0"], archive["inputs"], archive["targets"]
            )
        ]


def save_test_windows(path: Path, windows: list[TestWindow]) -> None:
    rows = [{"station_id": w.station_id, "t0": w.t0, "target_day": w.target_day} for w in windows]
    write_csv(path, ("station_id", "t0", "target_day"), rows)


def load_test_windows(path: Path) -> list[TestWindow]:
    if not path.is_file():
        raise UsageError(f"test window list not found: {path}")
    import csv as _csv

    with open(path, encoding="utf-8", newline="") as fh:
        return [TestWindow(row["station_id"], int(row["t0"])) for row in _csv.DictReader(fh)]


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    started = time.perf_counter()
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"scenario file not found: {path}")
        scenario = parse_scenario(path.read_text(encoding="utf-8"))
        inputs = hash_files([path])
    else:
        scenario = WeatherScenario()
        inputs = {}
    if args.seed is not None:
        scenario = scenario_with(scenario, seed=args.seed)
    paths = emit_datasets(scenario, args.out)
    log.info("synthesized %d files under %s", len(paths), args.out)
    manifest = RunManifest(
        subcommand="synth",
        config=scenario.to_kv(),
        inputs=inputs,
        outputs=hash_files(paths.values()),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, args.out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    started = time.perf_counter()
    config = _experiment_config(args)
    raw = load_raw(args.data)

    imputed = impute_iot(raw, config.threshold, config.k_neighbors, smooth=not args.no_smooth)
    history = station_history(raw)
    test_windows = fixed_test_windows(imputed, config)
    iot_samples = training_samples(imputed, test_windows, config.train_stride)
    station_samples = training_samples(history, test_windows, config.train_stride)
    log.info(
        "preprocess: %d IoT cells -> %d samples, %d stations -> %d samples, %d test windows",
        len(imputed),
        len(iot_samples),
        len(history),
        len(station_samples),
        len(test_windows),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "imputed_iot.csv", "w", encoding="utf-8", newline="") as fh:
        write_station_csv(fh, imputed)
    with open(out / "stations.csv", "w", encoding="utf-8", newline="") as fh:
        write_station_csv(fh, history)
    with open(out / "grid.csv", "w", encoding="utf-8", newline="") as fh:
        write_grid_csv(fh, raw.grid)
    save_sample_store(out / "iot_samples.npz", iot_samples)
    save_sample_store(out / "station_samples.npz", station_samples)
    save_test_windows(out / "test_windows.csv", test_windows)

    base = Path(args.data)
    manifest = RunManifest(
        subcommand="preprocess",
        config={**config.__dict__, "no_smooth": args.no_smooth},
        inputs=hash_files(base / name for name in ("station.csv", "iot.csv", "grid.csv")),
        outputs=hash_files(
            out / name
            for name in (
                "imputed_iot.csv",
                "stations.csv",
                "grid.csv",
                "iot_samples.npz",
                "station_samples.npz",
                "test_windows.csv",
            )
        ),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, out)
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.perf_counter()
    store = Path(args.data)
    samples = load_sample_store(store / "iot_samples.npz")
    if args.recipe == "iot+history":
        samples = samples + load_sample_store(store / "station_samples.npz")
    if len(samples) < 2:
        raise DataError(f"recipe {args.recipe}: need at least 2 samples, got {len(samples)}")
    seed = args.seed if args.seed is not None else 0
    config = _model_config(_load_kv(args.config), seed)

    train_split, val_split = split_train_val(samples, seed=config.seed)
    model = build_lstm(config) if args.model == "lstm" else build_fnn(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    history: list[EpochStats] = []

    def record(epoch: int, train_loss: float, val_loss: float) -> None:
        history.append(EpochStats(epoch, train_loss, val_loss))

    def flush_history() -> None:
        rows = [
            {"epoch": h.epoch, "train_mse": h.train_loss, "val_mse": h.val_loss} for h in history
        ]
        write_csv(out / "history.csv", ("epoch", "train_mse", "val_mse"), rows)

    try:
        model, _ = train(model, train_split, val_split, config, epoch_callback=record)
    except TrainError:
        flush_history()  # divergence contract: the history survives the failure
        raise
    flush_history()
    save_checkpoint(model, out / "model.ckpt")
    n = len(train_split)
    log.info(
        "trained %s (%s) on %d samples, batch %d, %d epochs",
        args.model,
        args.recipe,
        n,
        config.batch_size if config.batch_size > 0 else -(n // -8),
        len(history),
    )

    inputs = [store / "iot_samples.npz"]
    if args.recipe == "iot+history":
        inputs.append(store / "station_samples.npz")
    manifest = RunManifest(
        subcommand="train",
        config={**config.__dict__, "model": args.model, "recipe": args.recipe},
        inputs=hash_files(inputs),
        outputs=hash_files([out / "model.ckpt", out / "history.csv"]),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, out)
    return EXIT_OK


def _window_from_csv(path: Path, expect_len: int) -> tuple[str, int, np.ndarray]:
    if not path.is_file():
        raise UsageError(f"window file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        dataset = parse_station_csv(fh)
    if len(dataset) != 1:
        raise UsageError(f"window file must hold exactly one station, found {len(dataset)}")
    ((sid, series),) = dataset.items()
    if len(series) != expect_len:
        raise UsageError(f"window must cover {expect_len} hours, found {len(series)}")
    if np.isnan(series.values).any():
        raise UsageError("window has missing values; fill it before predicting")
    return sid, series.start_hour, series.values


def cmd_predict(args) -> int:
    started = time.perf_counter()
    inputs = [Path(args.window)]
    if args.model in ("lstm", "fnn"):
        if args.checkpoint is None:
            raise UsageError(f"--model {args.model} requires --checkpoint")
        model = load_checkpoint(args.checkpoint)
        if model.kind != args.model:
            raise UsageError(f"checkpoint holds a {model.kind} model, not {args.model}")
        sid, start, values = _window_from_csv(Path(args.window), model.config.in_len)
        forecast = predict(model, values)
        inputs.append(Path(args.checkpoint))
    else:
        sid, start, values = _window_from_csv(Path(args.window), IN_LEN)
        if args.model == "persistence":
            forecast = persistence_forecast(values)
        elif args.model == "havg":
            forecast = historical_average_forecast(values)
        else:
            forecast = _auto_forecast(values)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        {"station_id": sid, "timestamp": hour_to_iso(start + len(values) + h), "temp_c": float(v)}
        for h, v in enumerate(forecast)
    ]
    write_csv(out / "forecast.csv", ("station_id", "timestamp", "temp_c"), rows)
    manifest = RunManifest(
        subcommand="predict",
        config={"model": args.model, "window": str(args.window)},
        inputs=hash_files(inputs),
        outputs=hash_files([out / "forecast.csv"]),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    store = Path(args.data)
    imputed_path = store / "imputed_iot.csv"
    if not imputed_path.is_file():
        raise UsageError(f"preprocessed store is missing {imputed_path}")
    with open(imputed_path, encoding="utf-8") as fh:
        dataset = parse_station_csv(fh)
    test_windows = load_test_windows(store / "test_windows.csv")

    inputs = [imputed_path, store / "test_windows.csv"]
    if args.model in ("lstm", "fnn"):
        if args.checkpoint is None:
            raise UsageError(f"--model {args.model} requires --checkpoint")
        model = load_checkpoint(args.checkpoint)
        predictor = lambda window, sid: predict(model, window)  # noqa: E731
        inputs.append(Path(args.checkpoint))
    elif args.model == "persistence":
        predictor = lambda window, sid: persistence_forecast(window)  # noqa: E731
    elif args.model == "havg":
        predictor = lambda window, sid: historical_average_forecast(window)  # noqa: E731
    else:
        predictor = arima_predictor(dataset, test_windows, args.jobs or 1)

    reports = evaluate_model(predictor, test_windows, dataset, args.model)
    profile = horizon_profile(reports)
    log.info("%s: pooled rmse %.3f over %d windows", args.model, pooled_rmse(reports), len(reports))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_rows = [
        {
            "station_id": r.station_id,
            "t0": r.t0,
            "target_day": r.target_day,
            "rmse": r.rmse,
            "bias": r.bias,
        }
        for r in reports
    ]
    write_csv(out / "reports.csv", ("station_id", "t0", "target_day", "rmse", "bias"), report_rows)
    horizon_rows = [
        {"model": args.model, "hour": h + 1, "rmse": float(profile.rmse[h]), "bias": float(profile.bias[h])}
        for h in range(24)
    ]
    write_csv(out / "horizon.csv", ("model", "hour", "rmse", "bias"), horizon_rows)
    horizon_figure({args.model: profile}, out / "horizon.png")

    manifest = RunManifest(
        subcommand="evaluate",
        config={"model": args.model},
        inputs=hash_files(inputs),
        outputs=hash_files([out / "reports.csv", out / "horizon.csv", out / "horizon.png"]),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    started = time.perf_counter()
    config = _experiment_config(args)
    raw = load_raw(args.data)
    written = run_experiment(args.name, raw, config, args.out)

    base = Path(args.data)
    input_paths = [base / n for n in ("station.csv", "iot.csv", "grid.csv")]
    if (base / "scenario.txt").is_file():
        input_paths.append(base / "scenario.txt")
    if args.config is not None:
        input_paths.append(Path(args.config))
    manifest = RunManifest(
        subcommand=f"experiment {args.name}",
        config=dict(sorted(config.__dict__.items(), key=lambda kv: kv[0])),
        inputs=hash_files(input_paths),
        outputs=hash_files(written.values()),
        timings={"total": round(time.perf_counter() - started, 3)},
    )
    write_manifest(manifest, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urbantemp",
        description="24-hour urban air-temperature forecasting on gridded sensor data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic raw data directory")
    p.add_argument("--config", help="scenario file (flat key = value); defaults if omitted")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="impute the IoT grid and window it into samples")
    p.add_argument("--data", required=True, help="raw data directory (station/iot/grid CSVs)")
    p.add_argument("--threshold", type=float, help="missing-ratio cutoff (default 0.055)")
    p.add_argument("--no-smooth", action="store_true", help="skip the nearest-k average step")
    p.add_argument("--seed", type=int, help="test-day selection seed")
    p.add_argument("--jobs", type=int, help="unused; accepted for interface symmetry")
    p.add_argument("--config", help="experiment config file overriding defaults")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a forecaster on preprocessed sample stores")
    p.add_argument("--data", required=True, help="preprocessed store directory")
    p.add_argument("--model", choices=("lstm", "fnn"), default="lstm")
    p.add_argument("--recipe", choices=("iot", "iot+history"), default="iot")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--config", help="model config file (hidden, num_layers, ...)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="24-hour forecast from a 48-hour window CSV")
    p.add_argument("--model", choices=("lstm", "fnn", "persistence", "havg", "arima"), default="lstm")
    p.add_argument("--checkpoint", help="trained model checkpoint (lstm/fnn only)")
    p.add_argument("--window", required=True, help="CSV with exactly 48 hours of one station")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score one predictor on a store's test windows")
    p.add_argument("--data", required=True, help="preprocessed store directory")
    p.add_argument("--model", choices=("lstm", "fnn", "persistence", "havg", "arima"), required=True)
    p.add_argument("--checkpoint", help="trained model checkpoint (lstm/fnn only)")
    p.add_argument("--jobs", type=int, help="parallel workers for per-window fits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full evaluation experiment on raw data")
    p.add_argument("name", choices=EXPERIMENT_NAMES)
    p.add_argument("--data", required=True, help="raw data directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--threshold", type=float, help="test-set missing-ratio cutoff")
    p.add_argument("--recipe", choices=("iot", "iot+history"), help="restrict sweep recipes")
    p.add_argument("--per-station", action="store_true", help="one model per test cell")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
