import math

import numpy as np
import pytest

from urbantemp.baselines import persistence_forecast
from urbantemp.metrics import (
    bias,
    comparison_rows,
    evaluate_model,
    extreme_day_report,
    horizon_profile,
    make_report,
    per_station_mean,
    pooled_rmse,
    rmse,
    spatial_error_table,
)
from urbantemp.geo import GridCell
from urbantemp.series import DataError, TimeSeries
from urbantemp.windows import select_test_windows


def test_rmse_examples():
    v = np.arange(24.0)
    assert rmse(v, v) == 0.0
    assert rmse(v + 1, v) == 1.0
    assert rmse(np.array([2.0, 4.0]), np.zeros(2)) == pytest.approx(math.sqrt(10), rel=1e-12)
    with pytest.raises(ValueError):
        rmse(np.zeros(24), np.zeros(23))


def test_bias_examples():
    v = np.arange(24.0)
    assert bias(v, v) == 0.0
    assert bias(v + 1, v) == 1.0
    pred = np.tile([2.0, -2.0], 12)
    assert bias(pred, np.zeros(24)) == 0.0
    assert rmse(pred, np.zeros(24)) == 2.0


def test_rmse_dominates_bias():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pred = rng.normal(size=24)
        truth = rng.normal(size=24)
        assert rmse(pred, truth) >= abs(bias(pred, truth)) - 1e-12
    # Equality iff all errors identical.
    assert rmse(np.full(24, 1.5), np.zeros(24)) == abs(bias(np.full(24, 1.5), np.zeros(24)))


def test_shift_invariance():
    rng = np.random.default_rng(1)
    pred, truth = rng.normal(size=24), rng.normal(size=24)
    assert rmse(pred + 7, truth + 7) == pytest.approx(rmse(pred, truth), rel=1e-12)
    assert bias(pred + 7, truth + 7) == pytest.approx(bias(pred, truth), rel=1e-12)
    assert bias(pred + 3, truth) == pytest.approx(bias(pred, truth) + 3, rel=1e-12)


def report_with_errors(errors, station="st01", day=100, model="m"):
    errors = np.asarray(errors, dtype=np.float64)
    truth = np.zeros_like(errors)
    return make_report(station, day * 24 - 48, errors, truth, model)


def test_make_report_rejects_nonfinite():
    with pytest.raises(DataError, match="non-finite"):
        report_with_errors([np.nan] * 24)


def test_horizon_profile_constant_errors():
    reports = [report_with_errors(np.ones(24)) for _ in range(5)]
    profile = horizon_profile(reports)
    np.testing.assert_allclose(profile.rmse, np.ones(24))
    np.testing.assert_allclose(profile.bias, np.ones(24))


def test_horizon_profile_single_report():
    errors = np.linspace(-2, 2, 24)
    profile = horizon_profile([report_with_errors(errors)])
    np.testing.assert_allclose(profile.rmse, np.abs(errors))
    np.testing.assert_allclose(profile.bias, errors)


def test_pooled_aggregation_identity():
    rng = np.random.default_rng(5)
    reports = [report_with_errors(rng.normal(size=24)) for _ in range(40)]
    profile = horizon_profile(reports)
    overall = pooled_rmse(reports)
    assert overall**2 == pytest.approx(np.mean(profile.rmse**2), abs=1e-12)


def test_persistence_horizon_profile_arches_on_diurnal_signal():
    hours = np.arange(24 * 40, dtype=float)
    values = 12 + 6 * np.sin(2 * np.pi * hours / 24.0)
    dataset = {"st01": TimeSeries("st01", 0, values)}
    windows = select_test_windows(dataset, n_days=10, seed=1)
    reports = evaluate_model(
        lambda w, sid: persistence_forecast(w), windows, dataset, "persistence"
    )
    profile = horizon_profile(reports)
    interior_max = profile.rmse.argmax()
    assert 0 < interior_max < 23
    assert profile.rmse[interior_max] > profile.rmse[0]
    assert profile.rmse[interior_max] > profile.rmse[23]


def test_evaluate_model_perfect_oracle():
    hours = np.arange(24 * 40, dtype=float)
    dataset = {
        "a": TimeSeries("a", 0, np.sin(hours / 7.0)),
        "b": TimeSeries("b", 0, np.cos(hours / 5.0)),
    }
    windows = select_test_windows(dataset, n_days=4, seed=2)
    by_key = {(w.station_id, w.t0): w for w in windows}

    def oracle(window, sid):
        # Look the truth up directly; every prediction is exact.
        t0 = next(w.t0 for w in windows if w.station_id == sid
                  and np.array_equal(dataset[sid].window(w.t0, 48), window))
        return dataset[sid].window(t0 + 48, 24)

    reports = evaluate_model(oracle, windows, dataset, "oracle")
    assert all(r.rmse == 0.0 for r in reports)
    assert len(reports) == len(by_key) == 4 * 2  # days x stations


def test_evaluate_model_report_count_and_errors():
    dataset = {"a": TimeSeries("a", 0, np.full(24 * 40, 3.0))}
    windows = select_test_windows(dataset, n_days=3, seed=0)
    reports = evaluate_model(lambda w, sid: persistence_forecast(w), windows, dataset, "p")
    assert len(reports) == 3
    assert all(r.rmse == 0.0 for r in reports)  # persistence is exact on constants
    from urbantemp.windows import TestWindow

    with pytest.raises(DataError, match="unknown station"):
        evaluate_model(lambda w, sid: w[:24], [TestWindow("ghost", 0)], dataset, "p")


def test_comparison_rows_shape():
    reports_a = [report_with_errors(np.ones(24), station=s) for s in ("s1", "s2", "s3")]
    reports_b = [report_with_errors(np.zeros(24), station=s) for s in ("s1", "s2", "s3")]
    rows = comparison_rows({"hold": reports_a, "oracle": reports_b})
    assert [r["model"] for r in rows] == ["hold", "oracle"]
    assert rows[0]["rmse_min"] == rows[0]["rmse_mean"] == rows[0]["rmse_max"] == 1.0
    assert rows[1]["rmse_max"] == 0.0
    assert set(rows[0]) == {
        "model", "rmse_min", "rmse_mean", "rmse_max", "bias_min", "bias_mean", "bias_max"
    }


def test_comparison_uses_per_station_means():
    # Station s1 has windows with rmse 1 and 3 (mean 2); s2 has 10.
    reports = [
        report_with_errors(np.ones(24), station="s1", day=100),
        report_with_errors(np.full(24, 3.0), station="s1", day=101),
        report_with_errors(np.full(24, 10.0), station="s2", day=100),
    ]
    rows = comparison_rows({"m": reports})
    assert rows[0]["rmse_min"] == 2.0
    assert rows[0]["rmse_max"] == 10.0
    assert rows[0]["rmse_mean"] == 6.0


def test_spatial_table():
    grid = {"s1": GridCell.from_point(40.7, -74.0), "s2": GridCell.from_point(40.8, -73.9)}
    reports = [
        report_with_errors(np.ones(24), station="s1"),
        report_with_errors(np.full(24, 2.0), station="s2"),
    ]
    rows = spatial_error_table(reports, grid)
    assert [r["station_id"] for r in rows] == ["s1", "s2"]
    assert rows[0]["geohash"] == grid["s1"].geohash
    assert rows[1]["mean_rmse"] == 2.0
    with pytest.raises(DataError, match="grid metadata"):
        spatial_error_table([report_with_errors(np.ones(24), station="s3")], grid)


def test_extreme_day_report():
    reports = (
        [report_with_errors(np.zeros(24), day=d) for d in range(100, 110)]
        + [report_with_errors(np.full(24, 5.0), day=110)]
    )
    out = extreme_day_report(reports)
    assert out.flagged_days == [110]
    assert out.worst_days[0] == 110
    assert sum(c for _, _, c in out.bins) == 11
    assert out.bins[0][:2] == (0.0, 0.5) and out.bins[0][2] == 10
    assert out.bins[-1][:2] == (5.0, 5.5) and out.bins[-1][2] == 1


def test_extreme_day_report_no_flags_on_zero_error():
    reports = [report_with_errors(np.zeros(24), day=d) for d in (1, 2, 3)]
    out = extreme_day_report(reports)
    assert out.flagged_days == []
    assert out.bins == [(0.0, 0.5, 3)]


def test_per_station_mean():
    reports = [
        report_with_errors(np.ones(24), station="b"),
        report_with_errors(np.full(24, 3.0), station="a"),
    ]
    means = per_station_mean(reports)
    assert list(means) == ["a", "b"]
    assert means == {"a": 3.0, "b": 1.0}
