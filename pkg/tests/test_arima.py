import numpy as np
import pytest

from urbantemp.arima import (
    ArimaError,
    ArimaModel,
    ArimaOrder,
    arima_auto,
    arima_fit,
    arima_forecast,
    choose_d,
    simulate_arma,
)
from urbantemp.baselines import persistence_forecast


def test_order_validation():
    ArimaOrder(3, 2, 3)
    with pytest.raises(ArimaError):
        ArimaOrder(4, 0, 0)
    with pytest.raises(ArimaError):
        ArimaOrder(0, 3, 0)
    with pytest.raises(ArimaError):
        ArimaOrder(0, 0, -1)


def test_ar1_recovery():
    phis = []
    for seed in range(5):
        y = simulate_arma(2000, ar=(0.8,), mean=10.0, seed=seed)
        model = arima_fit(y, ArimaOrder(1, 0, 0))
        phis.append(model.ar_coeffs[0])
    assert 0.75 <= np.median(phis) <= 0.85
    assert all(0.7 <= phi <= 0.9 for phi in phis)


def test_ma1_recovery():
    y = simulate_arma(2000, ma=(0.5,), seed=3)
    model = arima_fit(y, ArimaOrder(0, 0, 1))
    assert abs(model.ma_coeffs[0] - 0.5) < 0.1


def test_white_noise_mean_and_variance():
    y = simulate_arma(2000, mean=3.0, sigma=2.0, seed=42)
    model = arima_fit(y, ArimaOrder(0, 0, 0))
    assert model.intercept == pytest.approx(y.mean(), rel=1e-6)
    assert model.sigma2 == pytest.approx(y.var(), rel=1e-6)
    assert model.ar_coeffs.size == 0 and model.ma_coeffs.size == 0


def test_random_walk_order_is_parameter_free():
    y = np.cumsum(simulate_arma(500, seed=1))
    model = arima_fit(y, ArimaOrder(0, 1, 0))
    assert model.ar_coeffs.size == 0 and model.ma_coeffs.size == 0
    assert model.intercept == 0.0


def test_random_walk_forecast_equals_persistence_hold():
    model = ArimaModel(ArimaOrder(0, 1, 0), np.zeros(0), np.zeros(0), 0.0, 1.0, 0.0)
    rng = np.random.default_rng(17)
    for _ in range(100):
        window = rng.uniform(-20, 35, size=48)
        np.testing.assert_array_equal(
            arima_forecast(model, window, 24), persistence_forecast(window, "hold")
        )


def test_ar_forecast_geometric_decay():
    model = ArimaModel(ArimaOrder(1, 0, 0), np.array([0.5]), np.zeros(0), 0.0, 1.0, 0.0)
    out = arima_forecast(model, np.array([1.0, 2.0, 8.0]), horizon=5)
    np.testing.assert_allclose(out, [4.0, 2.0, 1.0, 0.5, 0.25])


def test_one_step_forecast_matches_recursion_oracle():
    y = simulate_arma(500, ar=(0.5,), ma=(0.3,), mean=2.0, seed=9)
    model = arima_fit(y, ArimaOrder(1, 0, 1))
    phi, theta, mu = model.ar_coeffs[0], model.ma_coeffs[0], model.intercept
    x = y - mu
    e = np.zeros(len(y))
    for t in range(1, len(y)):
        e[t] = x[t] - phi * x[t - 1] - theta * e[t - 1]
    expected = mu + phi * x[-1] + theta * e[-1]
    got = arima_forecast(model, y, horizon=1)[0]
    assert got == pytest.approx(expected, rel=1e-9)


def test_forecast_inverts_double_differencing():
    # A perfect quadratic is reproduced exactly by a (0,2,0) model.
    t = np.arange(30, dtype=float)
    y = 0.5 * t * t + 2.0 * t + 1.0
    model = ArimaModel(ArimaOrder(0, 2, 0), np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0)
    out = arima_forecast(model, y, horizon=4)
    t_next = np.arange(30, 34, dtype=float)
    # With zero future second differences the curve continues linearly.
    slope = y[-1] - y[-2]
    np.testing.assert_allclose(out, y[-1] + slope * (t_next - 29.0))


def test_choose_d():
    stationary = simulate_arma(1500, ar=(0.6,), seed=2)
    assert choose_d(stationary) == 0
    walk = np.cumsum(simulate_arma(1500, seed=3))
    assert choose_d(walk) == 1
    double = np.cumsum(walk)
    assert choose_d(double) == 2


def test_explosive_estimate_rejected():
    walk = np.cumsum(np.random.default_rng(5).normal(size=2000))
    with pytest.raises(ArimaError, match="explosive AR"):
        arima_fit(walk, ArimaOrder(1, 0, 0))


def test_length_precondition():
    with pytest.raises(ArimaError, match="too short"):
        arima_fit(np.arange(20.0), ArimaOrder(1, 0, 0))
    with pytest.raises(ArimaError, match="missing"):
        arima_fit(np.array([1.0, np.nan, 3.0] * 20), ArimaOrder(0, 0, 0))


def test_auto_selects_ar2():
    hits = 0
    for seed in range(5):
        y = simulate_arma(2000, ar=(0.6, -0.3), seed=seed)
        model = arima_auto(y)
        hits += (model.order.p, model.order.d, model.order.q) == (2, 0, 0)
    assert hits >= 4


def test_auto_on_white_noise_is_near_base_fit():
    for seed in (7, 8, 9):
        y = simulate_arma(1000, seed=seed)
        model = arima_auto(y)
        base = arima_fit(y, ArimaOrder(0, 0, 0))
        assert model.aicc <= base.aicc + 2.0


def test_auto_on_constant_returns_random_walk():
    model = arima_auto(np.full(100, 4.0))
    assert (model.order.p, model.order.d, model.order.q) == (0, 1, 0)
    np.testing.assert_array_equal(
        arima_forecast(model, np.full(48, 4.0), 24), np.full(24, 4.0)
    )


def test_auto_on_short_window_succeeds():
    rng = np.random.default_rng(21)
    window = 10 + 3 * np.sin(2 * np.pi * np.arange(48) / 24) + rng.normal(0, 0.5, 48)
    model = arima_auto(window)
    out = arima_forecast(model, window, 24)
    assert out.shape == (24,)
    assert np.all(np.isfinite(out))


def test_simulate_arma_autocorrelation():
    y = simulate_arma(20000, ar=(0.8,), seed=11)
    x = y - y.mean()
    acf1 = (x[:-1] @ x[1:]) / (x @ x)
    assert acf1 == pytest.approx(0.8, abs=0.02)
