import math

import numpy as np
import pytest

from urbantemp.baselines import (
    build_fnn,
    historical_average_forecast,
    persistence_forecast,
)
from urbantemp.lstm import ModelConfig, gradient_check, predict, train
from urbantemp.series import TimeSeries
from urbantemp.windows import make_windows, split_train_val


def test_persistence_hold():
    window = np.concatenate([np.zeros(47), [17.0]])
    np.testing.assert_array_equal(persistence_forecast(window), np.full(24, 17.0))


def test_persistence_variants_agree_on_constant():
    window = np.full(48, 3.5)
    hold = persistence_forecast(window, "hold")
    cycle = persistence_forecast(window, "cycle")
    np.testing.assert_array_equal(hold, cycle)
    with pytest.raises(ValueError, match="unknown persistence variant"):
        persistence_forecast(window, "wavy")


def test_persistence_on_pure_sine():
    A = 6.0
    t = np.arange(72)
    signal = A * np.sin(2 * np.pi * t / 24.0)
    window, truth = signal[:48], signal[48:]
    cycle = persistence_forecast(window, "cycle")
    assert np.sqrt(np.mean((cycle - truth) ** 2)) < 1e-12
    hold = persistence_forecast(window, "hold")
    rmse_hold = np.sqrt(np.mean((hold - truth) ** 2))
    # Mean of (sin(theta_h) - s0)^2 over the 24 equally spaced phases is
    # exactly 1/2 + s0^2.
    s0 = math.sin(2 * math.pi * 47 / 24.0)
    np.testing.assert_allclose(rmse_hold, A * math.sqrt(0.5 + s0 * s0), rtol=1e-12)


def test_historical_average_examples():
    day = np.sin(np.arange(24))
    window = np.concatenate([day, day])
    np.testing.assert_allclose(historical_average_forecast(window), day)
    window = np.concatenate([np.zeros(24), np.full(24, 10.0)])
    np.testing.assert_array_equal(historical_average_forecast(window), np.full(24, 5.0))
    with pytest.raises(ValueError, match="48-hour window"):
        historical_average_forecast(np.zeros(47))


def test_historical_average_matches_oracle_and_symmetry():
    rng = np.random.default_rng(12)
    window = rng.normal(10, 5, size=48)
    got = historical_average_forecast(window)
    expected = np.array([(window[h] + window[h + 24]) / 2 for h in range(24)])
    np.testing.assert_allclose(got, expected)
    swapped = np.concatenate([window[24:], window[:24]])
    np.testing.assert_allclose(historical_average_forecast(swapped), got)


def fnn_config(**kw):
    defaults = dict(num_layers=1, hidden=5, in_len=6, out_len=3, seed=0)
    defaults.update(kw)
    return ModelConfig(**defaults)


def test_fnn_zero_model_outputs_bias():
    model = build_fnn(fnn_config())
    for p in model.parameters():
        p[:] = 0.0
    model.b2[:] = [1.0, 2.0, 3.0]
    pred, _ = model.forward_batch(np.ones((1, 6)))
    np.testing.assert_array_equal(pred[0], [1.0, 2.0, 3.0])


def test_fnn_gradient_check():
    rng = np.random.default_rng(31)
    for seed in (0, 1):
        model = build_fnn(fnn_config(seed=seed))
        assert gradient_check(model, rng.standard_normal(6), rng.standard_normal(3)) < 1e-4


def test_fnn_trains_on_near_constant_data():
    rng = np.random.default_rng(2)
    values = np.full(200, 10.0) + rng.normal(0, 1e-3, 200)
    samples = make_windows(TimeSeries("st01", 0, values))
    train_set, val_set = split_train_val(samples, 0.9, seed=2)
    config = ModelConfig(num_layers=1, hidden=16, max_epochs=50, seed=2)
    model, _ = train(build_fnn(config), train_set, val_set, config)
    rmse = np.sqrt(np.mean([(predict(model, s.input) - s.target) ** 2 for s in val_set]))
    assert rmse < 0.01


def test_fnn_output_neurons_are_independent():
    model = build_fnn(fnn_config(seed=4))
    x = np.random.default_rng(4).standard_normal((1, 6))
    before, _ = model.forward_batch(x)
    model.W2[1, :] = 0.0
    model.b2[1] = 0.0
    after, _ = model.forward_batch(x)
    assert after[0, 1] == 0.0
    np.testing.assert_array_equal(after[0, [0, 2]], before[0, [0, 2]])
