import numpy as np
import pytest

from urbantemp.lstm import (
    AdamState,
    LstmLayerParams,
    ModelConfig,
    TrainError,
    adam_step,
    build_lstm,
    clip_gradients,
    early_stop_epoch,
    forward,
    gradient_check,
    lstm_cell_forward,
    mse_loss,
    predict,
    small_test_config,
    train,
)
from urbantemp.series import TimeSeries
from urbantemp.windows import make_windows, split_train_val


def zero_layer(hidden=3, input_size=1):
    return LstmLayerParams(
        np.zeros((4 * hidden, hidden + input_size)), np.zeros(4 * hidden), hidden
    )


def test_cell_zero_everything():
    layer = zero_layer()
    h, C, _ = lstm_cell_forward(np.zeros(1), np.zeros(3), np.zeros(3), layer)
    np.testing.assert_array_equal(h, np.zeros(3))
    np.testing.assert_array_equal(C, np.zeros(3))


def test_cell_saturated_forget_gate_passes_memory():
    layer = zero_layer()
    layer.b_f[:] = 20.0
    c_prev = np.array([0.3, -1.2, 2.0])
    h, C, _ = lstm_cell_forward(np.zeros(1), np.zeros(3), c_prev, layer)
    np.testing.assert_allclose(C, c_prev, atol=1e-8)


def test_cell_matches_straightline_oracle():
    # Same draws as the frozen scalar-arithmetic transcription of the six
    # gate equations; expected values recorded from that run.
    rng = np.random.default_rng(42)
    M = 3
    W_f = rng.standard_normal((M, M + 1))
    W_i = rng.standard_normal((M, M + 1))
    W_C = rng.standard_normal((M, M + 1))
    W_o = rng.standard_normal((M, M + 1))
    b_f = rng.standard_normal(M)
    b_i = rng.standard_normal(M)
    b_C = rng.standard_normal(M)
    b_o = rng.standard_normal(M)
    h_prev = rng.standard_normal(M)
    C_prev = rng.standard_normal(M)
    x = rng.standard_normal(1)
    layer = LstmLayerParams(
        np.vstack([W_f, W_i, W_C, W_o]), np.concatenate([b_f, b_i, b_C, b_o]), M
    )
    h, C, _ = lstm_cell_forward(x, h_prev, C_prev, layer)
    np.testing.assert_allclose(
        h, [0.4082822011520222, 0.03953301381950249, 0.45461050154674515], rtol=1e-12
    )
    np.testing.assert_allclose(
        C, [0.5362428657830939, 0.5699241145711043, 0.8047417506461676], rtol=1e-12
    )


def test_cell_shape_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        lstm_cell_forward(np.zeros(2), np.zeros(3), np.zeros(3), zero_layer())


def test_memory_passing_across_many_steps():
    # Forget gate saturated open, input gate saturated closed: the cell
    # state must survive arbitrary input sequences.
    layer = zero_layer()
    layer.b_f[:] = 20.0
    layer.b_i[:] = -20.0
    rng = np.random.default_rng(0)
    h = np.zeros(3)
    C = C0 = np.array([0.5, -0.25, 1.5])
    for _ in range(100):
        h, C, _ = lstm_cell_forward(rng.standard_normal(1), h, C, layer)
    np.testing.assert_allclose(C, C0, atol=1e-6)


def test_gate_boundedness():
    rng = np.random.default_rng(7)
    layer = LstmLayerParams(rng.standard_normal((12, 4)), rng.standard_normal(12), 3)
    for _ in range(50):
        _, _, (a, f, i, g, o, c_prev, tanh_c) = lstm_cell_forward(
            rng.standard_normal(1), rng.standard_normal(3), rng.standard_normal(3), layer
        )
        for gate in (f, i, o):
            assert np.all(gate > 0) and np.all(gate < 1)
        assert np.all(np.abs(g) < 1) and np.all(np.abs(tanh_c) < 1)


def zero_model(config):
    model = build_lstm(config)
    for p in model.parameters():
        p[:] = 0.0
    return model


def test_forward_zero_model_outputs_fc_bias():
    config = small_test_config()
    model = zero_model(config)
    model.fc.b[:] = [1.0, -2.0, 3.0]
    pred, _ = forward(np.ones(6), model)
    np.testing.assert_array_equal(pred, [1.0, -2.0, 3.0])


def test_forward_shape_and_purity():
    model = build_lstm(ModelConfig(seed=3))
    x = np.linspace(-1, 1, 48)
    p1, _ = forward(x, model)
    p2, _ = forward(x, model)
    assert p1.shape == (24,)
    np.testing.assert_array_equal(p1, p2)
    with pytest.raises(ValueError, match="expected input shape"):
        forward(np.ones(47), model)


def test_forward_nonfinite_names_timestep():
    model = build_lstm(small_test_config())
    model.layers[0].W[0, 0] = np.nan
    with pytest.raises(TrainError, match="timestep 0"):
        forward(np.ones(6), model)


def test_mse_loss_examples():
    assert mse_loss(np.ones(24), np.ones(24)) == 0.0
    assert mse_loss(np.ones(24) + 1, np.ones(24)) == 1.0
    assert mse_loss(np.array([2.0, 4.0]), np.zeros(2)) == 10.0


def test_backward_zero_model_zero_target():
    config = small_test_config()
    model = zero_model(config)
    X = np.zeros((1, 6))
    pred, cache = model.forward_batch(X)
    grads = model.backward_batch(cache, np.zeros((1, 3)))
    np.testing.assert_array_equal(grads[-1], np.zeros(3))  # FC bias gradient


def test_loss_gradient_wrt_prediction():
    config = small_test_config(seed=5)
    model = build_lstm(config)
    x = np.random.default_rng(5).standard_normal(6)
    y = np.random.default_rng(6).standard_normal(3)
    pred, cache = model.forward_batch(x[None, :])
    # The FC bias gradient is exactly dL/dpred.
    grads = model.backward_batch(cache, y[None, :])
    np.testing.assert_allclose(grads[-1], 2.0 * (pred[0] - y) / 3.0, rtol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(99)
    for seed in (0, 1):
        model = build_lstm(small_test_config(seed=seed))
        x = rng.standard_normal(6)
        y = rng.standard_normal(3)
        assert gradient_check(model, x, y, step=1e-5) < 1e-4


def test_gradient_check_zero_guard_and_step_growth():
    model = zero_model(small_test_config())
    assert gradient_check(model, np.zeros(6), np.zeros(3)) == 0.0
    model = build_lstm(small_test_config(seed=2))
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(6), rng.standard_normal(3)
    fine = gradient_check(model, x, y, step=1e-5)
    coarse = gradient_check(model, x, y, step=1e-1)
    assert coarse > fine


def test_adam_zero_gradient_is_noop():
    params = [np.array([1.0, 2.0]), np.array([[3.0]])]
    grads = [np.zeros(2), np.zeros((1, 1))]
    state = AdamState.for_params(params)
    adam_step(params, grads, state, lr=0.1)
    np.testing.assert_array_equal(params[0], [1.0, 2.0])
    np.testing.assert_array_equal(state.m[0], np.zeros(2))
    assert state.step_count == 1


def test_adam_first_step_is_signed_lr():
    g = np.array([0.5, -3.0, 1e-6])
    params = [np.zeros(3)]
    state = AdamState.for_params(params)
    adam_step(params, [g], state, lr=0.005)
    expected = -0.005 * g / (np.abs(g) + state.epsilon)
    np.testing.assert_allclose(params[0], expected, rtol=1e-12)


def test_adam_constant_gradient_step_approaches_lr():
    g = np.array([0.7])
    params = [np.zeros(1)]
    state = AdamState.for_params(params)
    prev = params[0].copy()
    for _ in range(500):
        prev = params[0].copy()
        adam_step(params, [g], state, lr=0.01)
    assert abs(abs(params[0][0] - prev[0]) - 0.01) < 1e-4


def test_clip_gradients():
    grads = [np.full(4, 3.0), np.full(9, 4.0)]
    clip_gradients(grads, 5.0)
    total = np.sqrt(sum(np.sum(g * g) for g in grads))
    assert total == pytest.approx(5.0, rel=1e-12)
    small = [np.array([0.1])]
    clip_gradients(small, 5.0)
    np.testing.assert_array_equal(small[0], [0.1])


def test_early_stop_epoch():
    assert early_stop_epoch([5.0, 3.0, 1.0, 2.0, 10.2], 10.0) == 4
    assert early_stop_epoch([5.0, 3.0, 1.0, 9.9], 10.0) is None
    assert early_stop_epoch([], 10.0) is None
    assert early_stop_epoch([1.0, 10.1], 10.0) == 1


def constant_samples(n_hours=200, level=10.0, jitter=1e-3, seed=0):
    rng = np.random.default_rng(seed)
    values = np.full(n_hours, level) + rng.normal(0, jitter, n_hours)
    return make_windows(TimeSeries("st01", 0, values))


def test_train_converges_on_near_constant_data():
    samples = constant_samples()
    train_set, val_set = split_train_val(samples, 0.9, seed=1)
    config = ModelConfig(num_layers=1, hidden=8, max_epochs=50, seed=1)
    model, history = train(build_lstm(config), train_set, val_set, config)
    rmse = np.sqrt(
        np.mean([(predict(model, s.input) - s.target) ** 2 for s in val_set])
    )
    assert rmse < 0.01
    assert len(history) <= 50


def test_train_learns_pure_sine():
    hours = np.arange(620)
    values = 6.0 * np.sin(2 * np.pi * hours / 24.0) + 12.0
    samples = make_windows(TimeSeries("st01", 0, values))
    assert len(samples) > 500
    train_set, val_set = split_train_val(samples, 0.9, seed=2)
    config = ModelConfig(num_layers=1, hidden=16, max_epochs=60, seed=2)
    model, _ = train(build_lstm(config), train_set, val_set, config)
    errors = [predict(model, s.input) - s.target for s in val_set]
    rmse = float(np.sqrt(np.mean(np.square(errors))))
    assert rmse < 0.6  # 10% of the 6-degree amplitude


def test_train_early_stop_injection():
    samples = constant_samples()
    train_set, val_set = split_train_val(samples, 0.9, seed=1)
    config = ModelConfig(num_layers=1, hidden=4, max_epochs=50, seed=1)

    def spike(epoch, train_loss, val_loss):
        return 1.0 if epoch < 3 else 10.1

    model, history = train(build_lstm(config), train_set, val_set, config, epoch_callback=spike)
    # Best loss settles at 1.0; epoch 3 reports 10.1 > 10 x 1.0 and halts.
    assert len(history) == 4
    assert history[-1].val_loss == 10.1


def test_train_divergence_raises_with_epoch():
    samples = constant_samples()
    train_set, val_set = split_train_val(samples, 0.9, seed=1)
    config = ModelConfig(num_layers=1, hidden=4, max_epochs=50, seed=1)

    def blow_up(epoch, train_loss, val_loss):
        return np.inf if epoch == 2 else None

    with pytest.raises(TrainError, match="epoch 2"):
        train(build_lstm(config), train_set, val_set, config, epoch_callback=blow_up)


def test_train_loss_nonincreasing_small_lr():
    rng = np.random.default_rng(4)
    values = rng.normal(0, 1, 72 + 9)
    samples = make_windows(TimeSeries("st01", 0, values))  # 10 samples
    assert len(samples) == 10
    config = ModelConfig(
        num_layers=1, hidden=6, learning_rate=1e-4, batch_size=10, max_epochs=20, seed=3
    )
    _, history = train(build_lstm(config), samples, samples[:2], config)
    losses = [h.train_loss for h in history]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_train_restores_best_validation_params():
    samples = constant_samples(seed=5)
    train_set, val_set = split_train_val(samples, 0.9, seed=5)
    config = ModelConfig(num_layers=1, hidden=4, max_epochs=15, seed=5)
    model, history = train(build_lstm(config), train_set, val_set, config)
    from urbantemp.windows import normalize, stack_samples

    X_val, Y_val = (normalize(a, model.stats) for a in stack_samples(val_set))
    pred, _ = model.forward_batch(X_val, need_cache=False)
    assert mse_loss(pred, Y_val) == min(h.val_loss for h in history)


def test_flat_head_variant():
    config = ModelConfig(
        num_layers=1, hidden=5, in_len=6, out_len=3, head="flat", seed=8
    )
    model = build_lstm(config)
    assert model.fc.W.shape == (3, 30)
    rng = np.random.default_rng(8)
    assert gradient_check(model, rng.standard_normal(6), rng.standard_normal(3)) < 1e-4


def test_predict_requires_stats():
    model = build_lstm(ModelConfig())
    with pytest.raises(TrainError, match="stats"):
        predict(model, np.ones(48))


def test_predict_near_constant_model():
    samples = constant_samples()
    train_set, val_set = split_train_val(samples, 0.9, seed=1)
    config = ModelConfig(num_layers=1, hidden=8, max_epochs=30, seed=1)
    model, _ = train(build_lstm(config), train_set, val_set, config)
    out = predict(model, np.full(48, 10.0))
    assert out.shape == (24,)
    assert np.all(np.abs(out - 10.0) < 0.5)
