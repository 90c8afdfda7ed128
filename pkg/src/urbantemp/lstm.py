"""Stacked LSTM with a fully connected head, trained by hand-derived BPTT.

No autodiff: the backward pass mirrors the forward gate algebra exactly.
Everything runs in double precision so gradients can be validated against
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as sigmoid

from .windows import NormStats, Sample, fit_norm_stats, normalize, denormalize, stack_samples


class TrainError(RuntimeError):
    """Raised on numeric blow-ups during forward passes or training."""


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden: int = 48
    in_len: int = 48
    out_len: int = 24
    learning_rate: float = 0.005
    batch_size: int = 0  # 0 derives ceil(n_train / 8)
    max_epochs: int = 200
    early_stop_factor: float = 10.0
    seed: int = 0
    head: str = "last"  # "last" or "flat"
    clip_norm: float = 0.0  # 0 disables gradient clipping
    forget_bias: float = 1.0

    def __post_init__(self) -> None:
        if self.num_layers < 1 or self.hidden < 1:
            raise ValueError("num_layers and hidden must be >= 1")
        if self.early_stop_factor <= 1.0:
            raise ValueError("early_stop_factor must be > 1")
        if self.head not in ("last", "flat"):
            raise ValueError(f"unknown head {self.head!r}")


@dataclass
class LstmLayerParams:
    """One layer's gates, fused row-wise as [forget; input; candidate; output].

    W has shape (4*hidden, hidden + input_size): each gate sees the previous
    hidden state concatenated with the layer input. The per-gate views below
    expose the conventional split without copying.
    """

    W: np.ndarray
    b: np.ndarray
    hidden: int

    @property
    def W_f(self) -> np.ndarray:
        return self.W[: self.hidden]

    @property
    def W_i(self) -> np.ndarray:
        return self.W[self.hidden : 2 * self.hidden]

    @property
    def W_C(self) -> np.ndarray:
        return self.W[2 * self.hidden : 3 * self.hidden]

    @property
    def W_o(self) -> np.ndarray:
        return self.W[3 * self.hidden :]

    @property
    def b_f(self) -> np.ndarray:
        return self.b[: self.hidden]

    @property
    def b_i(self) -> np.ndarray:
        return self.b[self.hidden : 2 * self.hidden]

    @property
    def b_C(self) -> np.ndarray:
        return self.b[2 * self.hidden : 3 * self.hidden]

    @property
    def b_o(self) -> np.ndarray:
        return self.b[3 * self.hidden :]


@dataclass
class FcParams:
    W: np.ndarray
    b: np.ndarray


def init_lstm_layer(
    input_size: int, hidden: int, rng: np.random.Generator, forget_bias: float = 1.0
) -> LstmLayerParams:
    scale = 1.0 / math.sqrt(hidden)
    W = rng.uniform(-scale, scale, size=(4 * hidden, hidden + input_size))
    b = np.zeros(4 * hidden)
    b[:hidden] = forget_bias
    return LstmLayerParams(W, b, hidden)


@dataclass
class LstmModel:
    config: ModelConfig
    layers: list[LstmLayerParams]
    fc: FcParams
    stats: NormStats | None = None
    kind: str = field(default="lstm", init=False)

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend([layer.W, layer.b])
        params.extend([self.fc.W, self.fc.b])
        return params

    def forward_batch(self, X: np.ndarray, need_cache: bool = True):
        """Run (B, in_len) normalized inputs; returns (B, out_len) and cache."""
        cfg = self.config
        B, T = X.shape
        M = cfg.hidden
        h = [np.zeros((B, M)) for _ in self.layers]
        c = [np.zeros((B, M)) for _ in self.layers]
        steps: list[list[tuple]] = []
        top_h: list[np.ndarray] = []
        for t in range(T):
            inp = X[:, t : t + 1]
            per_layer = []
            for l, layer in enumerate(self.layers):
                a = np.concatenate([h[l], inp], axis=1)
                z = a @ layer.W.T + layer.b
                f = sigmoid(z[:, :M])
                i = sigmoid(z[:, M : 2 * M])
                g = np.tanh(z[:, 2 * M : 3 * M])
                o = sigmoid(z[:, 3 * M :])
                c_new = f * c[l] + i * g
                tanh_c = np.tanh(c_new)
                h_new = o * tanh_c
                if not np.isfinite(h_new).all():
                    raise TrainError(f"non-finite hidden state at timestep {t}, layer {l}")
                if need_cache:
                    per_layer.append((a, f, i, g, o, c[l], tanh_c))
                h[l], c[l] = h_new, c_new
                inp = h_new
            if need_cache:
                steps.append(per_layer)
            if cfg.head == "flat":
                top_h.append(h[-1])
        if cfg.head == "flat":
            head_in = np.concatenate(top_h, axis=1)
        else:
            head_in = h[-1]
        pred = head_in @ self.fc.W.T + self.fc.b
        cache = (X, steps, head_in) if need_cache else None
        return pred, cache

    def backward_batch(self, cache, Y: np.ndarray) -> list[np.ndarray]:
        """Gradients of mse_loss(pred, Y) in parameters() order."""
        X, steps, head_in = cache
        cfg = self.config
        B, T = X.shape
        M = cfg.hidden
        pred = head_in @ self.fc.W.T + self.fc.b
        dpred = 2.0 * (pred - Y) / Y.size

        dW_fc = dpred.T @ head_in
        db_fc = dpred.sum(axis=0)
        dhead = dpred @ self.fc.W

        grads_W = [np.zeros_like(layer.W) for layer in self.layers]
        grads_b = [np.zeros_like(layer.b) for layer in self.layers]
        dh = [np.zeros((B, M)) for _ in self.layers]
        dc = [np.zeros((B, M)) for _ in self.layers]
        if cfg.head == "last":
            dh[-1] += dhead
        for t in range(T - 1, -1, -1):
            if cfg.head == "flat":
                dh[-1] += dhead[:, t * M : (t + 1) * M]
            d_inp = None
            for l in range(len(self.layers) - 1, -1, -1):
                a, f, i, g, o, c_prev, tanh_c = steps[t][l]
                dh_l = dh[l] if d_inp is None else dh[l] + d_inp
                do = dh_l * tanh_c
                dct = dc[l] + dh_l * o * (1.0 - tanh_c * tanh_c)
                df = dct * c_prev
                di = dct * g
                dg = dct * i
                dc[l] = dct * f
                dz = np.concatenate(
                    [
                        df * f * (1.0 - f),
                        di * i * (1.0 - i),
                        dg * (1.0 - g * g),
                        do * o * (1.0 - o),
                    ],
                    axis=1,
                )
                grads_W[l] += dz.T @ a
                grads_b[l] += dz.sum(axis=0)
                da = dz @ self.layers[l].W
                dh[l] = da[:, :M]
                d_inp = da[:, M:]
        grads = []
        for l in range(len(self.layers)):
            grads.extend([grads_W[l], grads_b[l]])
        grads.extend([dW_fc, db_fc])
        return grads


def build_lstm(config: ModelConfig, rng: np.random.Generator | None = None) -> LstmModel:
    """Seeded uniform [-1/sqrt(M), 1/sqrt(M)] init; forget bias opened."""
    if rng is None:
        from .seeding import spawn_rng

        rng = spawn_rng(config.seed, "lstm-init")
    layers = []
    input_size = 1
    for _ in range(config.num_layers):
        layers.append(init_lstm_layer(input_size, config.hidden, rng, config.forget_bias))
        input_size = config.hidden
    head_in = config.hidden * (config.in_len if config.head == "flat" else 1)
    scale = 1.0 / math.sqrt(head_in)
    fc = FcParams(rng.uniform(-scale, scale, size=(config.out_len, head_in)), np.zeros(config.out_len))
    return LstmModel(config, layers, fc)


def lstm_cell_forward(x_t, h_prev, C_prev, params: LstmLayerParams):
    """Single cell step; returns (h_t, C_t, cache of all gate intermediates)."""
    x_t = np.atleast_1d(np.asarray(x_t, dtype=np.float64))
    a = np.concatenate([h_prev, x_t])
    if a.shape[0] != params.W.shape[1]:
        raise ValueError(f"input size {a.shape[0]} does not match weights {params.W.shape}")
    z = params.W @ a + params.b
    M = params.hidden
    f = sigmoid(z[:M])
    i = sigmoid(z[M : 2 * M])
    g = np.tanh(z[2 * M : 3 * M])
    o = sigmoid(z[3 * M :])
    C_t = f * C_prev + i * g
    h_t = o * np.tanh(C_t)
    return h_t, C_t, (a, f, i, g, o, C_prev, np.tanh(C_t))


def forward(x: np.ndarray, model: LstmModel):
    """Single-series forward: (in_len,) normalized input to (out_len,) output."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.config.in_len,):
        raise ValueError(f"expected input shape ({model.config.in_len},), got {x.shape}")
    pred, cache = model.forward_batch(x[None, :])
    return pred[0], cache


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """In-place Adam update with bias correction."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float) -> None:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale


def early_stop_epoch(losses: Sequence[float], factor: float) -> int | None:
    """Index of the first loss exceeding factor x best-so-far, else None."""
    best = math.inf
    for epoch, loss in enumerate(losses):
        if loss > factor * best:
            return epoch
        best = min(best, loss)
    return None


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


def train(
    model,
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    config: ModelConfig,
    epoch_callback: Callable[[int, float, float], float | None] | None = None,
) -> tuple[object, list[EpochStats]]:
    """Mini-batch Adam training with early stopping on validation loss.

    Works on any model exposing parameters/forward_batch/backward_batch.
    Normalization stats come from the training samples only. The best
    validation-loss parameters are restored at the end. epoch_callback may
    return a float to override the validation loss recorded that epoch
    (test seam for the early-stopping contract).
    """
    if not train_samples or not val_samples:
        raise TrainError("need non-empty training and validation sets")
    stats = fit_norm_stats(train_samples)
    model.stats = stats
    X_train, Y_train = (normalize(a, stats) for a in stack_samples(train_samples))
    X_val, Y_val = (normalize(a, stats) for a in stack_samples(val_samples))

    n = len(train_samples)
    batch_size = config.batch_size if config.batch_size > 0 else -(n // -8)
    batch_size = min(batch_size, n)
    params = model.parameters()
    adam = AdamState.for_params(params)
    from .seeding import spawn_rng

    rng = spawn_rng(config.seed, "train-shuffle")

    history: list[EpochStats] = []
    best = math.inf
    best_params: list[np.ndarray] | None = None
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        sq_sum = 0.0
        count = 0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            Xb, Yb = X_train[idx], Y_train[idx]
            pred, cache = model.forward_batch(Xb)
            grads = model.backward_batch(cache, Yb)
            if config.clip_norm > 0.0:
                clip_gradients(grads, config.clip_norm)
            adam_step(params, grads, adam, config.learning_rate)
            sq_sum += float(np.sum((pred - Yb) ** 2))
            count += Yb.size
        train_loss = sq_sum / count
        val_pred, _ = model.forward_batch(X_val, need_cache=False)
        val_loss = mse_loss(val_pred, Y_val)
        if epoch_callback is not None:
            override = epoch_callback(epoch, train_loss, val_loss)
            if override is not None:
                val_loss = float(override)
        history.append(EpochStats(epoch, train_loss, val_loss))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainError(f"training diverged at epoch {epoch}")
        if val_loss > config.early_stop_factor * best:
            break
        if val_loss < best:
            best = val_loss
            best_params = [p.copy() for p in params]
    if best_params is not None:
        for p, bp in zip(params, best_params):
            np.copyto(p, bp)
    return model, history


def predict(model, window: np.ndarray) -> np.ndarray:
    """Raw-degrees window in, raw-degrees 24-hour forecast out."""
    if model.stats is None:
        raise TrainError("model has no normalization stats; train or load it first")
    window = np.asarray(window, dtype=np.float64)
    in_len = model.config.in_len
    if window.shape != (in_len,):
        raise ValueError(f"expected window shape ({in_len},), got {window.shape}")
    z = normalize(window, model.stats)
    pred, _ = model.forward_batch(z[None, :], need_cache=False)
    return denormalize(pred[0], model.stats)


def predict_batch(model, windows: np.ndarray) -> np.ndarray:
    """Vectorized predict over (B, in_len) raw windows."""
    if model.stats is None:
        raise TrainError("model has no normalization stats; train or load it first")
    z = normalize(np.asarray(windows, dtype=np.float64), model.stats)
    pred, _ = model.forward_batch(z, need_cache=False)
    return denormalize(pred, model.stats)


def gradient_check(model, x: np.ndarray, y: np.ndarray, step: float = 1e-5) -> float:
    """Max relative gap between BPTT and central finite differences.

    The denominator floors at 1e-4 so near-zero gradient pairs compare
    absolutely instead of blowing up on rounding noise.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    X = np.asarray(x, dtype=np.float64)[None, :]
    Y = np.asarray(y, dtype=np.float64)[None, :]
    pred, cache = model.forward_batch(X)
    analytic = model.backward_batch(cache, Y)
    worst = 0.0
    for p, g in zip(model.parameters(), analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            keep = flat_p[j]
            flat_p[j] = keep + step
            up, _ = model.forward_batch(X, need_cache=False)
            flat_p[j] = keep - step
            down, _ = model.forward_batch(X, need_cache=False)
            flat_p[j] = keep
            fd = (mse_loss(up, Y) - mse_loss(down, Y)) / (2.0 * step)
            denom = max(abs(flat_g[j]), abs(fd), 1e-4)
            worst = max(worst, abs(flat_g[j] - fd) / denom)
    return worst


def small_test_config(seed: int = 0) -> ModelConfig:
    """Tiny geometry used by gradient checks: 2x5 cells on 6-in 3-out data."""
    return ModelConfig(num_layers=2, hidden=5, in_len=6, out_len=3, seed=seed)


def clone_config(config: ModelConfig, **overrides) -> ModelConfig:
    return replace(config, **overrides)
