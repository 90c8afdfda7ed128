"""Reference predictors: persistence, historical average, and a one-hidden-
layer feedforward network that reuses the LSTM training machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lstm import ModelConfig
from .windows import NormStats


def persistence_forecast(window: np.ndarray, variant: str = "hold", out_len: int = 24) -> np.ndarray:
    """HOLD repeats the last observation; CYCLE replays the previous day."""
    window = np.asarray(window, dtype=np.float64)
    if variant == "hold":
        return np.full(out_len, window[-1])
    if variant == "cycle":
        if len(window) < out_len:
            raise ValueError(f"window of {len(window)} too short for cycle of {out_len}")
        return window[-out_len:].copy()
    raise ValueError(f"unknown persistence variant {variant!r}")


def historical_average_forecast(window: np.ndarray, out_len: int = 24) -> np.ndarray:
    """Hour-aligned mean of the two days preceding the forecast origin."""
    window = np.asarray(window, dtype=np.float64)
    if len(window) != 2 * out_len:
        raise ValueError(f"expected a {2 * out_len}-hour window, got {len(window)}")
    return (window[:out_len] + window[out_len:]) / 2.0


@dataclass
class FnnModel:
    """48-to-24 multilayer perceptron: one tanh hidden layer, linear output.

    Output neurons are decoupled given the hidden layer; each predicts its
    own horizon hour independently.
    """

    config: ModelConfig
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    stats: NormStats | None = None
    kind: str = field(default="fnn", init=False)

    def parameters(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    def forward_batch(self, X: np.ndarray, need_cache: bool = True):
        H = np.tanh(X @ self.W1.T + self.b1)
        pred = H @ self.W2.T + self.b2
        return pred, ((X, H) if need_cache else None)

    def backward_batch(self, cache, Y: np.ndarray) -> list[np.ndarray]:
        X, H = cache
        pred = H @ self.W2.T + self.b2
        dpred = 2.0 * (pred - Y) / Y.size
        dW2 = dpred.T @ H
        db2 = dpred.sum(axis=0)
        dZ = (dpred @ self.W2) * (1.0 - H * H)
        return [dZ.T @ X, dZ.sum(axis=0), dW2, db2]


def build_fnn(config: ModelConfig, rng: np.random.Generator | None = None) -> FnnModel:
    if rng is None:
        from .seeding import spawn_rng

        rng = spawn_rng(config.seed, "fnn-init")
    s1 = 1.0 / math.sqrt(config.in_len)
    s2 = 1.0 / math.sqrt(config.hidden)
    return FnnModel(
        config,
        rng.uniform(-s1, s1, size=(config.hidden, config.in_len)),
        np.zeros(config.hidden),
        rng.uniform(-s2, s2, size=(config.out_len, config.hidden)),
        np.zeros(config.out_len),
    )
