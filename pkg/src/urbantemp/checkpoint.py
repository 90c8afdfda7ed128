"""Versioned binary model container.

Layout: 4-byte magic, u32 format version, u32 header length, JSON header
(kind, config, normalization stats), then raw little-endian float64 blocks.
LSTM block order per layer: W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o; then the
fully connected W and b. FNN order: W1, b1, W2, b2.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import build_fnn
from .lstm import ModelConfig, build_lstm
from .windows import NormStats

MAGIC = b"UTCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or mismatched checkpoint files."""


def _param_blocks(model) -> list[np.ndarray]:
    if model.kind == "lstm":
        blocks = []
        for layer in model.layers:
            blocks.extend(
                [layer.W_f, layer.W_i, layer.W_C, layer.W_o,
                 layer.b_f, layer.b_i, layer.b_C, layer.b_o]
            )
        blocks.extend([model.fc.W, model.fc.b])
        return blocks
    if model.kind == "fnn":
        return [model.W1, model.b1, model.W2, model.b2]
    raise CheckpointError(f"unknown model kind {model.kind!r}")


def save_checkpoint(model, path: str | Path) -> None:
    header = {
        "kind": model.kind,
        "config": asdict(model.config),
        "stats": None if model.stats is None else {"mean": model.stats.mean, "std": model.stats.std},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for block in _param_blocks(model):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(raw) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
        config = ModelConfig(**header["config"])
        kind = header["kind"]
        stats = header["stats"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None

    if kind == "lstm":
        model = build_lstm(config)
    elif kind == "fnn":
        model = build_fnn(config)
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    if stats is not None:
        model.stats = NormStats(stats["mean"], stats["std"])

    payload = raw[12 + header_len :]
    blocks = _param_blocks(model)
    expected = sum(b.size for b in blocks) * 8
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: parameter payload is {len(payload)} bytes, expected {expected}"
        )
    offset = 0
    for block in blocks:
        n = block.size * 8
        values = np.frombuffer(payload[offset : offset + n], dtype="<f8").reshape(block.shape)
        block[...] = values
        offset += n
    return model
