"""Render experiment figures next to their delimited outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ExtremeDayReport, HorizonProfile

# fixed metadata keeps rerenders byte-stable
_PNG_META = {"Software": "urbantemp"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def comparison_figure(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Bar chart of per-model mean RMSE with min/max whiskers."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [r["model"] for r in rows]
    means = np.array([r["rmse_mean"] for r in rows])
    lo = means - np.array([r["rmse_min"] for r in rows])
    hi = np.array([r["rmse_max"] for r in rows]) - means
    ax.bar(names, means, yerr=[lo, hi], capsize=4, color="tab:blue", alpha=0.8)
    ax.set_ylabel("RMSE (°C)")
    ax.set_title("Model comparison: per-station mean RMSE (whiskers: min/max)")
    ax.tick_params(axis="x", rotation=20)
    return _save(fig, path)


def horizon_figure(profiles: Mapping[str, HorizonProfile], path: str | Path) -> Path:
    """RMSE and bias per forecast hour, one line per model."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    hours = np.arange(1, 25)
    for name, profile in profiles.items():
        ax1.plot(hours, profile.rmse, marker=".", label=name)
        ax2.plot(hours, profile.bias, marker=".", label=name)
    ax1.set_xlabel("forecast hour")
    ax1.set_ylabel("RMSE (°C)")
    ax2.set_xlabel("forecast hour")
    ax2.set_ylabel("bias (°C)")
    ax2.axhline(0.0, color="gray", lw=0.8)
    ax1.legend(fontsize=8)
    fig.suptitle("Error by forecast hour")
    return _save(fig, path)


def sensitivity_figure(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Mean RMSE against the missing-ratio threshold, one line per recipe."""
    fig, ax = plt.subplots(figsize=(6, 4))
    recipes = sorted({r["recipe"] for r in rows})
    for recipe in recipes:
        sub = sorted((r for r in rows if r["recipe"] == recipe), key=lambda r: r["threshold"])
        ax.plot(
            [r["threshold"] for r in sub],
            [r["rmse_mean"] for r in sub],
            marker="o",
            label=recipe,
        )
    ax.set_xlabel("missing-ratio threshold")
    ax.set_ylabel("mean RMSE (°C)")
    ax.set_title("Sensitivity to training-data missing ratio")
    ax.legend()
    return _save(fig, path)


def spatial_figure(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Scatter of station cells colored by mean RMSE."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    lons = [r["lon"] for r in rows]
    lats = [r["lat"] for r in rows]
    errs = [r["mean_rmse"] for r in rows]
    sc = ax.scatter(lons, lats, c=errs, cmap="viridis", s=60)
    fig.colorbar(sc, ax=ax, label="mean RMSE (°C)")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title("Spatial distribution of RMSE")
    return _save(fig, path)


def extreme_figure(report: ExtremeDayReport, path: str | Path) -> Path:
    """Histogram of per-day mean RMSE with the flag threshold marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    values = list(report.day_rmse.values())
    top = max(values + [report.flag_threshold]) + report.bin_width
    edges = np.arange(0.0, top + report.bin_width, report.bin_width)
    ax.hist(values, bins=edges, color="tab:blue", alpha=0.8, edgecolor="white")
    ax.axvline(report.flag_threshold, color="tab:red", ls="--", label="flag threshold")
    ax.set_xlabel("per-day mean RMSE (°C)")
    ax.set_ylabel("test days")
    ax.set_title("Distribution of per-day forecast error")
    ax.legend()
    return _save(fig, path)
