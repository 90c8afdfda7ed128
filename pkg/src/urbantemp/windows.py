"""Fixed-length training windows, normalization, and train/test bookkeeping.

A sample is 48 input hours plus the 24 target hours that follow. Test
windows are whole 72-hour spans anchored so the target covers one UTC day.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from .series import _EPOCH_ORDINAL, DataError, TimeSeries

IN_LEN = 48
OUT_LEN = 24
SPAN = IN_LEN + OUT_LEN


@dataclass(frozen=True)
class Sample:
    """One training example: input hours [t0, t0+48), target [t0+48, t0+72)."""

    station_id: str
    t0: int
    input: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class TestWindow:
    """A held-out 72-hour span; the last 24 hours are the scored target day."""

    station_id: str
    t0: int

    @property
    def target_day(self) -> int:
        """Epoch day covered by the 24 target hours."""
        return (self.t0 + IN_LEN) // 24


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise DataError(f"std must be positive, got {self.std!r}")


def make_windows(
    series: TimeSeries, in_len: int = IN_LEN, out_len: int = OUT_LEN, stride: int = 1
) -> list[Sample]:
    """Slide a (in_len + out_len)-hour window over a gap-free series."""
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    values = series.values
    if np.isnan(values).any():
        raise DataError(f"station {series.station_id}: series has missing values")
    span = in_len + out_len
    samples = []
    for i in range(0, len(values) - span + 1, stride):
        samples.append(
            Sample(
                series.station_id,
                series.start_hour + i,
                values[i : i + in_len],
                values[i + in_len : i + span],
            )
        )
    return samples


def stack_samples(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Samples as matrices: inputs (n, in_len), targets (n, out_len)."""
    if not samples:
        raise DataError("no samples to stack")
    return np.stack([s.input for s in samples]), np.stack([s.target for s in samples])


def fit_norm_stats(samples: Sequence[Sample]) -> NormStats:
    """Global z-score statistics over all input and target values."""
    if not samples:
        raise DataError("cannot fit normalization on zero samples")
    pooled = np.concatenate([np.concatenate([s.input, s.target]) for s in samples])
    std = float(pooled.std())
    if std == 0.0:
        raise DataError("zero variance in training samples")
    return NormStats(float(pooled.mean()), std)


def normalize(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def denormalize(z: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.std + stats.mean


def split_train_val(
    samples: Sequence[Sample], train_fraction: float = 0.9, seed: int = 0
) -> tuple[list[Sample], list[Sample]]:
    """Seeded shuffle, then split; both parts non-empty when len >= 2."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction {train_fraction!r} outside (0, 1)")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(train_fraction * len(samples)))
    if len(samples) >= 2:
        n_train = min(max(n_train, 1), len(samples) - 1)
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:]]
    return train, val


def _day_month(day: int) -> tuple[int, int]:
    d = date.fromordinal(day + _EPOCH_ORDINAL)
    return d.year, d.month


def select_test_windows(
    dataset: dict[str, TimeSeries],
    n_days: int = 27,
    seed: int = 0,
    must_include_days: Iterable[int] = (),
) -> list[TestWindow]:
    """Pick n_days target days, stratified by month, one window per station.

    Candidate days are those whose full 72-hour window (48 hours of context
    plus the target day) lies inside every station's span, so every model
    sees the identical paired window set. Quotas go round-robin over the
    months in chronological order; days within a month are drawn seeded.
    must_include_days forces specific epoch days into the selection.
    """
    if n_days == 0:
        return []
    if not dataset:
        raise DataError("empty dataset")
    lo = max(s.start_hour for s in dataset.values())
    hi = min(s.end_hour for s in dataset.values())
    first = -((lo + IN_LEN) // -24)  # ceil division
    last = hi // 24 - 1
    days = list(range(first, last + 1))
    if len(days) < n_days:
        raise DataError(f"only {len(days)} candidate test days, need {n_days}")

    by_month: dict[tuple[int, int], list[int]] = {}
    for d in days:
        by_month.setdefault(_day_month(d), []).append(d)
    months = sorted(by_month)

    chosen: set[int] = set()
    for d in must_include_days:
        if d < first or d > last:
            raise DataError(f"forced test day {d} outside candidate range [{first}, {last}]")
        chosen.add(d)
    if len(chosen) > n_days:
        raise DataError(f"{len(chosen)} forced days exceed n_days={n_days}")

    quota = {m: 0 for m in months}
    for d in chosen:
        quota[_day_month(d)] += 1
    remaining = n_days - len(chosen)
    i = 0
    stalled = 0
    while remaining > 0:
        m = months[i % len(months)]
        if quota[m] < len(by_month[m]):
            quota[m] += 1
            remaining -= 1
            stalled = 0
        else:
            stalled += 1
            if stalled >= len(months):
                raise DataError("cannot satisfy test-day quota")
        i += 1

    rng = np.random.default_rng(seed)
    for m in months:
        pool = [d for d in by_month[m] if d not in chosen]
        want = quota[m] - sum(1 for d in chosen if _day_month(d) == m)
        if want > 0:
            chosen.update(int(d) for d in rng.choice(pool, size=want, replace=False))

    windows = []
    for d in sorted(chosen):
        t0 = d * 24 - IN_LEN
        for station_id in sorted(dataset):
            windows.append(TestWindow(station_id, t0))
    return windows


def exclude_overlapping(
    samples: Sequence[Sample], test_windows: Sequence[TestWindow]
) -> list[Sample]:
    """Drop samples whose 72-hour span overlaps any test window's span.

    Exclusion is purely temporal: a test window at one station blocks the
    same hours at every station.
    """
    if not test_windows or not samples:
        return list(samples)
    spans = sorted({(w.t0, w.t0 + SPAN) for w in test_windows})
    merged = [spans[0]]
    for lo, hi in spans[1:]:
        if lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    starts = np.array([lo for lo, _ in merged])
    ends = np.array([hi for _, hi in merged])

    kept = []
    for s in samples:
        # Overlap iff some merged span has lo < s.t0+SPAN and hi > s.t0.
        j = int(np.searchsorted(starts, s.t0 + SPAN)) - 1
        if j >= 0 and ends[j] > s.t0:
            continue
        kept.append(s)
    return kept
