"""Series ingestion, normalization, ACF period estimation, and windowing."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    pass


@dataclass
class RawSeries:
    values: np.ndarray
    name: str
    split: int
    labels: np.ndarray | None = None  # full length, 0/1, test region meaningful

    @property
    def train(self):
        return self.values[: self.split]

    @property
    def test(self):
        return self.values[self.split:]

    @property
    def test_labels(self):
        if self.labels is None:
            return None
        return self.labels[self.split:]


@dataclass
class NormalizationStats:
    mean: float
    std: float


@dataclass
class PeriodEstimate:
    period: int
    acf: np.ndarray = field(repr=False, default=None)


_UCR_NAME = re.compile(r"_(\d+)_(\d+)_(\d+)\.(txt|csv|tsv|dat)$", re.IGNORECASE)


def load_ucr(path):
    """Load a UCR/KDD21-style file: one value per line, metadata in the
    filename suffix ``..._<split>_<anomStart>_<anomEnd>.txt`` (0-based,
    inclusive anomaly range)."""
    base = os.path.basename(path)
    m = _UCR_NAME.search(base)
    if m is None:
        raise DataError(f"filename does not follow _<split>_<start>_<end> convention: {base}")
    split, astart, aend = int(m.group(1)), int(m.group(2)), int(m.group(3))
    values = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise DataError(f"{base}: unparseable value at line {lineno}: {tok!r}")
    if not values:
        raise DataError(f"{base}: empty file")
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if not 0 < split < n:
        raise DataError(f"{base}: split {split} out of range for length {n}")
    if not (split <= astart <= aend < n):
        raise DataError(f"{base}: anomaly range [{astart},{aend}] invalid for length {n}")
    labels = np.zeros(n, dtype=np.int8)
    labels[astart:aend + 1] = 1
    return RawSeries(values=values, name=base, split=split, labels=labels)


def load_csv(path, value_col="value", label_col="label", split=None):
    """Load a CSV with a header row; labels come from label_col if present."""
    with open(path) as f:
        header = f.readline().strip()
        if not header:
            raise DataError(f"{path}: empty file")
        cols = [c.strip() for c in header.split(",")]
        if value_col not in cols:
            raise DataError(f"{path}: missing column {value_col!r}")
        vi = cols.index(value_col)
        li = cols.index(label_col) if label_col in cols else None
        values, labels = [], []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                values.append(float(parts[vi]))
                if li is not None:
                    labels.append(int(float(parts[li])))
            except (ValueError, IndexError):
                raise DataError(f"{path}: bad row at line {lineno}: {line!r}")
    if not values:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if split is None:
        split = n // 2
    if not 0 < split < n:
        raise DataError(f"{path}: split {split} out of range for length {n}")
    lab = np.asarray(labels, dtype=np.int8) if li is not None else None
    return RawSeries(values=values, name=os.path.basename(path), split=split, labels=lab)


def train_stats(series):
    """Mean/std over the train region only."""
    train = series.train
    return NormalizationStats(mean=float(train.mean()), std=float(train.std()))


def zscore(values, stats):
    """(x - mean)/std; degenerate std (< 1e-8) maps everything to zero."""
    values = np.asarray(values, dtype=np.float64)
    if stats.std < 1e-8:
        return np.zeros_like(values)
    return (values - stats.mean) / stats.std


def inverse_zscore(values, stats):
    if stats.std < 1e-8:
        return np.full_like(np.asarray(values, dtype=np.float64), stats.mean)
    return np.asarray(values) * stats.std + stats.mean


def estimate_period(train_values, max_lag=None):
    """Dominant period from the autocorrelation function of the train region.

    The ACF is computed on the mean-removed series, normalized by lag 0.
    The period is the lag in [2, max_lag] that is a local maximum with the
    highest ACF value; if no local maximum exceeds 0.1, falls back to 64.
    """
    x = np.asarray(train_values, dtype=np.float64)
    n = len(x)
    if n < 8:
        raise DataError(f"train region too short for period estimation ({n} points)")
    if max_lag is None:
        max_lag = min(1000, n // 3)
    max_lag = max(3, min(max_lag, n - 2))
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom < 1e-12:
        return PeriodEstimate(period=64, acf=np.zeros(max_lag + 1))
    full = np.correlate(xc, xc, mode="full")[n - 1:]
    acf = full[: max_lag + 2] / denom
    best_lag, best_val = None, 0.1
    for lag in range(2, max_lag + 1):
        if acf[lag] > acf[lag - 1] and acf[lag] >= acf[lag + 1]:
            if acf[lag] > best_val:
                best_lag, best_val = lag, acf[lag]
    if best_lag is None:
        return PeriodEstimate(period=64, acf=acf[: max_lag + 1])
    return PeriodEstimate(period=best_lag, acf=acf[: max_lag + 1])


@dataclass
class WindowBatch:
    windows: np.ndarray  # (B, T)
    origins: np.ndarray  # (B,) start index within the region


def window_origins(region_len, T, stride, phase=0):
    """Origins 0(+phase), stride steps apart, plus a right-aligned final
    window so every point of the region is covered."""
    if T > region_len:
        raise DataError(f"window length {T} exceeds region length {region_len}")
    origins = list(range(phase, region_len - T + 1, stride))
    last = region_len - T
    if not origins or origins[-1] != last:
        origins.append(last)
    return np.asarray(origins, dtype=np.int64)


def make_windows(values, T, stride, phase=0):
    values = np.asarray(values, dtype=np.float64)
    origins = window_origins(len(values), T, stride, phase)
    windows = np.stack([values[o:o + T] for o in origins])
    return WindowBatch(windows=windows, origins=origins)


def read_manifest(path):
    """Dataset manifest: one path per line, '#' starts a comment."""
    entries = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            entries.append(line if os.path.isabs(line) else os.path.join(base, line))
    return entries
