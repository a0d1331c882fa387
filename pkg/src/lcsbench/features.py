"""Model inputs from a pivoted frame.

Pipeline: keep 5XX ``count`` columns, append four seasonality features,
split by time range, impute nulls with 0, then min-max scale with
parameters learned on the training rows only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lcsbench.aggregator import PivotedFrame
from lcsbench.core import StatName, parse_column_name
from lcsbench.errors import ConfigError, ParseError
from lcsbench.groundtruth import AnomalyWindow

DAY = 86_400
WEEK = 7 * DAY
WEEK_ANCHOR = 4 * DAY  # Monday 1970-01-05 00:00 UTC

SEASONALITY_FEATURES = ("season_daily_sin", "season_daily_cos", "season_weekly_sin", "season_weekly_cos")
SCALER_VERSION = 1


@dataclass
class FeatureMatrix:
    intervals: np.ndarray
    names: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.intervals = np.asarray(self.intervals, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.intervals.size, len(self.names)):
            raise ValueError(f"values shape {self.values.shape} does not match axis and names")

    @classmethod
    def from_frame(cls, frame: PivotedFrame) -> "FeatureMatrix":
        order = np.argsort(np.array(frame.columns, dtype=object), kind="stable")
        return cls(frame.intervals.copy(), [frame.columns[i] for i in order], frame.values[:, order])

    def take_rows(self, mask: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.intervals[mask], list(self.names), self.values[mask])

    def __len__(self) -> int:
        return self.intervals.size

    def has_nulls(self) -> bool:
        return bool(np.isnan(self.values).any())


def is_5xx_count(column: str) -> bool:
    key, stat = parse_column_name(column)
    return stat is StatName.COUNT and 500 <= key.statusCode <= 599


def select_5xx_count(frame: PivotedFrame) -> PivotedFrame:
    keep = [c for c in frame.columns if is_5xx_count(c)]
    if not keep:
        raise ConfigError("frame has no 5XX count columns")
    return frame.select(keep)


def seasonality(intervals: np.ndarray) -> np.ndarray:
    """Daily and weekly sin/cos phases, shape ``(n, 4)``; the week starts Monday 00:00 UTC."""
    t = np.asarray(intervals, dtype=np.int64)
    day = 2 * np.pi * np.mod(t, DAY) / DAY
    week = 2 * np.pi * np.mod(t - WEEK_ANCHOR, WEEK) / WEEK
    return np.column_stack([np.sin(day), np.cos(day), np.sin(week), np.cos(week)])


def add_seasonality(matrix: FeatureMatrix) -> FeatureMatrix:
    if not len(matrix):
        raise ConfigError("cannot add seasonality to an empty interval axis")
    return FeatureMatrix(
        matrix.intervals,
        [*matrix.names, *SEASONALITY_FEATURES],
        np.hstack([matrix.values, seasonality(matrix.intervals)]),
    )


@dataclass(frozen=True)
class SplitSpec:
    """Half-open ``[start, end)`` interval ranges for training and testing."""

    train: tuple[int, int]
    test: tuple[int, int]
    anomaly_buffer_minutes: float = 0.0

    def __post_init__(self) -> None:
        (a, b), (c, d) = self.train, self.test
        if not (a < b and c < d):
            raise ConfigError("split ranges must be non-empty")
        if a < d and c < b:
            raise ConfigError("train and test ranges overlap")
        if self.anomaly_buffer_minutes < 0:
            raise ConfigError("anomaly_buffer_minutes must be >= 0")


def excluded_by_buffer(intervals: np.ndarray, windows: Sequence[AnomalyWindow], buffer_minutes: float) -> np.ndarray:
    """Rows inside any window widened by ``buffer_minutes`` on both sides."""
    pad = int(round(buffer_minutes * 60))
    out = np.zeros(intervals.size, dtype=bool)
    for w in windows:
        out |= (intervals >= w.start - pad) & (intervals < w.end + pad)
    return out


def split(data, spec: SplitSpec, windows: Sequence[AnomalyWindow] = ()):
    """Partition rows of a frame or matrix into (train, test).

    With a positive buffer, training rows falling in a buffered anomaly
    window are dropped. Without a buffer the split is a pure range split.
    """
    t = data.intervals
    train = (t >= spec.train[0]) & (t < spec.train[1])
    test = (t >= spec.test[0]) & (t < spec.test[1])
    if spec.anomaly_buffer_minutes > 0:
        train &= ~excluded_by_buffer(t, windows, spec.anomaly_buffer_minutes)
    if not train.any():
        raise ConfigError("training split is empty")
    return data.take_rows(train), data.take_rows(test)


@dataclass
class MinMaxScaler:
    names: list[str]
    mins: np.ndarray
    maxs: np.ndarray

    def align(self, matrix: FeatureMatrix) -> FeatureMatrix:
        """Reorder to the training feature list.

        Unknown columns are dropped; missing training columns become null
        (and so 0 after imputation).
        """
        if matrix.names == self.names:
            return matrix
        index = {n: i for i, n in enumerate(matrix.names)}
        vals = np.full((len(matrix), len(self.names)), np.nan)
        for j, name in enumerate(self.names):
            i = index.get(name)
            if i is not None:
                vals[:, j] = matrix.values[:, i]
        return FeatureMatrix(matrix.intervals, list(self.names), vals)

    def save(self, path: str | Path) -> None:
        payload = {
            "version": SCALER_VERSION,
            "features": [
                {"name": n, "min": float(lo), "max": float(hi)}
                for n, lo, hi in zip(self.names, self.mins, self.maxs)
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MinMaxScaler":
        payload = json.loads(Path(path).read_text())
        if payload.get("version") != SCALER_VERSION:
            raise ParseError(f"{path}: unsupported scaler version {payload.get('version')}")
        feats = payload["features"]
        return cls(
            [f["name"] for f in feats],
            np.array([f["min"] for f in feats], dtype=np.float64),
            np.array([f["max"] for f in feats], dtype=np.float64),
        )


def impute(values: np.ndarray) -> np.ndarray:
    return np.where(np.isnan(values), 0.0, values)


def fit_scaler(train: FeatureMatrix) -> MinMaxScaler:
    if not len(train):
        raise ConfigError("cannot fit a scaler on an empty training matrix")
    x = impute(train.values)
    return MinMaxScaler(list(train.names), x.min(axis=0), x.max(axis=0))


def apply_scaler(scaler: MinMaxScaler, matrix: FeatureMatrix) -> FeatureMatrix:
    """``(x - min) / (max - min)`` per feature; constant features map to 0; no clipping."""
    m = scaler.align(matrix)
    x = impute(m.values)
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - scaler.mins) / safe, 0.0)
    return FeatureMatrix(m.intervals, list(m.names), out)


def build_inputs(frame: PivotedFrame) -> FeatureMatrix:
    """5XX count selection plus seasonality (unscaled, nulls kept)."""
    return add_seasonality(FeatureMatrix.from_frame(select_5xx_count(frame)))


def sum_5xx(frame: PivotedFrame) -> np.ndarray:
    """Per-interval total of the 5XX count columns, nulls as 0."""
    sel = [c for c in frame.columns if is_5xx_count(c)]
    if not sel:
        return np.zeros(frame.intervals.size)
    return impute(frame.select(sel).values).sum(axis=1)


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not x.size:
        return x
    lo, hi = x.min(), x.max()
    return np.zeros_like(x) if hi == lo else (x - lo) / (hi - lo)
