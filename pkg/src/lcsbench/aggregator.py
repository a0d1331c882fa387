"""Interval aggregation, pivot/unpivot and masking.

Records are grouped by ``(floor_to_interval(timestamp), SeriesKey)`` over
half-open intervals and summarized by eight statistics. The result is held
either unpivoted (one row per interval/series/statistic) or pivoted (one
row per interval, one column per rendered column name).

Skewness is the bias-adjusted sample skewness ``g1 * sqrt(n(n-1)) / (n-2)``
and kurtosis the sample excess kurtosis with the ``(n-1)(n-2)(n-3)``
correction. Both are 0 for a constant sample and null below 3 and 4
points respectively; std (n-1 denominator) is null below 2 points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from lcsbench.core import (
    INTERVAL_SECONDS,
    KEY_FIELDS,
    SEPARATOR,
    STAT_ORDER,
    SeriesKey,
    StatName,
    TelemetryRecord,
    parse_column_name,
    parse_stat,
)
from lcsbench.errors import ConfigError, IntegrityError, ParseError
from lcsbench.records import RecordBatch

log = logging.getLogger(__name__)

UNPIVOTED_COLUMNS = [
    "interval_start",
    *KEY_FIELDS,
    "aggregated_stats_name",
    "aggregated_stats_value",
]
_STRING_KEY_FIELDS = ["location", "kind", "host", "method", "endpoint"]


@dataclass(frozen=True)
class AggregateStats:
    count: int
    minimum: float
    maximum: float
    median: float
    average: float
    std: float | None
    skewness: float | None
    kurtosis: float | None

    def get(self, stat: StatName) -> float | None:
        return {
            StatName.MIN: self.minimum,
            StatName.MAX: self.maximum,
            StatName.MEDIAN: self.median,
            StatName.AVERAGE: self.average,
            StatName.COUNT: self.count,
            StatName.STD: self.std,
            StatName.SKEW: self.skewness,
            StatName.KURT: self.kurtosis,
        }[stat]


def _shape_stats(n, m2, m3, m4, constant):
    """Std, skewness and kurtosis from central moment sums (arrays or scalars).

    ``m2``, ``m3``, ``m4`` are sums of powers of deviations from the mean.
    Entries are NaN where the statistic is undefined.
    """
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        std = np.where(n >= 2, np.sqrt(m2 / (n - 1)), np.nan)
        var_b = m2 / n
        g1 = (m3 / n) / var_b**1.5
        skew = g1 * np.sqrt(n * (n - 1)) / (n - 2)
        g2 = (m4 / n) / var_b**2 - 3.0
        kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    skew = np.where(constant, 0.0, skew)
    kurt = np.where(constant, 0.0, kurt)
    skew = np.where(n >= 3, skew, np.nan)
    kurt = np.where(n >= 4, kurt, np.nan)
    return std, skew, kurt


def _opt(x) -> float | None:
    x = float(x)
    return None if math.isnan(x) else x


def compute_stats(values: Iterable[float]) -> AggregateStats:
    x = np.sort(np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("compute_stats needs at least one value")
    mean = x.sum() / n
    d = x - mean
    d2 = d * d
    median = 0.5 * (x[(n - 1) // 2] + x[n // 2])
    std, skew, kurt = _shape_stats(n, d2.sum(), (d2 * d).sum(), (d2 * d2).sum(), x[0] == x[-1])
    return AggregateStats(
        count=n,
        minimum=float(x[0]),
        maximum=float(x[-1]),
        median=float(median),
        average=float(mean),
        std=_opt(std),
        skewness=_opt(skew),
        kurtosis=_opt(kurt),
    )


class UnpivotedTable:
    """Long table with the nine published columns; one row per statistic."""

    def __init__(self, df: pd.DataFrame):
        if list(df.columns) != UNPIVOTED_COLUMNS:
            raise IntegrityError(f"unpivoted columns {list(df.columns)} != {UNPIVOTED_COLUMNS}")
        self.df = df

    def __len__(self) -> int:
        return len(self.df)

    @classmethod
    def empty(cls) -> "UnpivotedTable":
        return cls(_typed_frame({c: [] for c in UNPIVOTED_COLUMNS}))

    def sorted(self) -> "UnpivotedTable":
        """Canonical order: interval_start, then rendered column name."""
        if not len(self.df):
            return self
        idx, _ = column_index(self.df)
        order = np.lexsort((idx, self.df["interval_start"].to_numpy()))
        return UnpivotedTable(self.df.iloc[order].reset_index(drop=True))

    def total_count(self) -> float:
        mask = self.df["aggregated_stats_name"] == StatName.COUNT.value
        return float(self.df.loc[mask, "aggregated_stats_value"].sum())

    def equals(self, other: "UnpivotedTable") -> bool:
        a, b = self.sorted().df, other.sorted().df
        return a.shape == b.shape and a.equals(b)


def _typed_frame(data) -> pd.DataFrame:
    df = pd.DataFrame(data, columns=UNPIVOTED_COLUMNS)
    return df.astype(
        {
            "interval_start": np.int64,
            "statusCode": np.int64,
            "aggregated_stats_value": np.float64,
            **{c: object for c in _STRING_KEY_FIELDS},
            "aggregated_stats_name": object,
        }
    )


def column_index(df: pd.DataFrame) -> tuple[np.ndarray, np.ndarray]:
    """Per-row index into the sorted array of distinct rendered column names.

    Renders each distinct column once rather than once per row.
    """
    cols = [*KEY_FIELDS, "aggregated_stats_name"]
    codes, uniques = _factorize_rows(df, cols)
    rendered = np.array(
        [SEPARATOR.join(str(v) for v in row) for row in uniques.itertuples(index=False)],
        dtype=object,
    )
    order = np.argsort(rendered, kind="stable")
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(order.size)
    return rank[codes], rendered[order]


def column_names_of(df: pd.DataFrame) -> np.ndarray:
    idx, names = column_index(df)
    return names[idx]


def _factorize_rows(df: pd.DataFrame, cols: list[str]) -> tuple[np.ndarray, pd.DataFrame]:
    """Dense codes for distinct row tuples over ``cols``, in first-appearance order."""
    combined = np.zeros(len(df), dtype=np.int64)
    radix = 1
    for c in cols:
        codes, uniq = pd.factorize(df[c], sort=False)
        radix *= max(len(uniq), 1)
        if radix >= 2**62:
            codes = df.groupby(cols, sort=False, observed=True).ngroup().to_numpy()
            break
        combined = combined * max(len(uniq), 1) + codes
    else:
        codes, _ = pd.factorize(combined, sort=False)
    codes = np.asarray(codes, dtype=np.int64)
    if not codes.size:
        return codes, df[cols].iloc[:0].reset_index(drop=True)
    # codes first appear in increasing order, so the running max steps at each first occurrence
    first_pos = np.flatnonzero(np.r_[True, np.diff(np.maximum.accumulate(codes)) > 0])
    return codes, df[cols].iloc[first_pos].reset_index(drop=True)


def _as_batch(records) -> RecordBatch:
    if isinstance(records, RecordBatch):
        return records
    if isinstance(records, pd.DataFrame):
        return RecordBatch(records)
    return RecordBatch.from_records(records)


def aggregate(
    records: RecordBatch | Iterable[TelemetryRecord],
    interval: int = INTERVAL_SECONDS,
    time_range: tuple[int, int] | None = None,
) -> UnpivotedTable:
    """Group records into intervals and expand each group into statistic rows.

    Null statistics are omitted. Output order is interval_start, then
    rendered column name. Exact sorting on (group, value) makes the result
    bit-identical under any permutation of the input.
    """
    df = _as_batch(records).df
    if time_range is not None:
        lo, hi = time_range
        df = df[(df["timestamp"] >= lo) & (df["timestamp"] < hi)]
    if not len(df):
        return UnpivotedTable.empty()

    ts = df["timestamp"].to_numpy(dtype=np.int64)
    if (ts < 0).any():
        raise ValueError("negative timestamps")
    iv = ts - ts % interval
    key_codes, keys = _factorize_rows(df, list(KEY_FIELDS))
    rendered_keys = np.array(
        [
            SeriesKey(loc, kind, host, method, int(code), ep).render()
            for loc, kind, host, method, code, ep in keys.itertuples(index=False)
        ],
        dtype=object,
    )
    nkeys = len(keys)

    # rank of every (key, stat) column name among all candidate names
    stat_tokens = [s.value for s in STAT_ORDER]
    cand = np.array([f"{k}{SEPARATOR}{s}" for k in rendered_keys for s in stat_tokens], dtype=object)
    col_rank = np.empty(cand.size, dtype=np.int64)
    col_rank[np.argsort(cand, kind="stable")] = np.arange(cand.size)
    col_rank = col_rank.reshape(nkeys, len(stat_tokens))

    iv_values, iv_inverse = np.unique(iv, return_inverse=True)
    group = iv_inverse.astype(np.int64) * nkeys + key_codes
    values = df["response_time"].to_numpy(dtype=np.float64)

    order = np.lexsort((values, group))
    g = group[order]
    v = values[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    ends = np.r_[starts[1:], g.size]
    n = ends - starts
    gid = g[starts]

    sums = np.add.reduceat(v, starts)
    mean = sums / n
    d = v - np.repeat(mean, n)
    d2 = d * d
    m2 = np.add.reduceat(d2, starts)
    m3 = np.add.reduceat(d2 * d, starts)
    m4 = np.add.reduceat(d2 * d2, starts)
    vmin = v[starts]
    vmax = v[ends - 1]
    median = 0.5 * (v[starts + (n - 1) // 2] + v[starts + n // 2])
    std, skew, kurt = _shape_stats(n, m2, m3, m4, vmin == vmax)

    by_stat = {
        StatName.MIN: vmin,
        StatName.MAX: vmax,
        StatName.MEDIAN: median,
        StatName.AVERAGE: mean,
        StatName.COUNT: n.astype(np.float64),
        StatName.STD: std,
        StatName.SKEW: skew,
        StatName.KURT: kurt,
    }
    stat_matrix = np.column_stack([by_stat[s] for s in STAT_ORDER])  # groups x 8
    grp_iv = iv_values[gid // nkeys]
    grp_key = gid % nkeys

    gi, si = np.nonzero(~np.isnan(stat_matrix))
    rank = col_rank[grp_key[gi], si]
    sort = np.lexsort((rank, grp_iv[gi]))
    gi, si = gi[sort], si[sort]

    key_rows = keys.iloc[grp_key[gi]].reset_index(drop=True)
    out = {
        "interval_start": grp_iv[gi],
        **{c: key_rows[c].to_numpy() for c in KEY_FIELDS},
        "aggregated_stats_name": np.array(stat_tokens, dtype=object)[si],
        "aggregated_stats_value": stat_matrix[gi, si],
    }
    return UnpivotedTable(_typed_frame(out))


class PivotedFrame:
    """Dense interval x column matrix; NaN marks a null cell."""

    def __init__(self, intervals: np.ndarray, columns: list[str], values: np.ndarray):
        intervals = np.asarray(intervals, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (intervals.size, len(columns)):
            raise IntegrityError(f"values shape {values.shape} != ({intervals.size}, {len(columns)})")
        if len(set(columns)) != len(columns):
            raise IntegrityError("duplicate column names")
        self.intervals = intervals
        self.columns = list(columns)
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def null_fraction(self) -> float:
        return float(np.isnan(self.values).mean()) if self.values.size else 0.0

    def select(self, columns: list[str]) -> "PivotedFrame":
        idx = [self.columns.index(c) for c in columns]
        return PivotedFrame(self.intervals, list(columns), self.values[:, idx])

    def take_rows(self, mask: np.ndarray) -> "PivotedFrame":
        return PivotedFrame(self.intervals[mask], self.columns, self.values[mask])

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.columns)
        df.insert(0, "interval_start", self.intervals)
        return df


def pivot(
    table: UnpivotedTable,
    time_range: tuple[int, int] | None = None,
    interval: int = INTERVAL_SECONDS,
) -> PivotedFrame:
    """Spread an unpivoted table into a dense-time-axis frame.

    ``time_range`` is half-open ``[start, end)``; without it the axis spans
    the first to the last interval present. Columns are sorted by name.
    """
    df = table.df
    if time_range is not None:
        lo, hi = time_range
        if lo % interval or hi < lo:
            raise ConfigError(f"range {time_range} not aligned to {interval}s intervals")
        df = df[(df["interval_start"] >= lo) & (df["interval_start"] < hi)]
        axis = np.arange(lo, hi, interval, dtype=np.int64)
        if hi % interval:
            axis = axis[axis < hi]
    elif len(df):
        iv = df["interval_start"].to_numpy()
        axis = np.arange(iv.min(), iv.max() + interval, interval, dtype=np.int64)
    else:
        axis = np.empty(0, dtype=np.int64)
    if not len(df):
        return PivotedFrame(axis, [], np.empty((axis.size, 0)))

    iv = df["interval_start"].to_numpy(dtype=np.int64)
    if ((iv - axis[0]) % interval).any():
        raise IntegrityError("interval_start values not aligned to the interval grid")
    col_idx, columns = column_index(df)
    row_idx = (iv - axis[0]) // interval
    flat = row_idx * columns.size + col_idx
    if np.unique(flat).size != flat.size:
        raise IntegrityError("duplicate (interval, key, stat) rows")
    values = np.full((axis.size, columns.size), np.nan)
    values[row_idx, col_idx] = df["aggregated_stats_value"].to_numpy(dtype=np.float64)
    return PivotedFrame(axis, [str(c) for c in columns], values)


def unpivot(frame: PivotedFrame) -> UnpivotedTable:
    if not frame.columns or not frame.intervals.size:
        return UnpivotedTable.empty()
    parsed = [parse_column_name(c) for c in frame.columns]
    order = np.argsort(np.array(frame.columns, dtype=object), kind="stable")
    vals = frame.values[:, order]
    parsed = [parsed[i] for i in order]
    ri, ci = np.nonzero(~np.isnan(vals))
    fields = {
        f: np.array([getattr(p[0], f) for p in parsed], dtype=object if f != "statusCode" else np.int64)
        for f in KEY_FIELDS
    }
    stats = np.array([p[1].value for p in parsed], dtype=object)
    out = {
        "interval_start": frame.intervals[ri],
        **{f: fields[f][ci] for f in KEY_FIELDS},
        "aggregated_stats_name": stats[ci],
        "aggregated_stats_value": vals[ri, ci],
    }
    return UnpivotedTable(_typed_frame(out))


# Obfuscated ID prefixes for auto-assigned mask values.
MASK_PREFIXES = {"location": "datacenter", "host": "component", "endpoint": "endpoint"}


def mask(
    table: UnpivotedTable,
    mapping: Mapping[str, Mapping[str, str]],
    on_unmapped: str = "assign",
) -> tuple[UnpivotedTable, dict[str, dict[str, str]]]:
    """Replace location/host/endpoint values through per-field mappings.

    Unmapped raw values get the next free ``<prefix><n>`` ID (assigned in
    sorted raw order) or raise with ``on_unmapped="fail"``. Returns the
    masked table and the completed mapping.
    """
    if on_unmapped not in ("assign", "fail"):
        raise ValueError("on_unmapped must be 'assign' or 'fail'")
    full: dict[str, dict[str, str]] = {}
    df = table.df.copy()
    for fld, prefix in MASK_PREFIXES.items():
        m = dict(mapping.get(fld, {}))
        if len(set(m.values())) != len(m):
            raise ConfigError(f"mask mapping for {fld} is not injective")
        raw = sorted(set(df[fld].unique()) - set(m))
        if raw and on_unmapped == "fail":
            raise ParseError(f"unmapped {fld} value(s): {raw[:5]}")
        used = set(m.values())
        nxt = 1
        for value in raw:
            while f"{prefix}{nxt}" in used:
                nxt += 1
            m[value] = f"{prefix}{nxt}"
            used.add(m[value])
        for obf in m.values():
            if SEPARATOR in obf:
                raise ConfigError(f"obfuscated value {obf!r} contains {SEPARATOR!r}")
        df[fld] = df[fld].map(m).astype(object)
        full[fld] = m
    return UnpivotedTable(df), full


def invert_mapping(mapping: Mapping[str, Mapping[str, str]]) -> dict[str, dict[str, str]]:
    return {f: {v: k for k, v in m.items()} for f, m in mapping.items()}


# --- CSV serialization -------------------------------------------------------


def write_unpivoted(table: UnpivotedTable, path: str | Path) -> None:
    df = table.df.copy()
    vals = df["aggregated_stats_value"].to_numpy()
    text = vals.astype(str).astype(object)
    is_count = (df["aggregated_stats_name"] == StatName.COUNT.value).to_numpy()
    text[is_count] = vals[is_count].astype(np.int64).astype(str)
    df["aggregated_stats_value"] = text
    df.to_csv(path, index=False, lineterminator="\n")


def read_unpivoted(path: str | Path) -> UnpivotedTable:
    df = pd.read_csv(path, dtype={c: str for c in _STRING_KEY_FIELDS + ["aggregated_stats_name"]},
                     keep_default_na=False, float_precision="round_trip")
    if list(df.columns) != UNPIVOTED_COLUMNS:
        raise ParseError(f"{path}: header {list(df.columns)} != {UNPIVOTED_COLUMNS}")
    names = df["aggregated_stats_name"]
    canon = {t: parse_stat(t).value for t in names.unique()}
    df["aggregated_stats_name"] = names.map(canon)
    if not len(df):
        return UnpivotedTable.empty()
    return UnpivotedTable(_typed_frame(df))


def write_pivoted(frame: PivotedFrame, path: str | Path) -> None:
    frame.to_dataframe().to_csv(path, index=False, lineterminator="\n")


def read_pivoted(path: str | Path, columns=None) -> PivotedFrame:
    """Load a pivoted CSV; ``columns`` optionally filters column names (callable)."""
    usecols = None
    if columns is not None:
        usecols = lambda c: c == "interval_start" or columns(c)  # noqa: E731
    df = pd.read_csv(path, usecols=usecols, float_precision="round_trip")
    if "interval_start" not in df.columns or df.columns[0] != "interval_start":
        raise ParseError(f"{path}: first column must be interval_start")
    cols = [c for c in df.columns if c != "interval_start"]
    for c in cols:
        parse_column_name(c)
    return PivotedFrame(df["interval_start"].to_numpy(np.int64), cols, df[cols].to_numpy(np.float64))
