"""Columnar batches of span records and the newline-delimited record file.

One record per line::

    timestamp,location,kind,host,method,statusCode,endpoint,response_time
    2024-01-29 00:03:17+0000,datacenter1,CLIENT,component1,GET,200,endpoint1,41.93
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from lcsbench.core import ISO_FORMAT, KINDS, SeriesKey, TelemetryRecord
from lcsbench.errors import MalformedInputError

log = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "timestamp",
    "location",
    "kind",
    "host",
    "method",
    "statusCode",
    "endpoint",
    "response_time",
]
STRING_FIELDS = ["location", "kind", "host", "method", "endpoint"]


@dataclass
class RecordBatch:
    """Records held column-wise; ``timestamp`` is integer epoch seconds."""

    df: pd.DataFrame
    malformed: int = 0

    def __len__(self) -> int:
        return len(self.df)

    def __iter__(self) -> Iterator[TelemetryRecord]:
        cols = [self.df[c].to_numpy() for c in RECORD_COLUMNS]
        for ts, loc, kind, host, method, code, ep, rt in zip(*cols):
            key = SeriesKey(str(loc), str(kind), str(host), str(method), int(code), str(ep))
            yield TelemetryRecord(int(ts), key, float(rt))

    @classmethod
    def from_records(cls, records: Iterable[TelemetryRecord]) -> "RecordBatch":
        rows = [
            (
                r.timestamp,
                r.key.location,
                r.key.kind,
                r.key.host,
                r.key.method,
                r.key.statusCode,
                r.key.endpoint,
                r.response_time,
            )
            for r in records
        ]
        df = pd.DataFrame(rows, columns=RECORD_COLUMNS)
        return cls(_normalize_dtypes(df))


def _normalize_dtypes(df: pd.DataFrame) -> pd.DataFrame:
    df = df.astype({"timestamp": np.int64, "statusCode": np.int64, "response_time": np.float64})
    for c in STRING_FIELDS:
        df[c] = df[c].astype(str)
    return df.reset_index(drop=True)


def format_timestamps(epochs: np.ndarray) -> np.ndarray:
    """Vectorized UTC rendering in the file-boundary ISO format."""
    text = np.datetime_as_string(np.asarray(epochs, dtype="datetime64[s]"), unit="s")
    return np.char.add(np.char.replace(text, "T", " "), "+0000")


def write_records(batch: RecordBatch, path: str | Path) -> None:
    out = batch.df.copy()
    out["timestamp"] = format_timestamps(out["timestamp"].to_numpy())
    out.to_csv(path, index=False, columns=RECORD_COLUMNS, lineterminator="\n", float_format=None)


def _count_data_lines(path: Path) -> int:
    n = 0
    last = b"\n"
    with open(path, "rb") as fh:
        while chunk := fh.read(1 << 22):
            n += chunk.count(b"\n")
            last = chunk[-1:]
    if last != b"\n":
        n += 1
    return max(n - 1, 0)


def read_records(
    path: str | Path,
    on_malformed: str = "skip",
    max_malformed_fraction: float = 0.01,
) -> RecordBatch:
    """Load a record file, skipping and counting malformed lines.

    With ``on_malformed="fail"`` the first malformed line raises. With
    ``"skip"`` the load fails only when the malformed share exceeds
    ``max_malformed_fraction``.
    """
    path = Path(path)
    if on_malformed not in ("skip", "fail"):
        raise ValueError("on_malformed must be 'skip' or 'fail'")
    total = _count_data_lines(path)
    df = pd.read_csv(
        path,
        dtype=str,
        keep_default_na=False,
        on_bad_lines="skip",
        engine="c",
    )
    if list(df.columns) != RECORD_COLUMNS:
        raise MalformedInputError(f"{path}: header {list(df.columns)} != {RECORD_COLUMNS}")
    skipped_lines = total - len(df)

    ts = pd.to_datetime(df["timestamp"], format=ISO_FORMAT, utc=True, errors="coerce")
    code = pd.to_numeric(df["statusCode"], errors="coerce")
    rt = pd.to_numeric(df["response_time"], errors="coerce")
    ok = ts.notna() & code.notna() & rt.notna()
    ok &= np.isfinite(rt.fillna(-1.0)) & (rt.fillna(-1.0) >= 0)
    codes = code.fillna(0).to_numpy()
    ok &= (codes == np.round(codes)) & ((codes == -1) | ((codes >= 100) & (codes <= 599)))
    ok &= df["kind"].isin(KINDS)
    for c in ("location", "host", "method", "endpoint"):
        col = df[c]
        ok &= (col.str.len() > 0) & ~col.str.contains("_", regex=False) & (col.str.strip() == col)

    bad = skipped_lines + int((~ok).sum())
    if bad and on_malformed == "fail":
        raise MalformedInputError(f"{path}: {bad} malformed record line(s)")
    if total and bad / total > max_malformed_fraction:
        raise MalformedInputError(
            f"{path}: {bad}/{total} malformed lines exceeds threshold {max_malformed_fraction}"
        )
    if bad:
        log.warning("%s: skipped %d malformed record line(s)", path, bad)

    df = df[ok.to_numpy()].copy()
    df["timestamp"] = ts[ok].astype("int64").to_numpy() // 10**9
    df["statusCode"] = code[ok].astype(np.int64).to_numpy()
    # to_numeric is not round-trip exact; reparse accepted values with strtod
    df["response_time"] = df["response_time"].to_numpy(dtype=str).astype(np.float64)
    return RecordBatch(_normalize_dtypes(df), malformed=bad)
