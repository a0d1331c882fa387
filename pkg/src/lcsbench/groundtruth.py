"""Ground-truth anomaly windows and location downtime, plus their CSV files.

``anomaly_windows.csv``::

    number,anomaly_start,anomaly_end,anomaly_source
    1,2024-02-02 10:22:00-0500,2024-02-02 11:00:00-0500,1

``location_downtime.csv``::

    location,downtime_start,downtime_end
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from lcsbench.core import format_iso, parse_iso
from lcsbench.errors import MissingInputError, ParseError

SOURCES = {1: "Issue Tracker", 2: "Instant Messenger", 3: "Test Log"}

WINDOW_HEADER = ["number", "anomaly_start", "anomaly_end", "anomaly_source"]
DOWNTIME_HEADER = ["location", "downtime_start", "downtime_end"]
WINDOWS_FILE = "anomaly_windows.csv"
DOWNTIME_FILE = "location_downtime.csv"


@dataclass(frozen=True)
class AnomalyWindow:
    number: int
    start: int
    end: int
    source: int
    # seconds east of UTC used when writing the timestamps back out
    utc_offset: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError(f"window {self.number}: start {self.start} >= end {self.end}")
        if self.source not in SOURCES:
            raise ValueError(f"window {self.number}: unknown anomaly source {self.source}")

    @property
    def source_name(self) -> str:
        return SOURCES[self.source]

    def contains(self, t: int) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class DowntimeEvent:
    location: str
    start: int
    end: int
    utc_offset: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError(f"downtime {self.location}: start >= end")


@dataclass
class GroundTruth:
    windows: list[AnomalyWindow] = field(default_factory=list)
    downtimes: list[DowntimeEvent] = field(default_factory=list)


def _paths(paths) -> tuple[Path, Path]:
    if isinstance(paths, (str, Path)):
        d = Path(paths)
        return d / WINDOWS_FILE, d / DOWNTIME_FILE
    w, d = paths
    return Path(w), Path(d)


def write_ground_truth(gt: GroundTruth, paths) -> tuple[Path, Path]:
    """Write both files; ``paths`` is a directory or a (windows, downtime) pair."""
    wpath, dpath = _paths(paths)
    wpath.parent.mkdir(parents=True, exist_ok=True)
    dpath.parent.mkdir(parents=True, exist_ok=True)
    with open(wpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WINDOW_HEADER)
        for win in gt.windows:
            w.writerow(
                [
                    win.number,
                    format_iso(win.start, win.utc_offset),
                    format_iso(win.end, win.utc_offset),
                    win.source,
                ]
            )
    with open(dpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DOWNTIME_HEADER)
        for ev in gt.downtimes:
            w.writerow([ev.location, format_iso(ev.start, ev.utc_offset), format_iso(ev.end, ev.utc_offset)])
    return wpath, dpath


def _read_rows(path: Path, header: list[str]) -> list[list[str]]:
    if not path.exists():
        raise MissingInputError(f"ground-truth file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise ParseError(f"{path}: header must be {','.join(header)}")
    return [r for r in rows[1:] if r]


def load_windows(path: str | Path) -> list[AnomalyWindow]:
    path = Path(path)
    out = []
    for lineno, row in enumerate(_read_rows(path, WINDOW_HEADER), start=2):
        if len(row) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 fields")
        try:
            start, off = parse_iso(row[1])
            end, _ = parse_iso(row[2])
            out.append(AnomalyWindow(int(row[0]), start, end, int(row[3]), utc_offset=off))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    numbers = [w.number for w in out]
    if len(set(numbers)) != len(numbers):
        raise ParseError(f"{path}: duplicate anomaly numbers")
    return sorted(out, key=lambda w: (w.start, w.number))


def load_downtimes(path: str | Path) -> list[DowntimeEvent]:
    path = Path(path)
    out = []
    for lineno, row in enumerate(_read_rows(path, DOWNTIME_HEADER), start=2):
        if len(row) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 fields")
        try:
            start, off = parse_iso(row[1])
            end, _ = parse_iso(row[2])
            out.append(DowntimeEvent(row[0], start, end, utc_offset=off))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return sorted(out, key=lambda d: (d.start, d.location))


def load_ground_truth(paths) -> GroundTruth:
    wpath, dpath = _paths(paths)
    return GroundTruth(load_windows(wpath), load_downtimes(dpath))
