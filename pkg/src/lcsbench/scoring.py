"""Detection scoring against ground-truth anomaly windows.

A point is positive ground truth iff its interval start lies in some window
``[start, end)``. The window score rewards the first in-window detection at
relative position ``p`` with ``tp_weight * w(p)``, ``w(p) = 1/(1+exp(10p-5))``,
charges ``fn_weight`` per missed window and ``fp_weight * g`` per detection
outside all windows. ``g`` ramps from ~0 to 1 over the first window-length
of points after a window ends and is 1 elsewhere.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from lcsbench.errors import ConfigError
from lcsbench.groundtruth import (
    SOURCES,
    AnomalyWindow,
    DowntimeEvent,
    GroundTruth,
    load_downtimes,
    load_ground_truth,
    load_windows,
)

__all__ = [
    "AnomalyWindow",
    "CostProfile",
    "DowntimeEvent",
    "GroundTruth",
    "PROFILES",
    "ScoreReport",
    "fp_grace",
    "load_downtimes",
    "load_ground_truth",
    "load_windows",
    "nab_score",
    "per_source_counts",
    "point_confusion",
    "score",
    "window_weight",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostProfile:
    name: str
    tp_weight: float
    fn_weight: float
    fp_weight: float
    tn_weight: float

    def __post_init__(self) -> None:
        ws = (self.tp_weight, self.fn_weight, self.fp_weight, self.tn_weight)
        if any(w < 0 for w in ws):
            raise ConfigError(f"profile {self.name}: weights must be non-negative")
        if all(w == 0 for w in ws):
            raise ConfigError(f"profile {self.name}: all weights zero")


STANDARD = CostProfile("standard", 1.0, 1.0, 0.11, 1.0)
REWARD_LOW_FN = CostProfile("reward_low_fn", 1.0, 2.0, 0.11, 1.0)
PROFILES = {p.name: p for p in (STANDARD, REWARD_LOW_FN)}


def window_weight(p: float) -> float:
    """Reward for a first detection at relative window position ``p`` in [0, 1]."""
    return 1.0 / (1.0 + math.exp(10.0 * p - 5.0))


def fp_grace(distance: int, window_len: int) -> float:
    """Fraction of the FP penalty at ``distance`` points after a window of ``window_len`` points."""
    if window_len <= 0 or distance > window_len:
        return 1.0
    return 1.0 / (1.0 + math.exp(5.0 - 10.0 * distance / window_len))


@dataclass(frozen=True)
class _Span:
    """A window projected onto the evaluation axis: points ``[first, stop)``."""

    first: int
    stop: int
    windows: tuple[AnomalyWindow, ...]

    @property
    def length(self) -> int:
        return self.stop - self.first


def _as_axis(axis: np.ndarray | None, n: int) -> np.ndarray:
    if axis is None:
        return np.arange(n, dtype=np.int64)
    axis = np.asarray(axis, dtype=np.int64)
    if axis.size != n:
        raise ValueError(f"flags ({n}) and axis ({axis.size}) are misaligned")
    if axis.size > 1 and (np.diff(axis) <= 0).any():
        raise ValueError("axis must be strictly increasing")
    return axis


def merge_windows(windows: Sequence[AnomalyWindow]) -> list[list[AnomalyWindow]]:
    """Group overlapping windows; each group scores as one window."""
    groups: list[list[AnomalyWindow]] = []
    end = None
    for w in sorted(windows, key=lambda w: (w.start, w.end)):
        if groups and w.start < end:
            log.warning("anomaly window %d overlaps window %d; merging", w.number, groups[-1][0].number)
            groups[-1].append(w)
            end = max(end, w.end)
        else:
            groups.append([w])
            end = w.end
    return groups


def _spans(axis: np.ndarray, windows: Sequence[AnomalyWindow]) -> list[_Span]:
    spans = []
    for group in merge_windows(windows):
        start = min(w.start for w in group)
        end = max(w.end for w in group)
        first = int(np.searchsorted(axis, start, side="left"))
        stop = int(np.searchsorted(axis, end, side="left"))
        if stop > first:
            spans.append(_Span(first, stop, tuple(group)))
    return spans


def truth_mask(axis: np.ndarray, windows: Sequence[AnomalyWindow]) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.int64)
    out = np.zeros(axis.size, dtype=bool)
    for w in windows:
        out |= (axis >= w.start) & (axis < w.end)
    return out


def point_confusion(flags, windows: Sequence[AnomalyWindow], axis=None) -> tuple[int, int, int, int]:
    """Pointwise (TP, TN, FP, FN)."""
    flags = np.asarray(flags, dtype=bool)
    truth = truth_mask(_as_axis(axis, flags.size), windows)
    tp = int((flags & truth).sum())
    fp = int((flags & ~truth).sum())
    fn = int((~flags & truth).sum())
    tn = int((~flags & ~truth).sum())
    return tp, tn, fp, fn


@dataclass
class WindowOutcome:
    numbers: list[int]
    first_detection: int | None  # offset into the window, in points
    position: float | None
    length: int


def _score_raw(flags: np.ndarray, spans: list[_Span], profile: CostProfile) -> tuple[float, list[WindowOutcome]]:
    raw = 0.0
    outcomes = []
    for s in spans:
        hits = np.flatnonzero(flags[s.first : s.stop])
        if hits.size:
            p = hits[0] / s.length
            raw += profile.tp_weight * window_weight(p)
            outcomes.append(WindowOutcome([w.number for w in s.windows], int(hits[0]), float(p), s.length))
        else:
            raw -= profile.fn_weight
            outcomes.append(WindowOutcome([w.number for w in s.windows], None, None, s.length))
    inside = np.zeros(flags.size, dtype=bool)
    for s in spans:
        inside[s.first : s.stop] = True
    starts = np.array([s.first for s in spans], dtype=np.int64)
    for i in np.flatnonzero(flags & ~inside):
        k = int(np.searchsorted(starts, i, side="right")) - 1
        g = 1.0
        if k >= 0:
            prev = spans[k]
            g = fp_grace(int(i - (prev.stop - 1)), prev.length)
        raw -= profile.fp_weight * g
    return raw, outcomes


def _anchor(spans: list[_Span], profile: CostProfile, perfect: bool) -> float:
    raw = 0.0
    for _ in spans:
        raw += profile.tp_weight * window_weight(0.0) if perfect else -profile.fn_weight
    return raw


def nab_score(flags, windows: Sequence[AnomalyWindow], profile: CostProfile, axis=None) -> tuple[float, float]:
    """Raw and normalized window score.

    Normalized is ``100 * (raw - null) / (perfect - null)``: 0 for a detector
    that never fires, 100 for one firing exactly at each window start.
    Windows with no point on the axis are ignored. NaN when the anchors
    coincide (no scorable window).
    """
    (raw, normalized), _ = _nab(flags, windows, profile, axis)
    return raw, normalized


def _nab(flags, windows, profile, axis):
    flags = np.asarray(flags, dtype=bool)
    spans = _spans(_as_axis(axis, flags.size), windows)
    raw, outcomes = _score_raw(flags, spans, profile)
    null = _anchor(spans, profile, perfect=False)
    perfect = _anchor(spans, profile, perfect=True)
    if perfect == null:
        return (raw, math.nan), outcomes
    # ratio first so that both anchors come out exact
    return (raw, 100.0 * ((raw - null) / (perfect - null))), outcomes


def per_source_counts(flags, windows: Sequence[AnomalyWindow], axis=None) -> dict[int, tuple[int, int]]:
    """Per anomaly source: (windows with >= 1 in-window flag, windows on the axis)."""
    flags = np.asarray(flags, dtype=bool)
    axis = _as_axis(axis, flags.size)
    out = {s: [0, 0] for s in SOURCES}
    for w in windows:
        if w.source not in SOURCES:
            raise ValueError(f"unknown anomaly source {w.source}")
        inside = (axis >= w.start) & (axis < w.end)
        if not inside.any():
            continue
        out[w.source][1] += 1
        out[w.source][0] += int((flags & inside).any())
    return {s: (d, t) for s, (d, t) in out.items()}


@dataclass
class ScoreReport:
    tp: int
    tn: int
    fp: int
    fn: int
    nab: dict[str, dict[str, float]]
    per_source: dict[str, dict[str, int]]
    windows: list[dict] = field(default_factory=list)
    downtime_overlaps: dict[str, list[str]] = field(default_factory=dict)

    @property
    def detected_windows(self) -> int:
        return sum(1 for w in self.windows if w["first_detection"] is not None)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def flat_row(self) -> dict[str, float | int]:
        row: dict[str, float | int] = {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}
        for name, v in self.nab.items():
            row[f"nab_{name}_raw"] = v["raw"]
            row[f"nab_{name}"] = v["normalized"]
        for src, v in self.per_source.items():
            row[f"detected_{src}"] = v["detected"]
            row[f"total_{src}"] = v["total"]
        row["detected_windows"] = self.detected_windows
        row["total_windows"] = len(self.windows)
        return row

    def save(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.to_json())
        if csv_path is not None:
            row = self.flat_row()
            Path(csv_path).write_text(",".join(row) + "\n" + ",".join(_fmt(v) for v in row.values()) + "\n")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _source_key(source: int) -> str:
    return SOURCES[source].lower().replace(" ", "_")


def score(
    flags,
    windows: Sequence[AnomalyWindow],
    axis=None,
    profiles: Sequence[CostProfile] = (STANDARD, REWARD_LOW_FN),
    downtimes: Sequence[DowntimeEvent] = (),
) -> ScoreReport:
    flags = np.asarray(flags, dtype=bool)
    axis = _as_axis(axis, flags.size)
    tp, tn, fp, fn = point_confusion(flags, windows, axis)
    nab = {}
    outcomes: list[WindowOutcome] = []
    for prof in profiles:
        (raw, norm), outcomes = _nab(flags, windows, prof, axis)
        nab[prof.name] = {"raw": raw, "normalized": norm}
    per_source = {
        _source_key(s): {"detected": d, "total": t} for s, (d, t) in per_source_counts(flags, windows, axis).items()
    }
    overlaps: dict[str, list[str]] = {}
    for w in windows:
        hit = [d.location for d in downtimes if d.start < w.end and w.start < d.end]
        if hit:
            overlaps[str(w.number)] = hit
    return ScoreReport(
        tp,
        tn,
        fp,
        fn,
        nab,
        per_source,
        windows=[asdict(o) for o in outcomes],
        downtime_overlaps=overlaps,
    )
