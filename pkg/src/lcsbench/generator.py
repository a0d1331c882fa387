"""Deterministic synthetic span telemetry with planted anomalies.

Traffic is modelled per *route* ``(location, kind, host, method, endpoint)``;
every request on a route draws a status code, so each route feeds several
series keys. Each endpoint is owned by one host. Per interval a route gets
``Poisson(base_rate * popularity * daily * weekly * jitter)`` requests.
Response times are log-normal around a per-route median.

Every route draws from its own substream seeded by ``(seed, route)``, so the
output does not depend on generation order.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from lcsbench.core import INTERVAL_SECONDS, KINDS, SeriesKey
from lcsbench.errors import ConfigError
from lcsbench.groundtruth import AnomalyWindow, DowntimeEvent, GroundTruth, write_ground_truth
from lcsbench.records import RecordBatch

__all__ = [
    "AnomalySpec",
    "DowntimeSpec",
    "GeneratorConfig",
    "default_config",
    "expected_request_count",
    "generate",
    "write_ground_truth",
]

DAY = 86_400
WEEK = 7 * DAY
# 1970-01-05 00:00 UTC, a Monday
WEEK_ANCHOR = 4 * DAY


@dataclass(frozen=True)
class AnomalySpec:
    start: int
    end: int
    locations: tuple[str, ...]
    error_multiplier: float = 10.0
    latency_multiplier: float = 3.0
    source: int | None = None


@dataclass(frozen=True)
class DowntimeSpec:
    location: str
    start: int
    end: int


@dataclass
class GeneratorConfig:
    seed: int = 7
    start: int = 1706486400  # 2024-01-29 00:00 UTC (Monday)
    end: int = 1706486400 + 6 * WEEK
    interval_seconds: int = INTERVAL_SECONDS
    locations: int = 2
    hosts: int = 3
    endpoints: int = 10
    methods: tuple[str, ...] = ("GET", "POST", "PUT")
    kinds: tuple[str, ...] = KINDS
    base_rate: float = 2.0
    daily_amp: float = 0.5
    weekly_amp: float = 0.2
    rate_jitter: float = 0.1
    popularity_sigma: float = 0.75
    # shares of the non-5XX traffic
    status_shares: dict[int, float] = field(
        default_factory=lambda: {200: 0.88, 201: 0.04, 304: 0.04, 404: 0.04}
    )
    error_codes: tuple[int, ...] = (500, 503)
    error_rate_normal: float = 0.02
    latency_median_ms: float = 80.0
    route_latency_sigma: float = 0.5
    latency_sigma: float = 0.5
    # labelled window start precedes the injection by this much
    anomaly_lead_minutes: float = 20.0
    anomaly_specs: list[AnomalySpec] = field(default_factory=list)
    downtime_specs: list[DowntimeSpec] = field(default_factory=list)

    @property
    def location_ids(self) -> list[str]:
        return [f"datacenter{i + 1}" for i in range(self.locations)]

    @property
    def n_intervals(self) -> int:
        return len(range(self._first_interval, self.end, self.interval_seconds))

    @property
    def _first_interval(self) -> int:
        return self.start - self.start % self.interval_seconds

    def routes(self) -> list[tuple[str, str, str, str, str]]:
        out = []
        for loc in self.location_ids:
            for kind in self.kinds:
                for e in range(self.endpoints):
                    host = f"component{e % self.hosts + 1}"
                    for method in self.methods:
                        out.append((loc, kind, host, method, f"endpoint{e + 1}"))
        return out

    def validate(self) -> None:
        if not self.start < self.end:
            raise ConfigError("generator start must precede end")
        if self.start < 0:
            raise ConfigError("generator start must be non-negative")
        for name in ("locations", "hosts", "endpoints"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.methods or not self.kinds:
            raise ConfigError("methods and kinds must be non-empty")
        if any(k not in KINDS for k in self.kinds):
            raise ConfigError(f"kinds must be drawn from {KINDS}")
        if self.base_rate < 0:
            raise ConfigError("base_rate must be >= 0")
        for name in ("daily_amp", "weekly_amp", "error_rate_normal"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not self.status_shares or any(v < 0 for v in self.status_shares.values()):
            raise ConfigError("status_shares must be non-empty and non-negative")
        if sum(self.status_shares.values()) <= 0:
            raise ConfigError("status_shares must not sum to zero")
        if not self.error_codes or any(not 500 <= c <= 599 for c in self.error_codes):
            raise ConfigError("error_codes must be non-empty 5XX codes")
        if any(500 <= c <= 599 for c in self.status_shares):
            raise ConfigError("status_shares must not contain 5XX codes; use error_codes")
        for code in [*self.status_shares, *self.error_codes]:
            SeriesKey("a", "CLIENT", "b", "GET", int(code), "c")
        locs = set(self.location_ids)
        for spec in self.anomaly_specs:
            if not (self.start <= spec.start < spec.end <= self.end):
                raise ConfigError(f"anomaly {spec} outside [start, end]")
            if not set(spec.locations) <= locs:
                raise ConfigError(f"anomaly {spec} names unknown locations")
            if spec.source is not None and spec.source not in (1, 2, 3):
                raise ConfigError(f"anomaly source must be 1, 2 or 3, got {spec.source}")
            if spec.error_multiplier < 0 or spec.latency_multiplier <= 0:
                raise ConfigError("anomaly multipliers must be positive")
        for spec in self.downtime_specs:
            if not (self.start <= spec.start < spec.end <= self.end):
                raise ConfigError(f"downtime {spec} outside [start, end]")
            if spec.location not in locs:
                raise ConfigError(f"downtime names unknown location {spec.location}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status_shares"] = {str(k): v for k, v in self.status_shares.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        data = dict(data)
        if "status_shares" in data:
            data["status_shares"] = {int(k): float(v) for k, v in data["status_shares"].items()}
        for name in ("methods", "kinds", "error_codes"):
            if name in data:
                data[name] = tuple(data[name])
        if "anomaly_specs" in data:
            data["anomaly_specs"] = [
                s if isinstance(s, AnomalySpec) else AnomalySpec(**{**s, "locations": tuple(s["locations"])})
                for s in data["anomaly_specs"]
            ]
        if "downtime_specs" in data:
            data["downtime_specs"] = [
                s if isinstance(s, DowntimeSpec) else DowntimeSpec(**s) for s in data["downtime_specs"]
            ]
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generator option(s): {sorted(unknown)}")
        return cls(**data)


def _utc(y, mo, d, h=0, mi=0) -> int:
    return int(datetime(y, mo, d, h, mi, tzinfo=timezone.utc).timestamp())


DESK_ERROR_MULTIPLIER = 25.0


def default_config(seed: int = 7) -> GeneratorConfig:
    """Desk-scale setup: six weeks, five planted anomalies in the last two.

    Intended split: weeks 1-4 train, weeks 5-6 test. The 5XX multiplier
    takes the error share from 2% to 50% inside each window, enough for the
    default likelihood operating point to fire on every window.
    """
    m = DESK_ERROR_MULTIPLIER
    a = [
        AnomalySpec(_utc(2024, 2, 27, 10), _utc(2024, 2, 27, 12), ("datacenter1",), m),
        AnomalySpec(_utc(2024, 2, 29, 15, 30), _utc(2024, 2, 29, 17), ("datacenter2",), m),
        AnomalySpec(_utc(2024, 3, 3, 2), _utc(2024, 3, 3, 5), ("datacenter1",), m),
        AnomalySpec(_utc(2024, 3, 6, 20), _utc(2024, 3, 6, 21, 30), ("datacenter2",), m),
        AnomalySpec(_utc(2024, 3, 9, 8), _utc(2024, 3, 9, 10), ("datacenter1", "datacenter2"), m),
    ]
    d = [
        DowntimeSpec("datacenter2", _utc(2024, 2, 7, 3), _utc(2024, 2, 7, 5)),
        DowntimeSpec("datacenter1", _utc(2024, 3, 5, 1), _utc(2024, 3, 5, 2)),
    ]
    return GeneratorConfig(seed=seed, anomaly_specs=a, downtime_specs=d)


def _route_seed(seed: int, route: tuple[str, ...]) -> np.random.SeedSequence:
    tag = zlib.crc32("/".join(route).encode())
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag])


def seasonal_factor(t: np.ndarray, daily_amp: float, weekly_amp: float) -> np.ndarray:
    """Traffic multiplier with a 15:00 UTC daily peak and a mid-week weekly peak."""
    sod = np.mod(t, DAY)
    sow = np.mod(t - WEEK_ANCHOR, WEEK)
    daily = 1.0 + daily_amp * np.cos(2 * np.pi * (sod - 15 * 3600) / DAY)
    weekly = 1.0 + weekly_amp * np.cos(2 * np.pi * (sow - 2.5 * DAY) / WEEK)
    return daily * weekly


def _popularity(cfg: GeneratorConfig, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0]))
    w = rng.lognormal(0.0, cfg.popularity_sigma, size=n)
    return w / w.mean()


def expected_request_count(cfg: GeneratorConfig) -> float:
    """``base_rate * routes * intervals``, the volume the generator targets."""
    return cfg.base_rate * len(cfg.routes()) * cfg.n_intervals


def generate(cfg: GeneratorConfig) -> tuple[RecordBatch, GroundTruth]:
    cfg.validate()
    grid = np.arange(cfg._first_interval, cfg.end, cfg.interval_seconds, dtype=np.int64)
    season = seasonal_factor(grid.astype(np.float64), cfg.daily_amp, cfg.weekly_amp)
    routes = cfg.routes()
    popularity = _popularity(cfg, len(routes))

    ok_codes = np.array(sorted(cfg.status_shares), dtype=np.int64)
    ok_p = np.array([cfg.status_shares[c] for c in ok_codes], dtype=np.float64)
    ok_cdf = np.cumsum(ok_p / ok_p.sum())
    err_codes = np.array(cfg.error_codes, dtype=np.int64)

    parts = []
    for ridx, route in enumerate(routes):
        loc, kind, host, method, ep = route
        rng = np.random.default_rng(_route_seed(cfg.seed, route))
        jitter = np.exp(cfg.rate_jitter * rng.standard_normal(grid.size) - 0.5 * cfg.rate_jitter**2)
        lam = cfg.base_rate * popularity[ridx] * season * jitter
        counts = rng.poisson(lam)
        ts = np.repeat(grid, counts) + rng.integers(0, cfg.interval_seconds, size=int(counts.sum()))
        ts = np.sort(ts)
        ts = ts[(ts >= cfg.start) & (ts < cfg.end)]
        n = ts.size
        p_err = np.full(n, cfg.error_rate_normal)
        lat_mult = np.ones(n)
        for spec in cfg.anomaly_specs:
            if loc in spec.locations:
                inside = (ts >= spec.start) & (ts < spec.end)
                p_err[inside] = min(1.0, cfg.error_rate_normal * spec.error_multiplier)
                lat_mult[inside] *= spec.latency_multiplier
        u = rng.random(n)
        is_err = u < p_err
        status = np.empty(n, dtype=np.int64)
        status[is_err] = err_codes[rng.integers(0, err_codes.size, size=int(is_err.sum()))]
        pick = np.searchsorted(ok_cdf, rng.random(int((~is_err).sum())), side="right")
        status[~is_err] = ok_codes[np.minimum(pick, ok_codes.size - 1)]
        median = cfg.latency_median_ms * math.exp(cfg.route_latency_sigma * rng.standard_normal())
        rt = np.round(median * lat_mult * rng.lognormal(0.0, cfg.latency_sigma, size=n), 2)
        keep = np.ones(n, dtype=bool)
        for spec in cfg.downtime_specs:
            if spec.location == loc:
                keep &= ~((ts >= spec.start) & (ts < spec.end))
        parts.append((ridx, ts[keep], status[keep], rt[keep]))

    ridx = np.concatenate([np.full(p[1].size, p[0], dtype=np.int64) for p in parts])
    ts = np.concatenate([p[1] for p in parts])
    status = np.concatenate([p[2] for p in parts])
    rt = np.concatenate([p[3] for p in parts])
    order = np.lexsort((ridx, ts))
    ridx, ts, status, rt = ridx[order], ts[order], status[order], rt[order]
    route_arr = np.array(routes, dtype=object)
    df = pd.DataFrame(
        {
            "timestamp": ts,
            "location": route_arr[ridx, 0],
            "kind": route_arr[ridx, 1],
            "host": route_arr[ridx, 2],
            "method": route_arr[ridx, 3],
            "statusCode": status,
            "endpoint": route_arr[ridx, 4],
            "response_time": rt,
        }
    )
    return RecordBatch(df), ground_truth_of(cfg)


def ground_truth_of(cfg: GeneratorConfig) -> GroundTruth:
    lead = int(round(cfg.anomaly_lead_minutes * 60))
    windows = []
    for i, spec in enumerate(cfg.anomaly_specs):
        source = spec.source if spec.source is not None else i % 3 + 1
        windows.append(AnomalyWindow(i + 1, max(spec.start - lead, 0), spec.end, source))
    downs = [DowntimeEvent(s.location, s.start, s.end) for s in cfg.downtime_specs]
    return GroundTruth(windows, downs)
