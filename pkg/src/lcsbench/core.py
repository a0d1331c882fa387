"""Domain types, the column-name grammar and timestamp handling.

Column names follow the pivoted-dataset template::

    {location}_{kind}_{host}_{method}_{statusCode}_{endpoint}_{stat}

e.g. ``datacenter1_CLIENT_component10_GET_200_endpoint865_count``.
Key fields may not contain the ``_`` separator; keys that do are rejected
rather than escaped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from lcsbench.errors import GrammarError, ParseError

SEPARATOR = "_"
INTERVAL_SECONDS = 300
KINDS = ("CLIENT", "SERVER")
NON_HTTP_STATUS = -1

KEY_FIELDS = ("location", "kind", "host", "method", "statusCode", "endpoint")


class StatName(str, enum.Enum):
    """The eight per-interval aggregates; values are the canonical tokens."""

    MIN = "min"
    MAX = "max"
    MEDIAN = "median"
    AVERAGE = "average"
    COUNT = "count"
    STD = "std"
    SKEW = "skew"
    KURT = "kurt"

    def __str__(self) -> str:
        return self.value


# Accepted spellings when reading third-party files. Rendering always uses
# the canonical token.
STAT_ALIASES: dict[str, StatName] = {
    "min": StatName.MIN,
    "minimum": StatName.MIN,
    "max": StatName.MAX,
    "maximum": StatName.MAX,
    "median": StatName.MEDIAN,
    "p50": StatName.MEDIAN,
    "average": StatName.AVERAGE,
    "avg": StatName.AVERAGE,
    "mean": StatName.AVERAGE,
    "count": StatName.COUNT,
    "cnt": StatName.COUNT,
    "std": StatName.STD,
    "stddev": StatName.STD,
    "stdev": StatName.STD,
    "standard_deviation": StatName.STD,
    "skew": StatName.SKEW,
    "skewness": StatName.SKEW,
    "kurt": StatName.KURT,
    "kurtosis": StatName.KURT,
}

STAT_ORDER: tuple[StatName, ...] = tuple(StatName)


def parse_stat(token: str) -> StatName:
    try:
        return STAT_ALIASES[token.strip().lower()]
    except KeyError:
        raise GrammarError(f"unknown statistic token {token!r}") from None


def _check_field(name: str, value: str) -> None:
    if not isinstance(value, str) or not value:
        raise GrammarError(f"{name} must be a non-empty string, got {value!r}")
    if SEPARATOR in value:
        raise GrammarError(f"{name} {value!r} contains the separator {SEPARATOR!r}")
    if value != value.strip() or "," in value or "\n" in value:
        raise GrammarError(f"{name} {value!r} contains whitespace or a delimiter")


def valid_status(code: int) -> bool:
    return code == NON_HTTP_STATUS or 100 <= code <= 599


@dataclass(frozen=True, order=True)
class SeriesKey:
    """Identity of one telemetry series (everything but the statistic)."""

    location: str
    kind: str
    host: str
    method: str
    statusCode: int
    endpoint: str

    def __post_init__(self) -> None:
        for name in ("location", "host", "method", "endpoint"):
            _check_field(name, getattr(self, name))
        if self.kind not in KINDS:
            raise GrammarError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if isinstance(self.statusCode, bool) or not isinstance(self.statusCode, int):
            raise GrammarError(f"statusCode must be an int, got {self.statusCode!r}")
        if not valid_status(self.statusCode):
            raise GrammarError(f"statusCode {self.statusCode} outside {{-1}} and [100, 599]")

    def render(self) -> str:
        return SEPARATOR.join(
            (self.location, self.kind, self.host, self.method, str(self.statusCode), self.endpoint)
        )

    @property
    def is_5xx(self) -> bool:
        return 500 <= self.statusCode <= 599


@dataclass(frozen=True)
class ColumnName:
    key: SeriesKey
    stat: StatName

    @property
    def rendered(self) -> str:
        return render_column_name(self.key, self.stat)

    @classmethod
    def parse(cls, text: str) -> "ColumnName":
        return cls(*parse_column_name(text))

    def __str__(self) -> str:
        return self.rendered


@dataclass(frozen=True)
class TelemetryRecord:
    """One span observation."""

    timestamp: int
    key: SeriesKey
    response_time: float

    def __post_init__(self) -> None:
        if not self.response_time >= 0.0:
            raise ValueError(f"response_time must be >= 0, got {self.response_time}")


def render_column_name(key: SeriesKey, stat: StatName | str) -> str:
    stat = stat if isinstance(stat, StatName) else parse_stat(stat)
    return f"{key.render()}{SEPARATOR}{stat.value}"


def parse_column_name(text: str) -> tuple[SeriesKey, StatName]:
    parts = text.split(SEPARATOR)
    if len(parts) != 7:
        raise GrammarError(f"expected 7 '{SEPARATOR}'-separated segments in {text!r}, got {len(parts)}")
    location, kind, host, method, status, endpoint, stat = parts
    try:
        code = int(status)
    except ValueError:
        raise GrammarError(f"non-integer statusCode {status!r} in {text!r}") from None
    if str(code) != status:
        raise GrammarError(f"non-canonical statusCode {status!r} in {text!r}")
    return SeriesKey(location, kind, host, method, code, endpoint), parse_stat(stat)


def floor_to_interval(timestamp: int, interval: int = INTERVAL_SECONDS) -> int:
    """Start of the half-open interval ``[t, t + interval)`` containing ``timestamp``."""
    if timestamp < 0:
        raise ValueError("timestamp must be non-negative")
    timestamp = int(timestamp)
    return timestamp - timestamp % interval


# Timestamps at file boundaries, e.g. "2024-02-02 10:22:00-0500".
ISO_FORMAT = "%Y-%m-%d %H:%M:%S%z"


def format_iso(epoch: int, utc_offset: int = 0) -> str:
    """Render epoch seconds in ISO 8601 with a numeric offset (seconds east of UTC)."""
    tz = timezone(timedelta(seconds=utc_offset))
    return datetime.fromtimestamp(int(epoch), tz).strftime(ISO_FORMAT)


def parse_iso(text: str) -> tuple[int, int]:
    """Parse an ISO 8601 timestamp with a numeric offset.

    Returns ``(epoch_seconds, utc_offset_seconds)``. ``T`` separators,
    ``+HH:MM`` offsets and a trailing ``Z`` are accepted as well.
    """
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+0000"
    raw = raw.replace("T", " ", 1)
    for fmt in (ISO_FORMAT, "%Y-%m-%d %H:%M:%S.%f%z"):
        try:
            dt = datetime.strptime(raw, fmt)
            break
        except ValueError:
            continue
    else:
        raise ParseError(f"bad ISO 8601 timestamp {text!r}")
    if dt.tzinfo is None:
        raise ParseError(f"timestamp {text!r} lacks a UTC offset")
    offset = dt.utcoffset()
    return int(dt.timestamp()), int(offset.total_seconds())

