import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcsbench.core import (
    KINDS,
    ColumnName,
    SeriesKey,
    StatName,
    TelemetryRecord,
    floor_to_interval,
    format_iso,
    parse_column_name,
    parse_iso,
    parse_stat,
    render_column_name,
)
from lcsbench.errors import GrammarError

FIELD = st.text(alphabet=string.ascii_letters + string.digits + "-.:/", min_size=1, max_size=12)
STATUS = st.one_of(st.just(-1), st.integers(100, 599))


@st.composite
def series_keys(draw):
    return SeriesKey(draw(FIELD), draw(st.sampled_from(KINDS)), draw(FIELD), draw(FIELD), draw(STATUS), draw(FIELD))


class TestColumnGrammar:
    EXAMPLE = "datacenter1_CLIENT_component10_GET_200_endpoint865_count"

    def test_render_example(self):
        key = SeriesKey("datacenter1", "CLIENT", "component10", "GET", 200, "endpoint865")
        assert render_column_name(key, StatName.COUNT) == self.EXAMPLE

    def test_parse_example(self):
        key, stat = parse_column_name(self.EXAMPLE)
        assert (key.location, key.kind, key.host, key.method, key.statusCode, key.endpoint) == (
            "datacenter1", "CLIENT", "component10", "GET", 200, "endpoint865",
        )
        assert stat is StatName.COUNT

    def test_non_http_status(self):
        key, stat = parse_column_name("a_CLIENT_b_GET_-1_e_average")
        assert key.statusCode == -1 and stat is StatName.AVERAGE

    @pytest.mark.parametrize(
        "bad",
        [
            "a_CLIENT_b_GET_200_e_bogus",
            "a_CLIENT_b_GET_200_e",
            "a_CLIENT_b_GET_200_e_f_count",
            "a_CLIENT_b_GET_2x0_e_count",
            "a_CLIENT_b_GET_0200_e_count",
            "a_OTHER_b_GET_200_e_count",
            "a_CLIENT_b_GET_600_e_count",
            "_CLIENT_b_GET_200_e_count",
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(GrammarError):
            parse_column_name(bad)

    def test_field_with_separator_rejected(self):
        with pytest.raises(GrammarError):
            SeriesKey("data_center", "CLIENT", "h", "GET", 200, "e")

    def test_status_must_be_int(self):
        with pytest.raises(GrammarError):
            SeriesKey("a", "CLIENT", "h", "GET", "200", "e")
        with pytest.raises(GrammarError):
            SeriesKey("a", "CLIENT", "h", "GET", True, "e")

    @settings(max_examples=300, deadline=None)
    @given(series_keys(), st.sampled_from(list(StatName)))
    def test_round_trip(self, key, stat):
        text = render_column_name(key, stat)
        assert parse_column_name(text) == (key, stat)
        assert ColumnName.parse(text).rendered == text

    def test_aliases_render_canonically(self):
        key = SeriesKey("a", "SERVER", "h", "GET", 500, "e")
        assert render_column_name(key, "mean") == "a_SERVER_h_GET_500_e_average"
        assert parse_stat(" Kurtosis ") is StatName.KURT

    def test_is_5xx(self):
        assert SeriesKey("a", "SERVER", "h", "GET", 503, "e").is_5xx
        assert not SeriesKey("a", "SERVER", "h", "GET", 404, "e").is_5xx


class TestIntervals:
    def test_floor_mid_interval(self):
        # 2024-01-01 12:03:17 UTC
        assert floor_to_interval(1704110597) == 1704110400

    def test_fixed_point(self):
        assert floor_to_interval(1704110400) == 1704110400

    def test_integer_oracle(self):
        assert floor_to_interval(1706284799) == 1706284500

    @given(st.integers(0, 2**40))
    def test_half_open(self, t):
        f = floor_to_interval(t)
        assert f <= t < f + 300 and f % 300 == 0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            floor_to_interval(-1)


class TestIso:
    def test_offset_preserved(self):
        epoch, off = parse_iso("2024-02-02 10:22:00-0500")
        assert off == -5 * 3600
        assert epoch == 1706887320
        assert format_iso(epoch, off) == "2024-02-02 10:22:00-0500"

    @pytest.mark.parametrize("text", ["2024-02-02T15:22:00Z", "2024-02-02 15:22:00+00:00", "2024-02-02 15:22:00+0000"])
    def test_variants(self, text):
        assert parse_iso(text)[0] == 1706887320

    def test_rejects_naive(self):
        with pytest.raises(ValueError):
            parse_iso("2024-02-02 15:22:00")

    @given(st.integers(0, 4 * 10**9), st.integers(-12 * 4, 14 * 4).map(lambda q: q * 900))
    def test_round_trip(self, epoch, off):
        assert parse_iso(format_iso(epoch, off)) == (epoch, off)


class TestRecord:
    def test_negative_latency_rejected(self):
        key = SeriesKey("a", "CLIENT", "h", "GET", 200, "e")
        with pytest.raises(ValueError):
            TelemetryRecord(0, key, -1.0)
