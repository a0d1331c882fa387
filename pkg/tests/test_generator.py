from collections import Counter

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from lcsbench.errors import ConfigError
from lcsbench.generator import (
    AnomalySpec,
    DowntimeSpec,
    GeneratorConfig,
    _route_seed,
    default_config,
    expected_request_count,
    generate,
    ground_truth_of,
)
from lcsbench.groundtruth import load_ground_truth, write_ground_truth
from lcsbench.records import write_records

T0 = 1706486400
DAY = 86400


def small_config(**kw):
    base = dict(seed=11, start=T0, end=T0 + 3 * DAY, locations=2, hosts=2, endpoints=3, base_rate=3.0)
    base.update(kw)
    return GeneratorConfig(**base)


@pytest.fixture(scope="module")
def anomalous():
    a = AnomalySpec(T0 + 2 * DAY, T0 + 2 * DAY + 3 * 3600, ("datacenter1",), error_multiplier=10)
    d = DowntimeSpec("datacenter2", T0 + DAY, T0 + DAY + 7200)
    cfg = small_config(anomaly_specs=[a], downtime_specs=[d])
    batch, gt = generate(cfg)
    return cfg, batch, gt


def _per_interval_5xx(batch, location):
    """Tally 5XX records per interval with a plain Counter."""
    c = Counter()
    for t, loc, code in zip(batch.df.timestamp, batch.df.location, batch.df.statusCode):
        if loc == location and 500 <= code <= 599:
            c[t - t % 300] += 1
    return c


class TestDeterminism:
    def test_byte_identical(self, tmp_path):
        cfg = small_config(end=T0 + DAY)
        write_records(generate(cfg)[0], tmp_path / "a.csv")
        write_records(generate(cfg)[0], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_changes_output(self):
        a, _ = generate(small_config(end=T0 + DAY))
        b, _ = generate(small_config(end=T0 + DAY, seed=12))
        assert not a.df.equals(b.df)

    def test_route_seed_depends_only_on_route(self):
        r1 = ("datacenter1", "CLIENT", "component1", "GET", "endpoint1")
        r2 = ("datacenter1", "CLIENT", "component1", "PUT", "endpoint1")
        draw = lambda seed, r: np.random.default_rng(_route_seed(seed, r)).random(4).tolist()  # noqa: E731
        assert draw(5, r1) == draw(5, r1)
        assert draw(5, r1) != draw(5, r2)
        assert draw(5, r1) != draw(6, r1)


class TestVolume:
    def test_within_ten_percent_of_expectation(self):
        cfg = small_config()
        batch, _ = generate(cfg)
        assert abs(len(batch) - expected_request_count(cfg)) <= 0.10 * expected_request_count(cfg)

    def test_sorted_and_in_range(self, anomalous):
        cfg, batch, _ = anomalous
        ts = batch.df.timestamp.to_numpy()
        assert (np.diff(ts) >= 0).all()
        assert ts.min() >= cfg.start and ts.max() < cfg.end


class TestAnomalies:
    def test_5xx_inside_exceeds_three_times_outside_median(self, anomalous):
        cfg, batch, _ = anomalous
        a = cfg.anomaly_specs[0]
        counts = _per_interval_5xx(batch, "datacenter1")
        grid = range(cfg.start, cfg.end, 300)
        inside = [counts[t] for t in grid if a.start <= t < a.end]
        outside = [counts[t] for t in grid if not a.start <= t < a.end]
        assert np.mean(inside) > 3 * np.median(outside)

    def test_rank_test(self, anomalous):
        cfg, batch, _ = anomalous
        a = cfg.anomaly_specs[0]
        counts = _per_interval_5xx(batch, "datacenter1")
        grid = range(cfg.start, cfg.end, 300)
        inside = [counts[t] for t in grid if a.start <= t < a.end]
        outside = [counts[t] for t in grid if not a.start <= t < a.end]
        assert mannwhitneyu(inside, outside, alternative="greater").pvalue < 0.01

    def test_unaffected_location_unchanged(self, anomalous):
        cfg, batch, _ = anomalous
        a = cfg.anomaly_specs[0]
        df = batch.df
        inside = df[(df.timestamp >= a.start) & (df.timestamp < a.end) & (df.location == "datacenter2")]
        assert (inside.statusCode >= 500).mean() < 0.06

    def test_latency_multiplied(self, anomalous):
        cfg, batch, _ = anomalous
        a = cfg.anomaly_specs[0]
        df = batch.df[batch.df.location == "datacenter1"]
        win = (df.timestamp >= a.start) & (df.timestamp < a.end)
        assert df[win].response_time.median() > 2 * df[~win].response_time.median()

    def test_downtime_silences_location(self, anomalous):
        cfg, batch, _ = anomalous
        d = cfg.downtime_specs[0]
        df = batch.df
        assert not ((df.location == d.location) & (df.timestamp >= d.start) & (df.timestamp < d.end)).any()
        assert ((df.location == "datacenter1") & (df.timestamp >= d.start) & (df.timestamp < d.end)).any()


class TestGroundTruth:
    def test_echoes_specs(self, anomalous):
        cfg, _, gt = anomalous
        (w,) = gt.windows
        assert w.start == cfg.anomaly_specs[0].start - 20 * 60 and w.end == cfg.anomaly_specs[0].end
        assert w.source == 1
        assert [(d.location, d.start, d.end) for d in gt.downtimes] == [
            (s.location, s.start, s.end) for s in cfg.downtime_specs
        ]

    def test_round_robin_sources(self):
        cfg = default_config()
        assert [w.source for w in ground_truth_of(cfg).windows] == [1, 2, 3, 1, 2]

    def test_file_round_trip(self, anomalous, tmp_path):
        _, _, gt = anomalous
        write_ground_truth(gt, tmp_path)
        assert load_ground_truth(tmp_path) == gt
        lines = (tmp_path / "anomaly_windows.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[1].endswith(",1")


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"end": T0},
            {"hosts": 0},
            {"daily_amp": 1.5},
            {"error_rate_normal": -0.1},
            {"error_codes": (404,)},
            {"anomaly_specs": [AnomalySpec(T0 - 10, T0 + 10, ("datacenter1",))]},
            {"anomaly_specs": [AnomalySpec(T0, T0 + 10, ("datacenter9",))]},
            {"downtime_specs": [DowntimeSpec("datacenter1", T0, T0 + 4 * DAY)]},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw).validate()

    def test_dict_round_trip(self):
        cfg = default_config()
        assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_option(self):
        with pytest.raises(ConfigError):
            GeneratorConfig.from_dict({"warp": 9})

    def test_default_desk_shape(self):
        cfg = default_config()
        assert cfg.n_intervals == 12096
        assert len(cfg.anomaly_specs) == 5
        assert all(a.error_multiplier >= 10 for a in cfg.anomaly_specs)
        # every planted anomaly lies in the last two weeks
        assert all(a.start >= T0 + 28 * DAY for a in cfg.anomaly_specs)
