import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcsbench.errors import ConfigError
from lcsbench.likelihood import (
    LikelihoodParams,
    LikelihoodState,
    classify,
    detect,
    likelihood_series,
    parameter_grid,
    q_function,
)

from oracles import q_highprec


def batch_likelihood(errors, t, params):
    """Recompute L at index ``t`` from scratch with the statistics module."""
    lo = max(0, t - params.long_window + 1)
    window = [float(e) for e in errors[lo : t + 1]]
    mu = statistics.fmean(window)
    sigma = statistics.stdev(window) if len(window) > 1 else 0.0
    sigma = max(sigma, params.sigma_floor)
    short = statistics.fmean(window[-params.short_window :])
    z = (short - mu) / sigma
    return 0.5 * math.erfc(-z / math.sqrt(2))


class TestQFunction:
    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_symmetry(self, x):
        assert abs(q_function(x) + q_function(-x) - 1.0) < 1e-15

    def test_zero(self):
        assert q_function(0.0) == 0.5

    def test_high_precision_oracle(self):
        for x in np.linspace(-8, 8, 161):
            assert abs(q_function(float(x)) - q_highprec(float(x))) < 1e-12


class TestUpdate:
    def test_constant_stream(self):
        p = LikelihoodParams()
        for c in (0.0, 0.1, 3.7e-5, 12345.678):
            lik, warm = likelihood_series([c] * 100, p)
            assert np.all(np.abs(lik[~warm] - 0.5) <= 1e-9)

    def test_step_input(self):
        p = LikelihoodParams(long_window=30, short_window=2, threshold=0.9996)
        lik, warm = likelihood_series([1.0] * 30 + [100.0] * 5, p)
        assert not warm[29:].any()
        # one spike point is not yet enough
        assert lik[30] == pytest.approx(0.9947, abs=1e-4)
        assert lik[31] > 0.9996
        assert lik[31] == pytest.approx(batch_likelihood([1.0] * 30 + [100.0] * 2, 31, p), abs=1e-12)

    def test_step_crosses_within_two(self):
        p = LikelihoodParams(30, 2, 0.9996)
        _, flags = detect([1.0] * 30 + [100.0] * 5, p)
        first = int(np.flatnonzero(flags)[0])
        assert first - 30 < 2

    def test_warmup_never_flags(self):
        p = LikelihoodParams(10, 2, 0.6)
        _, flags = detect([0.0] * 5 + [100.0] * 4, p)
        assert not flags.any()

    def test_open_interval(self):
        p = LikelihoodParams(5, 1, 0.9)
        lik, _ = likelihood_series([0.0] * 10 + [1e12] + [0.0] * 3, p)
        assert (lik > 0).all() and (lik < 1).all()

    def test_rejects_bad_input(self):
        s = LikelihoodState(LikelihoodParams())
        for bad in (-1.0, math.nan, math.inf):
            with pytest.raises(ValueError):
                s.update(bad)

    def test_buffer_bounded(self):
        s = LikelihoodState(LikelihoodParams(long_window=7, short_window=3))
        for e in range(50):
            s.update(float(e))
        assert len(s.buffer) == 7 and s.count == 50

    def test_monotone_in_short_mean(self):
        # with the older points fixed, a larger newest point never lowers L
        base = [1.0, 2.0, 1.5, 1.2, 1.8]
        p = LikelihoodParams(6, 1)
        ls = [likelihood_series(base + [v], p)[0][-1] for v in np.linspace(0, 5, 30)]
        assert all(b >= a for a, b in zip(ls, ls[1:]))

    def test_streaming_equals_batch(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = LikelihoodParams(int(rng.integers(2, 12)), 1, 0.99)
            p = LikelihoodParams(p.long_window, int(rng.integers(1, p.long_window)), 0.99)
            errs = rng.lognormal(-3, 1, size=int(rng.integers(1, 40)))
            lik, _ = likelihood_series(errs, p)
            for t in range(errs.size):
                assert abs(lik[t] - batch_likelihood(errs, t, p)) <= 1e-12


class TestParams:
    @pytest.mark.parametrize(
        "kw", [dict(long_window=1), dict(short_window=30), dict(short_window=0), dict(threshold=1.0), dict(sigma_floor=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            LikelihoodParams(**kw)

    def test_grid(self):
        grid = list(parameter_grid())
        assert len(grid) == 150
        assert len({(g.long_window, g.short_window, g.threshold) for g in grid}) == 150
        assert {g.threshold for g in grid} == {0.9990, 0.9995, 0.9996, 0.9997, 0.9998}


class TestClassify:
    def test_operating_point_inclusive(self):
        p = LikelihoodParams(threshold=0.9996)
        assert classify(0.9996, p)
        assert not classify(0.5, p)
        assert not classify(0.9999, p, warmup=True)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_lower_threshold_never_fewer(self, seed):
        errs = np.random.default_rng(seed).lognormal(size=200)
        lik, warm = likelihood_series(errs, LikelihoodParams(20, 2))
        counts = [int(((lik >= thr) & ~warm).sum()) for thr in (0.9998, 0.9997, 0.9996, 0.9995, 0.999, 0.9, 0.5)]
        assert counts == sorted(counts)
