import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predtoll.demand import TripRecord
from predtoll.metrics import avg_travel_time_by_departure, improvement_pct, rmsn, two_sided_t_test

from . import oracles


def done(dep, tt):
    return TripRecord(0, 1, 2, float(dep), experienced_tt=float(tt))


def test_series_one_trip_per_interval():
    trips = [done(10, 100), done(310, 250), done(900, 90)]
    assert avg_travel_time_by_departure(trips, 300.0) == {0: 100.0, 1: 250.0, 3: 90.0}


def test_series_mean():
    assert avg_travel_time_by_departure([done(5, 100), done(200, 200)], 300.0) == {0: 150.0}


def test_series_empty():
    assert avg_travel_time_by_departure([], 300.0) == {}


def test_series_skips_unfinished():
    t = TripRecord(1, 1, 2, 0.0)
    assert avg_travel_time_by_departure([t, done(1, 50)], 300.0) == {0: 50.0}


def test_rmsn_examples():
    assert rmsn([3, 4, 5], [3, 4, 5]) == 0.0
    assert abs(rmsn([11, 9], [10, 10]) - 0.1) <= 1e-12
    assert abs(rmsn([10, 10], [5, 5]) - 1.0) <= 1e-12


def test_rmsn_errors():
    with pytest.raises(ValueError):
        rmsn([1.0], [0.0])
    with pytest.raises(ValueError):
        rmsn([1.0, 2.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0.1, 1e3)), min_size=1, max_size=20))
def test_rmsn_matches_definition(pairs):
    sim, obs = zip(*pairs)
    assert rmsn(sim, obs) == pytest.approx(oracles.rmsn(sim, obs), rel=1e-12, abs=1e-12)


def test_t_identical_samples():
    a = [100, 110, 90, 100, 105]
    assert not two_sided_t_test(a, a).significant


def test_t_shifted_samples():
    a = np.array([1, 1.1, 0.9, 1.0, 1.05]) * 100
    res = two_sided_t_test(a, a + 50)
    t, df, p = oracles.welch(list(a), list(a + 50))
    assert res.significant
    assert res.statistic == pytest.approx(t, rel=1e-10)
    assert res.p_value == pytest.approx(p, rel=1e-8)


def test_t_needs_two_observations():
    with pytest.raises(ValueError):
        two_sided_t_test([1.0], [1.0, 2.0])


def test_t_degenerate():
    assert two_sided_t_test([5, 5, 5], [5, 5]).significant is False
    res = two_sided_t_test([5, 5, 5], [6, 6])
    assert res.significant and res.statistic == -math.inf


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(50, 500), min_size=3, max_size=12),
    st.lists(st.floats(50, 500), min_size=3, max_size=12),
)
def test_t_matches_welch(a, b):
    if np.var(a) < 1e-6 or np.var(b) < 1e-6:
        return
    res = two_sided_t_test(a, b)
    t, _, p = oracles.welch(a, b)
    assert res.statistic == pytest.approx(t, rel=1e-8, abs=1e-9)
    assert res.significant == (p < 0.05)


def test_improvement_examples():
    assert improvement_pct(100.0, 91.0) == pytest.approx(9.0)
    assert improvement_pct(80.0, 80.0) == 0.0
    assert improvement_pct(100.0, 110.0) == pytest.approx(-10.0)
    with pytest.raises(ValueError):
        improvement_pct(0.0, 1.0)
