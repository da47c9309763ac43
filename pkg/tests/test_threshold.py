import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colorshed.errors import InputError
from colorshed.threshold import (
    SHED_NONE,
    UtilityHistory,
    build_cdf,
    push_utility,
    threshold_for_drop_rate,
    threshold_key,
)


def brute_cdf(values, u):
    return sum(1 for x in values if x <= u) / len(values)


def brute_threshold(values, r):
    if r == 0:
        return None
    return min(u for u in set(values) if brute_cdf(values, u) >= r)


def test_cdf_examples():
    assert build_cdf([0.1, 0.2, 0.3, 0.4]).steps() == [(0.1, 0.25), (0.2, 0.5), (0.3, 0.75), (0.4, 1.0)]
    assert build_cdf([0.5, 0.5, 0.5]).steps() == [(0.5, 1.0)]
    assert build_cdf([0.37]).steps() == [(0.37, 1.0)]


def test_cdf_call():
    c = build_cdf([0.1, 0.2, 0.3, 0.4])
    assert c(0.05) == 0.0 and c(0.2) == 0.5 and c(0.25) == 0.5 and c(9) == 1.0


def test_empty_history_rejected():
    with pytest.raises(InputError):
        build_cdf(UtilityHistory(10))


def test_threshold_examples():
    c = build_cdf([0.1, 0.2, 0.3, 0.4])
    assert threshold_for_drop_rate(c, 0.5) == 0.2
    assert threshold_for_drop_rate(c, 0.0) is SHED_NONE
    assert threshold_for_drop_rate(c, 1.0) == 0.4


@pytest.mark.parametrize("r", [-0.1, 1.01])
def test_rate_out_of_range(r):
    with pytest.raises(InputError):
        threshold_for_drop_rate(build_cdf([0.5]), r)


def test_history_fifo():
    h = UtilityHistory(3)
    push_utility(h, 0.3)
    assert list(h) == [0.3]
    for u in (0.1, 0.2, 0.4, 0.5):
        h.push(u)
    assert list(h) == [0.2, 0.4, 0.5] and len(h) == 3
    h = UtilityHistory(5)
    for k in range(12):
        h.push(k / 12)
    assert list(h) == [k / 12 for k in range(7, 12)]
    with pytest.raises(InputError):
        h.push(1.5)


def test_seeded_from():
    assert UtilityHistory.from_training([0.1, 0.2], 10).seeded_from == "training_set"
    assert UtilityHistory(10).seeded_from == "runtime"


def test_cdf_csv(tmp_path):
    p = tmp_path / "cdf.csv"
    build_cdf([0.2, 0.1]).write_csv(p)
    assert p.read_text().splitlines() == ["utility,cdf", "0.1,0.5", "0.2,1.0"]


histories = st.lists(st.integers(0, 20).map(lambda k: k / 20), min_size=1, max_size=200)
rates = st.floats(0, 1)


@settings(max_examples=300, deadline=None)
@given(histories, rates)
def test_threshold_matches_brute_force(values, r):
    t = threshold_for_drop_rate(build_cdf(values), r)
    assert t == brute_threshold(values, r)
    if t is not None:
        shed = sum(1 for x in values if x <= t) / len(values)
        assert shed == build_cdf(values)(t) >= r
        # overshoot bounded by the tie group sitting at the threshold
        assert shed - r < 1 / len(values) + values.count(t) / len(values)


@settings(max_examples=200, deadline=None)
@given(histories, rates, rates)
def test_threshold_monotone(values, r1, r2):
    r1, r2 = sorted((r1, r2))
    c = build_cdf(values)
    assert threshold_key(threshold_for_drop_rate(c, r1)) <= threshold_key(threshold_for_drop_rate(c, r2))


@settings(max_examples=100, deadline=None)
@given(histories)
def test_cdf_step_invariants(values):
    c = build_cdf(values)
    f = c.fractions
    assert np.all(np.diff(c.values) > 0) and np.all(np.diff(f) >= 0) and f[-1] == 1.0
    for u, p in c.steps():
        assert p == brute_cdf(values, u)
