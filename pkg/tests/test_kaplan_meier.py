import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survdecomp.kaplan_meier import km_estimate, km_eval


def test_two_events():
    curve = km_estimate([1, 3], [True, True])
    assert curve.times.tolist() == [1.0, 3.0]
    assert curve.probs.tolist() == [0.5, 0.0]
    assert km_eval(curve, 0.5) == 1.0
    assert km_eval(curve, 1.0) == 0.5
    assert km_eval(curve, 100.0) == 0.0


def test_all_censored():
    curve = km_estimate([1, 2, 3], [False, False, False])
    assert curve.times.size == 0
    assert km_eval(curve, 10.0) == 1.0


def test_censoring_leaves_risk_set():
    curve = km_estimate([1, 2, 3], [True, False, True])
    # 1 - 1/3 at t=1, then the risk set is {3} alone at t=3
    assert km_eval(curve, 1.0) == pytest.approx(2 / 3)
    assert km_eval(curve, 2.9) == pytest.approx(2 / 3)
    assert km_eval(curve, 3.0) == 0.0


def test_event_processed_before_censoring_at_same_time():
    # at t=1: 4 at risk (the censored subject counts), 1 death
    curve = km_estimate([1, 1, 2, 3], [True, False, True, False])
    assert km_eval(curve, 1.0) == pytest.approx(3 / 4)
    # at t=2: 2 at risk
    assert km_eval(curve, 2.0) == pytest.approx(3 / 4 * 1 / 2)


def test_empty_raises():
    with pytest.raises(ValueError):
        km_estimate([])


def test_csv_export(tmp_path):
    curve = km_estimate([1, 3])
    text = curve.to_csv(tmp_path / "km.csv")
    assert text.splitlines() == ["time,survival", "1.0,0.5", "3.0,0.0"]
    assert (tmp_path / "km.csv").read_text() == text


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=50), st.integers(0, 20))
def test_uncensored_equals_empirical_survival(times, t):
    curve = km_estimate(times)
    expected = sum(1 for x in times if x > t) / len(times)
    assert km_eval(curve, t) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.booleans()), min_size=1, max_size=60), st.randoms())
def test_valid_curve_and_permutation_invariance(obs, rnd):
    times = [o[0] for o in obs]
    events = [o[1] for o in obs]
    curve = km_estimate(times, events)
    assert np.all(np.diff(curve.probs) <= 0)
    assert np.all((curve.probs >= 0) & (curve.probs <= 1))
    assert np.all(np.diff(curve.times) > 0)
    perm = list(range(len(obs)))
    rnd.shuffle(perm)
    shuffled = km_estimate([times[i] for i in perm], [events[i] for i in perm])
    np.testing.assert_array_equal(shuffled.times, curve.times)
    np.testing.assert_allclose(shuffled.probs, curve.probs, rtol=0, atol=1e-15)
