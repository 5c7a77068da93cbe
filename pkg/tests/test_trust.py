import math

import pytest
from hypothesis import given, strategies as st

from cmabo import trust
from cmabo.trust import TrustScaleState


def test_init_defaults():
    s = trust.init_scale(20)
    assert s.length == 0.8 and s.tau_succ == 3 and s.tau_fail == 20
    assert s.length_min == 2.0**-7 and s.length_max == 1.6
    assert (s.succ_count, s.fail_count, s.needs_restart) == (0, 0, False)
    assert trust.init_scale(2).tau_fail == 4
    assert trust.failure_tolerance(20, batch=3) == 7
    with pytest.raises(ValueError):
        trust.init_scale(0)


def feed(state, outcomes):
    trace = []
    for ok in outcomes:
        state = trust.record(state, ok)
        trace.append(state.length)
    return state, trace


def test_three_successes_double_to_clamp():
    s, trace = feed(trust.init_scale(5), [True] * 3)
    assert trace == [0.8, 0.8, 1.6]
    s, trace = feed(s, [True] * 6)
    assert trace[-1] == 1.6 and s.length == 1.6


def test_failures_halve_then_restart():
    s = trust.init_scale(5)
    s, trace = feed(s, [False] * s.tau_fail)
    assert trace[-1] == 0.4 and not s.needs_restart
    s, _ = feed(s, [False] * (5 * s.tau_fail))
    assert s.length == pytest.approx(0.8 / 2**6) and not s.needs_restart
    s, _ = feed(s, [False] * s.tau_fail)
    assert s.length == pytest.approx(0.00625) and s.length < 2.0**-7
    assert s.needs_restart
    with pytest.raises(RuntimeError):
        trust.record(s, True)


def test_restart_after_seven_halvings_worth_of_failures():
    s = trust.init_scale(2)
    n = 0
    while not s.needs_restart:
        s = trust.record(s, False)
        n += 1
    assert n == math.ceil(math.log2(0.8 / 2.0**-7)) * s.tau_fail == 28


def test_alternating_sequence_keeps_length():
    s, trace = feed(trust.init_scale(3), [True, False] * 50)
    assert set(trace) == {0.8}


@given(st.lists(st.booleans(), max_size=300), st.integers(1, 50))
def test_reachable_states(outcomes, d):
    s = trust.init_scale(d)
    for ok in outcomes:
        if s.needs_restart:
            break
        prev = s
        s = trust.record(s, ok)
        assert s == trust.record(prev, ok)
        assert 0 < s.length <= s.length_max
        assert s.succ_count == 0 or s.fail_count == 0
        if s.length != s.length_max:
            k = math.log2(s.length / 0.8)
            assert k == round(k)
        assert s.needs_restart == (s.length < s.length_min)


def test_improvement_rule():
    assert trust.is_improvement(0.5, 1.0)
    assert not trust.is_improvement(0.9995, 1.0)
    assert trust.is_improvement(-1.01, -1.0)
    assert not trust.is_improvement(0.0, 0.0)
    assert isinstance(TrustScaleState(), TrustScaleState)
