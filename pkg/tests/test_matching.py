import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomamab.matching import (MatchingState, Mood, acceptance_probability, choose,
                              most_content_action, transition)


def content_state(n=4, action=1, utility=(0.5,)):
    return MatchingState(n, Mood.CONTENT, action, tuple(utility))


def test_acceptance_probability_values():
    assert acceptance_probability(1.0, 1.0, 0.1) == (1.0, False)
    p, clamped = acceptance_probability(1.0, 0.5, 0.01)
    assert p == pytest.approx(0.1) and not clamped
    assert acceptance_probability(1.0, 1.2, 0.01) == (1.0, True)
    assert acceptance_probability(1.0, 0.9, 0.0) == (0.0, False)
    assert acceptance_probability(1.0, 1.0, 0.0) == (1.0, False)


@given(st.floats(0, 2), st.floats(0, 2), st.floats(1e-6, 0.99))
def test_acceptance_probability_in_unit_interval(u_max, total, eps):
    p, _ = acceptance_probability(u_max, total, eps)
    assert 0 <= p <= 1


def test_content_experiments_at_rate_eps_to_c():
    rng = np.random.default_rng(0)
    eps, c, n = 0.5, 2.0, 4
    st_ = content_state(n, action=2)
    picks = np.array([choose(st_, eps, c, rng) for _ in range(40_000)])
    rate = np.mean(picks != 2)
    se = math.sqrt(0.25 * 0.75 / len(picks))
    assert abs(rate - eps ** c) < 5 * se
    # experiments are uniform over the other actions
    others = np.bincount(picks[picks != 2], minlength=n)
    assert others[2] == 0
    assert np.all(np.abs(others[[0, 1, 3]] / others.sum() - 1 / 3) < 0.03)


def test_discontent_choice_is_uniform():
    rng = np.random.default_rng(1)
    st_ = MatchingState(6)
    counts = np.bincount([choose(st_, 0.1, 3.0, rng) for _ in range(60_000)], minlength=6)
    expected = np.full(6, 10_000)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 20.5  # 0.999 quantile, 5 degrees of freedom


def test_zero_utility_forces_discontent():
    rng = np.random.default_rng(2)
    st_ = content_state()
    transition(st_, 3, (0.4, 0.0), 1.0, 0.1, rng)
    assert st_.mood is Mood.DISCONTENT
    assert st_.baseline_action == 3 and st_.baseline_utility == (0.4, 0.0)
    assert st_.content_counts.sum() == 0


def test_repeat_of_baseline_stays_content_without_draw():
    rng = np.random.default_rng(3)
    st_ = content_state(action=1, utility=(0.5,))
    before = rng.bit_generator.state
    transition(st_, 1, (0.5,), 1.0, 0.1, rng)
    assert st_.mood is Mood.CONTENT
    assert st_.content_counts[1] == 1
    assert rng.bit_generator.state == before


def test_discontent_takes_acceptance_draw_at_full_utility():
    rng = np.random.default_rng(4)
    st_ = MatchingState(3)
    transition(st_, 0, (0.7,), 0.7, 0.1, rng)
    assert st_.mood is Mood.CONTENT and st_.content_counts[0] == 1


def test_acceptance_frequency_matches_eps_power():
    rng = np.random.default_rng(5)
    eps, gap = 0.2, 0.5
    hits = 0
    trials = 20_000
    for _ in range(trials):
        st_ = MatchingState(2)
        transition(st_, 0, (1.0 - gap,), 1.0, eps, rng)
        hits += st_.mood is Mood.CONTENT
    p = eps ** gap
    assert abs(hits / trials - p) < 5 * math.sqrt(p * (1 - p) / trials)


def test_clamp_events_are_counted():
    rng = np.random.default_rng(6)
    st_ = MatchingState(2)
    transition(st_, 1, (0.6, 0.6), 1.0, 0.1, rng)
    assert st_.clamp_events == 1 and st_.mood is Mood.CONTENT


def test_eps_zero_content_state_is_absorbing():
    rng = np.random.default_rng(7)
    st_ = content_state(n=5, action=4, utility=(0.3,))
    for _ in range(1000):
        a = choose(st_, 0.0, 4.0, rng)
        assert a == 4
        transition(st_, a, (0.3,), 1.0, 0.0, rng)
    assert st_.mood is Mood.CONTENT and st_.content_counts[4] == 1000


def test_most_content_action_ties_and_empty():
    assert most_content_action(np.array([0, 3, 3, 1])) == 1
    assert most_content_action(np.zeros(4)) is None
    assert most_content_action(np.zeros(0)) is None


def test_argmax_invariant_to_positive_scaling():
    counts = np.array([2, 9, 9, 4])
    for s in (1, 3, 1000):
        assert most_content_action(counts * s) == 1


@settings(max_examples=100)
@given(st.integers(1, 6), st.floats(0, 0.5), st.integers(0, 2 ** 31))
def test_counts_only_grow_while_content(n, eps, seed):
    rng = np.random.default_rng(seed)
    st_ = MatchingState(n)
    frames = 0
    for _ in range(50):
        a = choose(st_, eps, 2.0, rng)
        u = (float(rng.choice([0.0, 0.3, 0.8])),)
        before = st_.content_counts.sum()
        transition(st_, a, u, 0.8, eps, rng)
        frames += 1
        grew = st_.content_counts.sum() - before
        assert grew == (1 if st_.mood is Mood.CONTENT else 0)
    assert st_.content_counts.sum() <= frames
