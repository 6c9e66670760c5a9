import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scenario
from nomamab.env import (Environment, NetworkScenario, ScenarioConfig, ScenarioError,
                         build_channel_rewards, build_power_rewards, generate_scenario, pathloss_db,
                         sample_uniform)
from nomamab.noma import rate_for_sinr


def test_pathloss_at_100m():
    assert pathloss_db(0.1) == pytest.approx(90.5)


def test_default_scenario_is_valid_and_deterministic():
    cfg = ScenarioConfig()
    assert cfg.validate() == []
    a = generate_scenario(cfg, 42)
    b = generate_scenario(cfg, 42)
    assert np.array_equal(a.gains, b.gains)
    assert a.K == 4 and a.M == 4 and a.L == 2 and a.beta == 2
    r = np.hypot(*a.positions.T)
    assert np.all((r >= cfg.min_distance_m) & (r <= cfg.cell_radius_m))
    assert np.all(a.gains > 0)
    np.testing.assert_allclose(a.budgets[:, 0], [1, 1, 2, 2])
    assert a.noise_power == pytest.approx(1e-14)


def test_gains_follow_pathloss_without_shadowing():
    s = generate_scenario(ScenarioConfig(shadowing_db=0.0), 3)
    d_km = np.hypot(*s.positions.T) / 1000
    expected = np.sqrt(10 ** (-pathloss_db(d_km) / 10))
    np.testing.assert_allclose(s.gains, np.repeat(expected[:, None], s.M, axis=1), rtol=1e-12)


def test_scenario_json_roundtrip():
    s = generate_scenario(ScenarioConfig(), 7)
    t = NetworkScenario.from_json(s.to_json())
    assert np.array_equal(s.gains, t.gains)
    assert t.levels == s.levels


def test_config_rejects_overcommitted_channels():
    errs = ScenarioConfig(n_aps=5, budgets_w=[1.0] * 5).validate()
    assert any(e["field"] == "beta" for e in errs)
    with pytest.raises(ScenarioError):
        generate_scenario(ScenarioConfig(n_aps=5, budgets_w=[1.0] * 5), 0)


def test_config_reports_every_problem():
    errs = ScenarioConfig(sinr_db=[4.77, 24.0], budgets_w=[1.0], bandwidth_hz=-1).validate()
    fields = {e["field"] for e in errs}
    assert {"sinr_db", "budgets_w", "bandwidth_hz"} <= fields


def test_channel_reward_table():
    sc = make_scenario([[0.2, 0.5], [1.0, 0.4]])
    t = build_channel_rewards(sc)
    assert t.mu_max == 1.0
    assert np.count_nonzero(t.single == 1.0) == 1
    np.testing.assert_allclose(t.mu[:, :, 2], t.mu[:, :, 1] / 2)
    assert np.all(t.mu[:, :, 0] == 0)


def test_rewards_zero_beyond_beta():
    sc = make_scenario(np.full((3, 1), 0.5), beta=2, n_plays=1)
    t = build_channel_rewards(sc)
    assert np.all(t.mu[:, :, 3] == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_scenarios_have_bounded_rewards(seed):
    s = generate_scenario(ScenarioConfig(), seed)
    env = Environment(s)
    mu = env.channel_table.mu
    assert mu.min() >= 0 and mu.max() == 1.0
    pt = env.set_gain_estimates(s.gains)
    assert pt.muP.min() >= 0 and pt.muP.max() <= 1 + 1e-12


def test_step_channel_occupancy_and_zero_reward(rng):
    sc = make_scenario(np.full((3, 2), 0.5), n_plays=1)
    env = Environment(sc)
    fb = env.step_channel([(0,), (0,), (0,)], rng)
    assert all(f.occupancy == (3,) and f.rewards == (0.0,) for f in fb)
    fb = env.step_channel([(0,), (0,), (1,)], rng)
    assert [f.occupancy for f in fb] == [(2,), (2,), (1,)]


def test_step_channel_rejects_malformed(rng):
    env = Environment(make_scenario(np.full((2, 3), 0.5), n_plays=2))
    with pytest.raises(ValueError):
        env.step_channel([(0,), (1, 2)], rng)
    with pytest.raises(ValueError):
        env.step_channel([(0, 0), (1, 2)], rng)
    with pytest.raises(ValueError):
        env.step_channel([(0, 5), (1, 2)], rng)


def test_sample_mean_within_three_sigma(rng):
    for mu in (0.03, 0.4, 0.97):
        x = sample_uniform(np.full(10 ** 5, mu), 0.05, rng)
        w = min(mu, 1 - mu, 0.05)
        assert x.min() >= mu - w and x.max() <= mu + w
        assert abs(x.mean() - mu) <= 3 * w / math.sqrt(3 * 10 ** 5)


def test_sampling_unbiased_five_sigma():
    rng = np.random.default_rng(0)
    x = sample_uniform(np.full(10 ** 5, 0.25), 0.05, rng)
    assert abs(x.mean() - 0.25) <= 5 * 0.05 / math.sqrt(3 * 10 ** 5)


def test_feedback_determinism():
    env = Environment(generate_scenario(ScenarioConfig(), 1))
    acts = [(0, 1), (1, 2), (2, 3), (0, 3)]
    a = env.step_channel(acts, np.random.default_rng(9))
    b = env.step_channel(acts, np.random.default_rng(9))
    assert a == b


def test_per_slot_reward_sum_bounded(rng):
    env = Environment(generate_scenario(ScenarioConfig(), 2))
    for _ in range(200):
        acts = [tuple(sorted(rng.choice(4, 2, replace=False))) for _ in range(4)]
        for f in env.step_channel(acts, rng):
            assert 0 <= sum(f.rewards) <= 2


def test_explore_batch_matches_expected_single_play_reward():
    env = Environment(generate_scenario(ScenarioConfig(), 5))
    rng = np.random.default_rng(1)
    choices = rng.integers(4, size=(200_000, 4))
    rewards, occ = env.explore_channel_batch(choices, rng)
    # per-slot occupancy agrees with direct counting
    direct = np.array([[np.sum(row == c) for c in row] for row in choices[:50]])
    assert np.array_equal(occ[:50], direct)
    expected = env.expected_single_play_reward()
    se = rewards.sum(axis=1).std() / math.sqrt(len(rewards))
    assert abs(rewards.sum(axis=1).mean() - expected) < 5 * se


def test_expected_single_play_reward_by_enumeration():
    env = Environment(make_scenario([[0.3, 0.9], [1.0, 0.2], [0.5, 0.5]], n_plays=1))
    mu = env.channel_table.mu
    total = 0.0
    for prof in np.ndindex(2, 2, 2):
        occ = np.bincount(prof, minlength=2)
        total += sum(mu[k, m, occ[m]] for k, m in enumerate(prof)) / 8
    assert env.expected_single_play_reward() == pytest.approx(total)


def test_power_rewards_weight_extremes():
    sc = make_scenario([[1e-4, 2e-5], [5e-5, 1e-4]], w1=1.0)
    pt = build_power_rewards(sc, sc.gains)
    assert np.all(pt.muP[pt.feasible[:, :, 0], 0] == 1.0)
    sc0 = make_scenario([[1e-4, 2e-5], [5e-5, 1e-4]], w1=0.0)
    pt0 = build_power_rewards(sc0, sc0.gains)
    # the cheapest feasible triple is the weakest level at the strongest gain
    assert pt0.muP.max() == 1.0
    k, m, l = np.unravel_index(np.argmax(pt0.muP), pt0.muP.shape)
    assert sc0.gains[k, m] == sc0.gains.max() and l == sc0.L - 1


def test_power_rewards_respect_budget():
    sc = make_scenario([[1e-6, 1e-4]], budgets=[[0.5, 0.5]])
    pt = build_power_rewards(sc, sc.gains)
    p = np.asarray(sc.levels.levels)[None, None, :] / sc.gains[:, :, None] ** 2
    np.testing.assert_array_equal(pt.feasible, p <= 0.5)
    assert np.all(pt.muP[~pt.feasible] == 0)
    assert pt.infeasible_pairs({0: [0], 1: [0]}) == ([(0, 0)] if not pt.feasible[0, 0].any() else [])


def test_step_power_collision_and_success(rng):
    sc = make_scenario([[1e-4], [2e-4]], n_plays=1)
    env = Environment(sc)
    env.set_gain_estimates(sc.gains)
    fb = env.step_power(0, {0: 0, 1: 0}, rng)
    assert all(f.reward is None for f in fb.values())
    fb = env.step_power(0, {0: 0, 1: 1}, rng)
    assert all(f.reward > 0 for f in fb.values())
    for _ in range(20):
        assert env.step_power(0, {1: int(rng.integers(2))}, rng)[1].reward is not None


def test_explore_power_batch_flags_collisions(rng):
    sc = make_scenario([[1e-4], [2e-4]], n_plays=1)
    env = Environment(sc)
    env.set_gain_estimates(sc.gains)
    lv = rng.integers(2, size=(1000, 2))
    x, heard = env.explore_power_batch(0, [0, 1], lv, rng)
    np.testing.assert_array_equal(heard, lv[:, 0] != lv[:, 1])
    assert np.all(x > 0)


def test_physical_metrics():
    sc = make_scenario([[1e-4, 1e-4], [1e-4, 1e-4]], n_plays=1)
    env = Environment(sc)
    g = np.asarray(sc.ladder.gammas)
    v = np.asarray(sc.levels.levels)
    one = env.physical_metrics({0: {0: 0}})
    assert one["sum_rate"] == pytest.approx(19.95e6, rel=1e-3)
    assert one["total_power"] == pytest.approx(v[0] / 1e-8)
    assert one["ee"] == pytest.approx(one["sum_rate"] / one["total_power"])
    clash = env.physical_metrics({0: {0: 1}, 1: {0: 1}})
    assert clash["sum_rate"] == 0 and clash["ee"] == 0 and clash["attempted_power"] > 0
    both = env.physical_metrics({0: {0: 0}, 1: {0: 1}})
    assert both["sum_rate"] == pytest.approx(rate_for_sinr(g[0], 2.5e6) + rate_for_sinr(g[1], 2.5e6))
