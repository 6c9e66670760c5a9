"""Seeded end-to-end runs of the two-stage learner and the UCB baseline."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .channel_agent import ChannelAgent, EpochParams, epoch_schedule
from .config import AlgorithmConfig, RunConfig
from .env import Environment, NetworkScenario, generate_scenario, sample_uniform
from .metrics import estimation_error
from .noma import rate_for_sinr
from .oracle import (TIE_TOL, ChannelSolution, PowerSolution, schedule_from_actions, solve_channel,
                     solve_power, t_k_hat, t_mu_hat, t_power)
from .power_agent import PowerAgent
from .ucb import UcbPopulation

log = logging.getLogger(__name__)

PHASES = ("explore", "match", "exploit")
CHUNK = 1 << 16

# children of a run's root SeedSequence, by purpose
SCENARIO, CHANNEL_ENV, CHANNEL_AGENTS, POWER_ENV, POWER_AGENTS, UCB_ENV, UCB_TIES = range(7)


def seed_streams(seed: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(7)


def _epoch_params(alg: AlgorithmConfig, explore_len: int) -> EpochParams:
    return EpochParams(int(explore_len), alg.c1, alg.c2, alg.delta, alg.explore_mode)


def horizon_for_epochs(n_epochs: int, params: EpochParams) -> int:
    """Slots needed to complete ``n_epochs`` full epochs."""
    return sum(epoch_schedule(l, params).total for l in range(1, n_epochs + 1))


def channel_explore_length(alg: AlgorithmConfig, scenario: NetworkScenario,
                           solution: ChannelSolution) -> tuple[int, dict]:
    """Exploration length per epoch and how it was obtained.

    ``"auto"`` takes the larger of the mean-estimation and AP-count lengths
    computed from the instance's gap, clipped to ``explore_cap``.
    """
    if alg.explore_len != "auto":
        return int(alg.explore_len), {"source": "config"}
    K, M, beta = scenario.K, scenario.M, scenario.beta
    tk = t_k_hat(M, beta, alg.eta)
    tm = t_mu_hat(K, M, beta, solution.delta) if solution.delta > 0 else math.inf
    raw = max(tm, tk)
    info = {"source": "auto", "T_mu_hat": tm if math.isfinite(tm) else None, "T_K_hat": tk,
            "uncapped": raw if math.isfinite(raw) else None, "cap": alg.explore_cap}
    if raw > alg.explore_cap:
        log.warning("channel exploration length %s clipped to %d", raw, alg.explore_cap)
        info["capped"] = True
        return int(alg.explore_cap), info
    info["capped"] = False
    return int(raw), info


def power_explore_length(alg: AlgorithmConfig, scenario: NetworkScenario,
                         solutions: list[PowerSolution]) -> tuple[int, dict]:
    if alg.power_explore_len != "auto":
        return int(alg.power_explore_len), {"source": "config"}
    gaps = [s.delta for s in solutions if s.delta > 0]
    dp = min(gaps) if gaps else 0.0
    raw = t_power(scenario.L, scenario.beta, dp) if dp > 0 else math.inf
    info = {"source": "auto", "delta_P": dp, "uncapped": raw if math.isfinite(raw) else None,
            "cap": alg.power_explore_cap}
    if raw > alg.power_explore_cap:
        log.warning("power exploration length %s clipped to %d", raw, alg.power_explore_cap)
        info["capped"] = True
        return int(alg.power_explore_cap), info
    info["capped"] = False
    return int(raw), info


def planned_channel_explore(cfg: RunConfig, seed: int) -> tuple[int, dict]:
    """Channel exploration length a run of ``seed`` will use, without simulating."""
    scenario = generate_scenario(cfg.scenario, seed_streams(seed)[SCENARIO])
    env = Environment(scenario, cfg.algorithm.w_max)
    return channel_explore_length(cfg.algorithm, scenario, solve_channel(env.channel_table, scenario.plays))


# -- channel stage -------------------------------------------------------------

@dataclass
class ChannelStage:
    epoch: np.ndarray          # (T,) epoch number
    phase: np.ndarray          # (T,) index into PHASES
    actions: np.ndarray        # (T, K) channel while exploring, action index otherwise
    expected: np.ndarray       # (T, K) mean reward of the realised profile
    occupancy: np.ndarray      # (T, M)
    regret_inc: np.ndarray     # (T,) optimum minus the policy's expected reward
    realized: Optional[np.ndarray]
    epochs: list
    agents: list
    frozen: list               # channels each AP keeps for the power stage


def _alloc_channel(T, K, M, realized):
    return dict(epoch=np.zeros(T, np.int32), phase=np.zeros(T, np.int8),
                actions=np.zeros((T, K), np.int32), expected=np.zeros((T, K)),
                occupancy=np.zeros((T, M), np.int16), regret_inc=np.zeros(T),
                realized=np.zeros(T) if realized else None)


def run_channel_stage(env: Environment, alg: AlgorithmConfig, explore_len: int, horizon: int,
                      env_rng: np.random.Generator, agent_rngs, solution: ChannelSolution,
                      realized: bool = False) -> ChannelStage:
    sc = env.scenario
    K, M, beta = sc.K, sc.M, sc.beta
    c_value = None if alg.c_policy == "KN" else float(alg.c_policy)
    agents = [ChannelAgent(M, int(sc.plays[k]), beta, alg.epsilon, agent_rngs[k], c_value=c_value)
              for k in range(K)]
    params = _epoch_params(alg, explore_len)
    mu = env.channel_table.mu
    J1 = solution.J1
    explore_mean = env.expected_single_play_reward()
    # occupancies above K never occur, so those entries cannot be estimated
    reach = min(beta, K)
    true_mu = mu[:, :, 1:reach + 1]
    a = _alloc_channel(horizon, K, M, realized)
    kk = np.arange(K)[None, :]
    t, l = 0, 0
    epochs = []
    while t < horizon:
        l += 1
        lens = epoch_schedule(l, params)
        rec = {"epoch": l, "start": t, "explore": 0, "match": 0, "exploit": 0}
        epochs.append(rec)
        for ag in agents:
            ag.begin_epoch(l)
        n = min(lens.explore_len, horizon - t)
        for s0 in range(0, n, CHUNK):
            b = min(CHUNK, n - s0)
            choices = np.column_stack([ag.explore_batch(b) for ag in agents])
            rewards, occ = env.explore_channel_batch(choices, env_rng)
            for k, ag in enumerate(agents):
                ag.explore_update_batch(choices[:, k], rewards[:, k], occ[:, k])
            s = slice(t + s0, t + s0 + b)
            a["epoch"][s], a["phase"][s] = l, 0
            a["actions"][s] = choices
            a["expected"][s] = mu[kk, choices, occ]
            a["occupancy"][s] = (choices[:, :, None] == np.arange(M)).sum(axis=1)
            a["regret_inc"][s] = J1 - explore_mean
            if realized:
                a["realized"][s] = rewards.sum(axis=1)
        t += n
        rec["explore"] = n
        if n < lens.explore_len:
            break
        for ag in agents:
            ag.finalize_exploration()
        rec["K_hat"] = [ag.K_hat for ag in agents]
        rec["estimation_error"] = estimation_error(np.stack([ag.mu_hat[:, 1:reach + 1] for ag in agents]), true_mu)
        rec["explored_slots"] = agents[0].explored

        n = min(lens.match_len, horizon - t)
        for ag in agents:
            ag.begin_matching()
        for i in range(n):
            idx = [ag.matching_choose() for ag in agents]
            acts = [ag.actions[j] for ag, j in zip(agents, idx)]
            fb = env.step_channel(acts, env_rng)
            for ag, j, f in zip(agents, idx, fb):
                ag.matching_transition(j, f.occupancy)
            occ = env.occupancy(acts)
            exp = [sum(mu[k, m, occ[m]] for m in acts[k]) for k in range(K)]
            a["epoch"][t + i], a["phase"][t + i] = l, 1
            a["actions"][t + i] = idx
            a["expected"][t + i] = exp
            a["occupancy"][t + i] = occ
            a["regret_inc"][t + i] = J1 - sum(exp)
            if realized:
                a["realized"][t + i] = sum(sum(f.rewards) for f in fb)
        t += n
        rec["match"] = n
        rec["clamp_events"] = int(sum(ag.match_state.clamp_events for ag in agents))
        if n < lens.match_len:
            break

        idx = [ag.begin_exploitation() for ag in agents]
        acts = [ag.actions[j] for ag, j in zip(agents, idx)]
        exp = env.expected_channel_reward(acts)
        occ = env.occupancy(acts)
        value = float(exp.sum())
        rec["actions"] = [list(x) for x in acts]
        rec["value"] = value
        rec["optimal"] = value >= J1 - TIE_TOL * max(1.0, abs(J1))
        n = int(min(lens.exploit_len, horizon - t))
        s = slice(t, t + n)
        a["epoch"][s], a["phase"][s] = l, 2
        a["actions"][s] = idx
        a["expected"][s] = exp
        a["occupancy"][s] = occ
        a["regret_inc"][s] = J1 - value
        if realized:
            means = np.array([mu[k, m, occ[m]] for k in range(K) for m in acts[k]])
            for s0 in range(0, n, CHUNK):
                b = min(CHUNK, n - s0)
                draws = sample_uniform(np.broadcast_to(means, (b, len(means))), env.w_max, env_rng)
                a["realized"][t + s0:t + s0 + b] = draws.sum(axis=1)
        t += n
        rec["exploit"] = n

    frozen = []
    for ag in agents:
        # fold in any exploration the horizon cut short before handing off
        ag.finalize_exploration()
        if ag.exploit_index is not None:
            frozen.append(ag.actions[ag.exploit_index])
        else:
            frozen.append(ag.actions[ag.exploit_action()])
    return ChannelStage(agents=agents, epochs=epochs, frozen=frozen, **a)


# -- power stage ---------------------------------------------------------------

@dataclass
class PowerGame:
    """Level game on one channel among the APs that can transmit there."""

    channel: int
    aps: list                  # transmitting APs (non-empty feasible set)
    abstaining: list
    agents: list
    solution: PowerSolution
    radix: np.ndarray          # mixed-radix strides over agents' feasible-level positions
    position: list             # per agent: level -> position lookup (L,)
    value: np.ndarray          # (P,) sum of mean rewards, 0 on collision
    per_ap: np.ndarray         # (P, n) mean reward per AP, 0 on collision
    rate: np.ndarray           # (P,)
    power: np.ndarray          # (P,)
    levels: np.ndarray         # (P, n)

    def profile(self, levels) -> np.ndarray:
        levels = np.asarray(levels)
        pos = np.stack([self.position[i][levels[..., i]] for i in range(len(self.aps))], axis=-1)
        return pos @ self.radix


def build_power_game(env: Environment, m: int, aps, occupancy: int, epsilon: float,
                     rngs) -> Optional[PowerGame]:
    """Level game on channel ``m``; ``None`` when no scheduled AP can transmit there."""
    sc, pt = env.scenario, env.power_table
    active = [k for k in aps if pt.feasible[k, m].any()]
    abstaining = [k for k in aps if k not in active]
    if not active:
        log.warning("no AP scheduled on channel %d has a feasible level", m)
        return None
    agents = [PowerAgent(m, pt.feasible_levels(k, m), sc.L, occupancy, epsilon, rngs[k]) for k in active]
    spaces = [ag.levels for ag in agents]
    sizes = [len(s) for s in spaces]
    radix = np.array([math.prod(sizes[i + 1:]) for i in range(len(sizes))], dtype=np.int64)
    position = []
    for s in spaces:
        p = np.full(sc.L, -1, dtype=np.int64)
        p[list(s)] = np.arange(len(s))
        position.append(p)
    profiles = np.array(list(itertools.product(*spaces)), dtype=np.int64).reshape(-1, len(active))
    gam = np.asarray(sc.ladder.gammas)
    v = np.asarray(sc.levels.levels)
    ok = np.array([len(set(p)) == len(p) for p in profiles], dtype=bool)
    per_ap = np.zeros(profiles.shape)
    rate = np.zeros(len(profiles))
    power = np.zeros(len(profiles))
    for i, k in enumerate(active):
        lv = profiles[:, i]
        per_ap[:, i] = np.where(ok, pt.muP[k, m, lv], 0.0)
        rate += np.where(ok, rate_for_sinr(gam[lv], sc.bandwidth_hz), 0.0)
        power += np.where(ok, v[lv] / sc.gains[k, m] ** 2, 0.0)
    sol = solve_power(pt, m, active)
    return PowerGame(m, active, abstaining, agents, sol, radix, position, per_ap.sum(axis=1),
                     per_ap, rate, power, profiles)


@dataclass
class PowerStage:
    epoch: np.ndarray
    phase: np.ndarray
    levels: np.ndarray         # (T, K, M) level index, -1 when not transmitting
    expected: np.ndarray       # (T, K)
    occupancy: np.ndarray      # (T, M) transmitting APs
    regret_inc: np.ndarray
    rate: np.ndarray
    power: np.ndarray
    realized: Optional[np.ndarray]
    epochs: list
    games: list
    overloaded: list
    explore_len: int
    explore_info: dict


def run_power_stage(env: Environment, alg: AlgorithmConfig, frozen, gain_hat: np.ndarray,
                    horizon: int, env_rng: np.random.Generator, agent_seed: np.random.SeedSequence,
                    realized: bool = False) -> PowerStage:
    sc = env.scenario
    K, M, beta = sc.K, sc.M, sc.beta
    env.set_gain_estimates(gain_hat)
    sched = schedule_from_actions(frozen, M)
    # one stream per (AP, channel) pair, independent of which pairs end up scheduled
    streams = agent_seed.spawn(K * M)
    games, overloaded = [], []
    for m, aps in sched.items():
        if not aps:
            continue
        if len(aps) > beta:
            log.warning("channel %d carries %d APs (> beta); excluded from the power stage", m, len(aps))
            overloaded.append(m)
            continue
        rngs = {k: np.random.default_rng(streams[k * M + m]) for k in aps}
        g = build_power_game(env, m, aps, len(aps), alg.epsilon, rngs)
        if g is not None:
            games.append(g)
    explore_len, info = power_explore_length(alg, sc, [g.solution for g in games])
    params = _epoch_params(alg, explore_len)
    J1 = sum(g.solution.J1 for g in games)
    explore_mean = sum(float(g.value.mean()) for g in games)

    ep = np.zeros(horizon, np.int32)
    ph = np.zeros(horizon, np.int8)
    levels = np.full((horizon, K, M), -1, np.int8)
    expected = np.zeros((horizon, K))
    occupancy = np.zeros((horizon, M), np.int16)
    regret_inc = np.zeros(horizon)
    rate = np.zeros(horizon)
    power = np.zeros(horizon)
    real = np.zeros(horizon) if realized else None

    def record(s, g, lv, prof):
        """Fill slots ``s`` of game ``g`` given played levels (b, n) and profile ids (b,)."""
        levels[s, g.aps, g.channel] = lv
        expected[s, g.aps] += g.per_ap[prof]
        occupancy[s, g.channel] = len(g.aps)
        rate[s] += g.rate[prof]
        power[s] += g.power[prof]

    t, l = 0, 0
    epochs = []
    while t < horizon and games:
        l += 1
        lens = epoch_schedule(l, params)
        rec = {"epoch": l, "start": t, "explore": 0, "match": 0, "exploit": 0}
        epochs.append(rec)
        for g in games:
            for ag in g.agents:
                ag.begin_epoch(l)
        n = min(lens.explore_len, horizon - t)
        for s0 in range(0, n, CHUNK):
            b = min(CHUNK, n - s0)
            s = slice(t + s0, t + s0 + b)
            for g in games:
                lv = np.column_stack([ag.explore_batch(b) for ag in g.agents])
                x, heard = env.explore_power_batch(g.channel, g.aps, lv, env_rng)
                for i, ag in enumerate(g.agents):
                    ag.explore_update_batch(lv[:, i], x[:, i], heard)
                prof = g.profile(lv)
                record(s, g, lv, prof)
                if realized:
                    real[s] += np.where(heard, x.sum(axis=1), 0.0)
            ep[s], ph[s] = l, 0
            regret_inc[s] = J1 - explore_mean
        t += n
        rec["explore"] = n
        if n < lens.explore_len:
            break
        for g in games:
            for ag in g.agents:
                ag.finalize_exploration()

        n = min(lens.match_len, horizon - t)
        for g in games:
            for ag in g.agents:
                ag.begin_matching()
        for i in range(n):
            total = 0.0
            for g in games:
                lv = [ag.matching_choose() for ag in g.agents]
                fb = env.step_power(g.channel, dict(zip(g.aps, lv)), env_rng)
                for ag, k in zip(g.agents, g.aps):
                    ag.matching_transition(fb[k].level, fb[k].reward)
                prof = int(g.profile(np.asarray(lv)))
                record(t + i, g, lv, prof)
                total += g.value[prof]
                if realized:
                    real[t + i] += sum(f.reward for f in fb.values() if f.reward is not None)
            ep[t + i], ph[t + i] = l, 1
            regret_inc[t + i] = J1 - total
        t += n
        rec["match"] = n
        if n < lens.match_len:
            break

        n = int(min(lens.exploit_len, horizon - t))
        s = slice(t, t + n)
        total = 0.0
        rec["levels"], rec["optimal"] = {}, True
        for g in games:
            lv = np.array([ag.begin_exploitation() for ag in g.agents])
            prof = int(g.profile(lv))
            record(s, g, lv, prof)
            total += g.value[prof]
            rec["levels"][str(g.channel)] = {str(k): int(x) for k, x in zip(g.aps, lv)}
            rec["optimal"] &= bool(g.value[prof] >= g.solution.J1 - TIE_TOL * max(1.0, g.solution.J1))
            if realized and n:
                ok = g.value[prof] > 0
                means = g.per_ap[prof]
                for s0 in range(0, n, CHUNK):
                    b = min(CHUNK, n - s0)
                    draws = sample_uniform(np.broadcast_to(means, (b, len(means))), env.w_max, env_rng)
                    real[t + s0:t + s0 + b] += draws.sum(axis=1) if ok else 0.0
        ep[s], ph[s] = l, 2
        regret_inc[s] = J1 - total
        rec["value"] = total
        t += n
        rec["exploit"] = n
    return PowerStage(ep, ph, levels, expected, occupancy, regret_inc, rate, power, real, epochs,
                      games, overloaded, explore_len, info)


# -- full runs -------------------------------------------------------------------

def _converged_epoch(epochs: list) -> Optional[dict]:
    """First epoch from which every completed exploitation phase was optimal."""
    done = [e for e in epochs if "optimal" in e]
    first = None
    for e in done:
        if e["optimal"]:
            first = first or e
        else:
            first = None
    return first


def _tail_mean(x: np.ndarray, frac: float) -> float:
    if len(x) == 0:
        return 0.0
    n = max(1, int(math.ceil(len(x) * frac)))
    return float(np.mean(x[-n:]))


def _converged(rate: np.ndarray, power: np.ndarray, frac: float) -> dict:
    """Window means of rate and power over the final ``frac`` of slots; EE is their ratio."""
    r, p = _tail_mean(rate, frac), _tail_mean(power, frac)
    return {"window_fraction": frac, "sum_rate": r, "total_power": p, "ee": r / p if p > 0 else 0.0}


def _ee(rate, power):
    return np.divide(rate, power, out=np.zeros_like(rate), where=power > 0)


@dataclass
class RunResult:
    seed: int
    method: str
    scenario: NetworkScenario
    summary: dict
    oracle: dict
    tables: dict = field(default_factory=dict)   # name -> (header, rows)
    wall_seconds: float = 0.0                    # kept out of the written files so they stay reproducible


def _channel_label(stage: ChannelStage, t: int, k: int) -> str:
    if stage.phase[t] == 0:
        return f"m{stage.actions[t, k]}"
    return "-".join(str(m) for m in stage.agents[k].actions[stage.actions[t, k]])


def _level_label(levels: np.ndarray, t: int, k: int) -> str:
    row = levels[t, k]
    return "|".join(f"m{m}:L{int(row[m])}" for m in np.flatnonzero(row >= 0)) or "-"


def _stride_index(T: int, stride: int) -> np.ndarray:
    idx = np.arange(stride - 1, T, stride)
    if T and (idx.size == 0 or idx[-1] != T - 1):
        idx = np.append(idx, T - 1)
    return idx


def run_proposed(cfg: RunConfig, seed: int) -> RunResult:
    streams = seed_streams(seed)
    scenario = generate_scenario(cfg.scenario, streams[SCENARIO])
    alg = cfg.algorithm
    env = Environment(scenario, alg.w_max)
    sol = solve_channel(env.channel_table, scenario.plays)
    explore_len, explore_info = channel_explore_length(alg, scenario, sol)
    agent_rngs = [np.random.default_rng(s) for s in streams[CHANNEL_AGENTS].spawn(scenario.K)]
    t0 = time.perf_counter()
    cs = run_channel_stage(env, alg, explore_len, cfg.horizon_channel,
                           np.random.default_rng(streams[CHANNEL_ENV]), agent_rngs, sol,
                           cfg.realized_regret)
    gain_hat = np.stack([ag.gain_estimates(env.mu_max) for ag in cs.agents])
    ps = run_power_stage(env, alg, cs.frozen, gain_hat, cfg.horizon_power,
                         np.random.default_rng(streams[POWER_ENV]), streams[POWER_AGENTS],
                         cfg.realized_regret)
    elapsed = time.perf_counter() - t0

    K, M = scenario.K, scenario.M
    c_regret = np.cumsum(cs.regret_inc)
    p_regret = np.cumsum(ps.regret_inc)
    ee = _ee(ps.rate, ps.power)
    conv = _converged_epoch(cs.epochs)
    conv_slot = conv["start"] + conv["explore"] + conv["match"] if conv else None
    pconv = _converged_epoch(ps.epochs)
    pconv_slot = pconv["start"] + pconv["explore"] + pconv["match"] if pconv else None
    frozen_value = float(env.expected_channel_reward(cs.frozen).sum())
    power_solutions = [g.solution.to_dict() for g in ps.games]
    summary = {
        "seed": seed, "method": "proposed", "scenario_digest": env.channel_table.digest,
        "channel": {
            "optimum": sol.J1, "second": sol.J2, "delta": sol.delta, "n_optimal": sol.n_optimal,
            "optimal_actions": [list(a) for a in sol.actions],
            "explore_len": explore_len, "explore_info": explore_info,
            "epochs": cs.epochs, "frozen_actions": [list(a) for a in cs.frozen],
            "frozen_value": frozen_value,
            "frozen_optimal": frozen_value >= sol.J1 - TIE_TOL * max(1.0, sol.J1),
            "converged_epoch": conv["epoch"] if conv else None,
            "convergence_slot": conv_slot,
            "convergence_seconds": conv_slot * cfg.slot_seconds if conv_slot is not None else None,
            "final_regret": float(c_regret[-1]) if len(c_regret) else 0.0,
            "K_hat": [ag.K_hat for ag in cs.agents],
        },
        "power": {
            "optimum": sum(g.solution.J1 for g in ps.games), "explore_len": ps.explore_len,
            "explore_info": ps.explore_info, "epochs": ps.epochs, "solutions": power_solutions,
            "overloaded_channels": ps.overloaded,
            "abstaining": [[k, g.channel] for g in ps.games for k in g.abstaining],
            "converged_epoch": pconv["epoch"] if pconv else None,
            "convergence_slot": pconv_slot,
            "convergence_seconds": pconv_slot * cfg.slot_seconds if pconv_slot is not None else None,
            "final_regret": float(p_regret[-1]) if len(p_regret) else 0.0,
        },
        "converged": _converged(ps.rate, ps.power, cfg.converged_fraction),
    }
    oracle = {"channel": sol.to_dict(), "power": power_solutions}

    tables = {}
    idx = _stride_index(len(cs.epoch), cfg.trace_stride)
    pidx = _stride_index(len(ps.epoch), cfg.trace_stride)
    header = (["t", "stage", "epoch", "phase"] + [f"action_{k}" for k in range(K)]
              + [f"reward_{k}" for k in range(K)] + [f"occ_{m}" for m in range(M)]
              + ["sum_expected", "regret", "sum_rate", "total_power", "ee"])
    rows = []
    for t in idx:
        rows.append([t + 1, "channel", int(cs.epoch[t]), PHASES[cs.phase[t]]]
                    + [_channel_label(cs, t, k) for k in range(K)]
                    + [f"{x:.6g}" for x in cs.expected[t]] + cs.occupancy[t].tolist()
                    + [f"{cs.expected[t].sum():.6g}", f"{c_regret[t]:.6g}", "", "", ""])
    for t in pidx:
        rows.append([len(cs.epoch) + t + 1, "power", int(ps.epoch[t]), PHASES[ps.phase[t]]]
                    + [_level_label(ps.levels, t, k) for k in range(K)]
                    + [f"{x:.6g}" for x in ps.expected[t]] + ps.occupancy[t].tolist()
                    + [f"{ps.expected[t].sum():.6g}", f"{p_regret[t]:.6g}",
                       f"{ps.rate[t]:.6g}", f"{ps.power[t]:.6g}", f"{ee[t]:.6g}"])
    tables["trace"] = (header, rows)
    reg_header = ["t", "regret"] + (["realized"] if cfg.realized_regret else [])

    def regret_rows(ix, cum, gaps):
        rr = np.cumsum(gaps) if gaps is not None else None
        return [[t + 1, f"{cum[t]:.10g}"] + ([f"{rr[t]:.10g}"] if rr is not None else []) for t in ix]

    if cfg.realized_regret:
        tables["regret_channel"] = (reg_header, regret_rows(idx, c_regret, sol.J1 - cs.realized))
        tables["regret_power"] = (reg_header, regret_rows(
            pidx, p_regret, summary["power"]["optimum"] - ps.realized))
    else:
        tables["regret_channel"] = (reg_header, regret_rows(idx, c_regret, None))
        tables["regret_power"] = (reg_header, regret_rows(pidx, p_regret, None))
    tables["metrics"] = (["t", "sum_rate", "total_power", "ee"],
                         [[t + 1, f"{ps.rate[t]:.10g}", f"{ps.power[t]:.10g}", f"{ee[t]:.10g}"]
                          for t in pidx])
    return RunResult(seed, "proposed", scenario, summary, oracle, tables, elapsed)


def run_ucb(cfg: RunConfig, seed: int) -> RunResult:
    streams = seed_streams(seed)
    scenario = generate_scenario(cfg.scenario, streams[SCENARIO])
    env = Environment(scenario, cfg.algorithm.w_max)
    # the baseline has no exploration stage, so it scores levels with the true gains
    env.set_gain_estimates(scenario.gains)
    pop = UcbPopulation(env, cfg.algorithm.ucb_alpha, cfg.algorithm.ucb_tie_break,
                        np.random.default_rng(streams[UCB_TIES]))
    rng = np.random.default_rng(streams[UCB_ENV])
    T = cfg.ucb_horizon
    K = scenario.K
    arms = np.zeros((T, K), np.int32)
    expected = np.zeros((T, K))
    rate = np.zeros(T)
    power = np.zeros(T)
    t0 = time.perf_counter()
    for t in range(T):
        arms[t], _, expected[t], rate[t], power[t] = pop.step(rng)
    elapsed = time.perf_counter() - t0
    ee = _ee(rate, power)
    summary = {
        "seed": seed, "method": "ucb", "scenario_digest": env.channel_table.digest,
        "n_arms": pop.n_arms, "horizon": T,
        "final_arms": [[list(pop.arms[a][0]), list(pop.arms[a][1])] for a in arms[-1]] if T else [],
        "converged": _converged(rate, power, cfg.converged_fraction),
    }
    idx = _stride_index(T, cfg.trace_stride)
    header = (["t", "stage", "epoch", "phase"] + [f"action_{k}" for k in range(K)]
              + [f"reward_{k}" for k in range(K)] + ["sum_expected", "sum_rate", "total_power", "ee"])
    rows = [[t + 1, "joint", "", ""] + [int(x) for x in arms[t]]
            + [f"{x:.6g}" for x in expected[t]]
            + [f"{expected[t].sum():.6g}", f"{rate[t]:.6g}", f"{power[t]:.6g}", f"{ee[t]:.6g}"]
            for t in idx]
    tables = {"trace": (header, rows),
              "metrics": (["t", "sum_rate", "total_power", "ee"],
                          [[t + 1, f"{rate[t]:.10g}", f"{power[t]:.10g}", f"{ee[t]:.10g}"] for t in idx])}
    return RunResult(seed, "ucb", scenario, summary, {}, tables, elapsed)


def run_single(cfg: RunConfig, seed: int, method: Optional[str] = None) -> RunResult:
    method = method or cfg.method
    if method == "proposed":
        return run_proposed(cfg, seed)
    if method == "ucb":
        return run_ucb(cfg, seed)
    raise ValueError(f"unknown method {method!r}")


# -- output -------------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def write_result(result: RunResult, out: Path) -> Path:
    d = Path(out) / result.method / f"seed_{result.seed}"
    d.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in result.tables.items():
        with open(d / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    dump_json(result.summary, d / "summary.json")
    (d / "scenario.json").write_text(result.scenario.to_json() + "\n")
    if result.oracle:
        dump_json(result.oracle, d / "oracle.json")
    return d


def _run_and_write(args):
    cfg_dict, seed, method, out = args
    cfg = RunConfig.from_dict(cfg_dict)
    res = run_single(cfg, seed, method)
    log.info("seed %d (%s) simulated in %.1f s", seed, res.method, res.wall_seconds)
    write_result(res, Path(out))
    return res.summary


def run_many(cfg: RunConfig, seeds=None, method: Optional[str] = None, out: Optional[str] = None,
             jobs: int = 1) -> list[dict]:
    """Run every seed, write per-seed outputs and a manifest; returns the summaries."""
    cfg.check()
    seeds = list(cfg.seeds if seeds is None else seeds)
    method = method or cfg.method
    out_dir = Path(out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(cfg.to_dict(), s, method, str(out_dir)) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_and_write, work))
    else:
        summaries = [_run_and_write(w) for w in work]
    (out_dir / "config.json").write_text(cfg.to_json() + "\n")
    write_manifest(out_dir, cfg, seeds, method)
    return summaries


def write_manifest(out_dir: Path, cfg: RunConfig, seeds, method: str):
    from . import __version__
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out_dir))] = hashlib.sha256(p.read_bytes()).hexdigest()
    dump_json({"package_version": __version__, "config_sha256": cfg.digest(), "method": method,
               "seeds": list(seeds), "files": files}, out_dir / "manifest.json")
