"""Two-Dimensional UCB baseline: independent UCB1 per AP over channel x level arms."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel_agent import channel_actions
from .env import Environment


def composite_arms(n_channels: int, n_plays: int, n_levels: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(channel subset, level per chosen channel) pairs; subsets outermost, both lexicographic."""
    return [(chans, lv) for chans in channel_actions(n_channels, n_plays)
            for lv in itertools.product(range(n_levels), repeat=n_plays)]


TIE_BREAKS = ("lowest", "random")


def _argmax_ties(values: np.ndarray, tie_break: str, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Row-wise argmax; ``random`` picks uniformly among the maximal entries."""
    if tie_break == "lowest":
        return np.argmax(values, axis=-1)
    top = values == values.max(axis=-1, keepdims=True)
    # uniform key per entry, masked to the maximal ones
    keys = np.where(top, rng.random(values.shape), -1.0)
    return np.argmax(keys, axis=-1)


class UcbAgent:
    """UCB1 over composite arms; ties go to the lowest arm index unless ``tie_break='random'``."""

    def __init__(self, n_channels: int, n_plays: int, n_levels: int, alpha: float = 2.0,
                 tie_break: str = "lowest", rng: Optional[np.random.Generator] = None):
        if tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")
        if tie_break == "random" and rng is None:
            raise ValueError("random tie-breaking needs an rng")
        self.arms = composite_arms(n_channels, n_plays, n_levels)
        self.alpha = alpha
        self.tie_break = tie_break
        self.rng = rng
        self.counts = np.zeros(len(self.arms), dtype=np.int64)
        self.means = np.zeros(len(self.arms))
        self.t = 0

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def index(self) -> np.ndarray:
        """UCB1 priority of every arm at the next step (inf for unplayed arms)."""
        t = self.t + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            bonus = np.sqrt(self.alpha * math.log(t) / self.counts)
        return np.where(self.counts > 0, self.means + bonus, np.inf)

    def select(self) -> int:
        if self.t < self.n_arms:
            return self.t
        return int(_argmax_ties(self.index(), self.tie_break, self.rng))

    def update(self, arm: int, reward: float):
        self.t += 1
        self.counts[arm] += 1
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm]


@dataclass
class UcbSlot:
    rewards: np.ndarray          # (K,) sampled composite reward
    expected: np.ndarray         # (K,) mean composite reward
    decodable: np.ndarray        # (M,) bool
    allocation: dict


def ucb_step(env: Environment, arms: Sequence[tuple[Sequence[int], Sequence[int]]],
             rng: np.random.Generator) -> UcbSlot:
    """Play one slot of composite arms and return each AP's fused reward.

    A (channel, level) pair whose level exceeds the AP's budget is not
    transmitted and does not occupy the channel. A transmitted pair earns
    channel-sample x level-sample when its channel is decodable (at most
    beta transmitters on distinct levels), zero otherwise.
    """
    sc = env.scenario
    pt = env.power_table
    K, M = sc.K, sc.M
    occ = np.zeros(M, dtype=int)
    users: dict[int, list[int]] = {}
    for k, (chans, lv) in enumerate(arms):
        for m, l in zip(chans, lv):
            if pt.feasible[k, m, l]:
                occ[m] += 1
                users.setdefault(m, []).append(l)
    decodable = np.array([occ[m] <= sc.beta and len(set(users.get(m, []))) == len(users.get(m, []))
                          for m in range(M)])
    rewards = np.zeros(K)
    expected = np.zeros(K)
    allocation = {}
    # same draw layout as UcbPopulation.step: (2, K, N)
    draws = rng.random((2, K, len(arms[0][0])))
    for k, (chans, lv) in enumerate(arms):
        chans, lv = list(chans), list(lv)
        feas = pt.feasible[k, chans, lv]
        mu_c = env.channel_table.mu[k, chans, np.maximum(occ[chans], 1)]
        mu_p = pt.muP[k, chans, lv]
        u = draws[:, k, :len(chans)]
        wc = np.minimum(np.minimum(mu_c, 1.0 - mu_c), env.w_max)
        wp = np.minimum(np.minimum(mu_p, 1.0 - mu_p), env.w_max)
        xc = mu_c + wc * (2.0 * u[0] - 1.0)
        xp = mu_p + wp * (2.0 * u[1] - 1.0)
        ok = decodable[chans] & feas
        rewards[k] = float(np.sum(xc * xp * ok))
        expected[k] = float(np.sum(mu_c * mu_p * ok))
        allocation[k] = {m: (l if f else None) for m, l, f in zip(chans, lv, feas)}
    return UcbSlot(rewards, expected, decodable, allocation)


class UcbPopulation:
    """K independent UCB1 learners stepped together with array operations.

    Selection and update semantics are exactly those of :class:`UcbAgent`;
    this class only batches the K agents of one simulation.
    """

    def __init__(self, env: Environment, alpha: float = 2.0, tie_break: str = "lowest",
                 rng: Optional[np.random.Generator] = None):
        if tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")
        if tie_break == "random" and rng is None:
            raise ValueError("random tie-breaking needs an rng")
        sc = env.scenario
        if len(set(sc.plays.tolist())) != 1:
            raise ValueError("the composite-arm baseline needs the same N for every AP")
        self.env = env
        self.K, self.M, self.L, self.N = sc.K, sc.M, sc.L, int(sc.plays[0])
        self.arms = composite_arms(self.M, self.N, self.L)
        self.arm_chans = np.array([a[0] for a in self.arms], dtype=np.int64)   # (A, N)
        self.arm_levels = np.array([a[1] for a in self.arms], dtype=np.int64)  # (A, N)
        self.alpha = alpha
        self.tie_break = tie_break
        self.tie_rng = rng
        self.counts = np.zeros((self.K, len(self.arms)), dtype=np.int64)
        self.means = np.zeros((self.K, len(self.arms)))
        self.t = 0
        pt = env.power_table
        self._muP = pt.muP
        self._feasible = pt.feasible
        gam = np.asarray(sc.ladder.gammas)
        self._rate = sc.bandwidth_hz * np.log2(1.0 + gam)                     # (L,)
        self._true_power = (np.asarray(sc.levels.levels)[None, None, :]
                            / sc.gains[:, :, None] ** 2)                      # (K, M, L)
        self._kk = np.repeat(np.arange(self.K)[:, None], self.N, axis=1)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def select(self) -> np.ndarray:
        if self.t < self.n_arms:
            return np.full(self.K, self.t, dtype=np.int64)
        bonus = np.sqrt(self.alpha * math.log(self.t + 1) / self.counts)
        return _argmax_ties(self.means + bonus, self.tie_break, self.tie_rng)

    def step(self, rng: np.random.Generator):
        """Select, play and update one slot; returns (arms, rewards, expected, rate, power)."""
        sc = self.env.scenario
        arms = self.select()
        chans = self.arm_chans[arms]                   # (K, N)
        lv = self.arm_levels[arms]
        feas = self._feasible[self._kk, chans, lv]
        occ = np.bincount(chans[feas], minlength=self.M)
        key = (chans * self.L + lv)[feas]
        clash = np.bincount(key, minlength=self.M * self.L).reshape(self.M, self.L).max(axis=1) > 1
        decodable = (occ <= sc.beta) & ~clash
        mu_c = self.env.channel_table.mu[self._kk, chans, np.maximum(occ[chans], 1)]
        mu_p = self._muP[self._kk, chans, lv]
        ok = decodable[chans] & feas
        u = rng.random((2, self.K, self.N))
        wc = np.minimum(np.minimum(mu_c, 1.0 - mu_c), self.env.w_max)
        wp = np.minimum(np.minimum(mu_p, 1.0 - mu_p), self.env.w_max)
        xc = mu_c + wc * (2.0 * u[0] - 1.0)
        xp = mu_p + wp * (2.0 * u[1] - 1.0)
        rewards = (xc * xp * ok).sum(axis=1)
        expected = (mu_c * mu_p * ok).sum(axis=1)
        rate = float(self._rate[lv][ok].sum())
        power = float(self._true_power[self._kk, chans, lv][ok].sum())
        self.t += 1
        rows = np.arange(self.K)
        self.counts[rows, arms] += 1
        self.means[rows, arms] += (rewards - self.means[rows, arms]) / self.counts[rows, arms]
        return arms, rewards, expected, rate, power
