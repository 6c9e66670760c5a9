"""Brute-force optimal assignments, estimation gaps, phase lengths and regret."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel_agent import channel_actions
from .env import ChannelRewardTable, PowerRewardTable

log = logging.getLogger(__name__)

DEFAULT_CAP = 10 ** 7
# sums within this distance of J1 count as ties with the optimum
TIE_TOL = 1e-12


class EnumerationCapExceeded(RuntimeError):
    pass


class TableMismatch(ValueError):
    pass


@dataclass
class ChannelSolution:
    actions: list[tuple[int, ...]]          # a*[k] = channels of AP k
    J1: float
    J2: float
    delta: float
    n_profiles: int
    n_optimal: int
    digest: str = ""

    @property
    def degenerate(self) -> bool:
        return self.delta <= 0

    def to_dict(self) -> dict:
        return {"actions": [list(a) for a in self.actions], "J1": self.J1, "J2": self.J2,
                "delta": self.delta, "n_profiles": self.n_profiles,
                "n_optimal": self.n_optimal, "digest": self.digest}


@dataclass
class PowerSolution:
    channel: int
    aps: tuple[int, ...]
    levels: dict[int, int]                  # a*P: AP -> level index
    J1: float
    J2: float
    delta: float
    n_profiles: int
    digest: str = ""

    def to_dict(self) -> dict:
        return {"channel": self.channel, "aps": list(self.aps),
                "levels": {str(k): v for k, v in self.levels.items()},
                "J1": self.J1, "J2": self.J2, "delta": self.delta,
                "n_profiles": self.n_profiles, "digest": self.digest}


def _best_and_second(values: np.ndarray) -> tuple[int, float, float, int]:
    best = int(np.argmax(values))
    J1 = float(values[best])
    ties = values >= J1 - TIE_TOL
    n_opt = int(ties.sum())
    below = values[~ties]
    # a tied optimum is its own runner-up, so the gap collapses to zero
    J2 = J1 if n_opt > 1 or not below.size else float(below.max())
    return best, J1, J2, n_opt


def solve_channel(table: ChannelRewardTable, n_plays: Sequence[int] | int, n_channels: Optional[int] = None,
                  cap: int = DEFAULT_CAP, chunk: int = 1 << 16) -> ChannelSolution:
    """Exhaustive search for the sum-reward-optimal joint channel action.

    The profile space is enumerated in mixed-radix order (AP 0 most
    significant, each AP's actions lexicographic); ties go to the first
    profile in that order.
    """
    mu = table.mu
    K = mu.shape[0]
    M = mu.shape[1] if n_channels is None else n_channels
    plays = np.full(K, n_plays, dtype=int) if np.isscalar(n_plays) else np.asarray(n_plays, int)
    acts = [channel_actions(M, int(n)) for n in plays]
    sizes = [len(a) for a in acts]
    total = math.prod(sizes)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} channel profiles exceed the enumeration cap {cap}")
    ind = []
    for a in acts:
        x = np.zeros((len(a), M), dtype=np.int64)
        for i, chans in enumerate(a):
            x[i, list(chans)] = 1
        ind.append(x)
    values = np.empty(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        ids = np.unravel_index(idx, sizes)
        occ = sum(ind[k][ids[k]] for k in range(K))
        v = np.zeros(len(idx))
        cols = np.arange(M)[None, :]
        for k in range(K):
            v += (ind[k][ids[k]] * mu[k][cols, occ]).sum(axis=1)
        values[idx] = v
    best, J1, J2, n_opt = _best_and_second(values)
    if n_opt > 1:
        log.info("%d joint channel actions tie for the optimum", n_opt)
    best_ids = np.unravel_index(best, sizes)
    delta = (J1 - J2) / (2.0 * plays.sum())
    if delta <= 0:
        log.warning("channel instance has no reward gap (J1 == J2); delta = 0")
    return ChannelSolution([acts[k][int(best_ids[k])] for k in range(K)], J1, J2, delta,
                           total, n_opt, table.digest)


def solve_power(table: PowerRewardTable, channel: int, aps: Sequence[int],
                cap: int = DEFAULT_CAP) -> PowerSolution:
    """Exhaustive search over level profiles of the APs scheduled on ``channel``.

    Profiles with a repeated level score zero.
    """
    aps = tuple(int(k) for k in aps)
    if not aps:
        return PowerSolution(channel, aps, {}, 0.0, 0.0, 0.0, 0, table.digest)
    spaces = [table.feasible_levels(k, channel) for k in aps]
    total = math.prod(len(s) for s in spaces)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} level profiles exceed the enumeration cap {cap}")
    if total == 0:
        log.warning("an AP on channel %d has no feasible level", channel)
        return PowerSolution(channel, aps, {}, 0.0, 0.0, 0.0, 0, table.digest)
    profiles = list(itertools.product(*spaces))
    values = np.array([
        sum(table.muP[k, channel, l] for k, l in zip(aps, prof)) if len(set(prof)) == len(prof) else 0.0
        for prof in profiles])
    best, J1, J2, _ = _best_and_second(values)
    delta = (J1 - J2) / (2.0 * len(aps))
    return PowerSolution(channel, aps, dict(zip(aps, profiles[best])), J1, J2, delta, total, table.digest)


def schedule_from_actions(actions: Sequence[Sequence[int]], n_channels: int) -> dict[int, tuple[int, ...]]:
    """Channel -> APs scheduled on it."""
    sched = {m: [] for m in range(n_channels)}
    for k, chans in enumerate(actions):
        for m in chans:
            sched[m].append(k)
    return {m: tuple(v) for m, v in sched.items()}


@dataclass
class PhaseLengths:
    T_mu_hat: int
    T_P0: int
    T_K_hat: int
    T_C0: int
    T_h: Optional[float] = None


def t_mu_hat(K: int, M: int, beta: int, delta_M: float) -> int:
    if M < 2:
        raise ValueError("exploration length is undefined for M = 1")
    if delta_M <= 0:
        raise ValueError("delta_M must be positive")
    return math.ceil(2 * M * math.exp((K - 1) / (M - 1)) / (delta_M ** 2 * (M - 1) ** (1 - beta)))


def t_power(L: int, beta: int, delta_P: float) -> int:
    if L < 2:
        raise ValueError("power exploration length is undefined for L = 1")
    if delta_P <= 0:
        raise ValueError("delta_P must be positive")
    return math.ceil(2 * L * math.exp((beta - 1) / (L - 1)) / delta_P ** 2)


def t_k_hat(M: int, beta: int, eta: float) -> int:
    if M < 2:
        raise ValueError("AP-count exploration length is undefined for M = 1")
    if not 0 < eta <= 2:
        raise ValueError("eta must lie in (0, 2]")
    if eta == 2:
        log.warning("eta = 2 makes the AP-count exploration length zero")
    return math.ceil(2.08 * math.log(2 / eta) * M ** 2 * math.exp(2 * (M * beta - 1) / (M - 1)))


def t_h(K: int, M: int, beta: int, delta_M: float, gamma: float) -> float:
    """Cumulative exploration horizon over all epochs for error budget ``gamma``."""
    base = 2 * M * math.exp((K - 1) / (M - 1)) / (delta_M ** 2 * (M - 1) ** (1 - beta))
    return base * math.log(4 * K * M * beta / gamma)


def phase_length_bounds(K: int, M: int, beta: int, L: int, delta: float, delta_P: float,
                        eta: float, gamma: Optional[float] = None) -> PhaseLengths:
    tm = t_mu_hat(K, M, beta, delta)
    tp = t_power(L, beta, delta_P)
    tk = t_k_hat(M, beta, eta)
    th = t_h(K, M, beta, delta, gamma) if gamma else None
    return PhaseLengths(tm, tp, tk, max(tm, tk), th)


# -- regret ----------------------------------------------------------------

def channel_slot_rewards(table: ChannelRewardTable, actions: np.ndarray) -> np.ndarray:
    """Expected system reward per slot for joint actions given as (T, K, M) 0/1 arrays."""
    actions = np.asarray(actions)
    occ = actions.sum(axis=1)                                   # (T, M)
    K, M = actions.shape[1], actions.shape[2]
    mu = table.mu
    per = mu[np.arange(K)[None, :, None], np.arange(M)[None, None, :], occ[:, None, :]]
    return (actions * per).sum(axis=(1, 2))


def regret_curve(optimum: float, slot_rewards: np.ndarray) -> np.ndarray:
    """Cumulative gap between the optimum and the achieved expected reward."""
    return np.cumsum(optimum - np.asarray(slot_rewards, dtype=float))


def regret_accumulate(slot_rewards: np.ndarray, optimum: float, trace_digest: str,
                      oracle_digest: str) -> np.ndarray:
    """Regret of a trace against an oracle solved on the same reward tables."""
    if trace_digest != oracle_digest:
        raise TableMismatch(f"trace tables {trace_digest} differ from oracle tables {oracle_digest}")
    return regret_curve(optimum, slot_rewards)


# -- theoretical bounds ------------------------------------------------------

def epoch_count_bound(T, c2: float):
    """Upper bound on the number of epochs fitting in T slots (base-2 logarithm)."""
    return np.log2(np.asarray(T, dtype=float) / c2 + 2.0)


@dataclass
class BoundCurves:
    T: np.ndarray
    channel_explore: np.ndarray
    channel_match: np.ndarray
    power_explore: np.ndarray
    power_match: np.ndarray
    exploit: str = "constant (unknown A_3)"
    envelope: np.ndarray = field(default=None)

    def as_columns(self) -> dict:
        return {"T": self.T, "R_C1": self.channel_explore, "R_C2": self.channel_match,
                "R_P1": self.power_explore, "R_P2": self.power_match, "envelope": self.envelope}


def regret_bound_curves(K: int, N: int, T_C0: float, T_P0: float, c1: float, c2: float,
                        delta: float, T) -> BoundCurves:
    """Closed-form caps on exploration and matching regret up to horizon(s) T.

    The exploitation terms are bounded only by an unknown constant and are
    reported as text rather than a number.
    """
    T = np.atleast_1d(np.asarray(T, dtype=float))
    lc = epoch_count_bound(T, c2)
    ce = K * N * T_C0 * lc
    cm = K * N * c1 * lc ** (2 + delta)
    pe = K * T_P0 * lc
    pm = K * c1 * lc ** (2 + delta)
    return BoundCurves(T, ce, cm, pe, pm, envelope=ce + cm + pe + pm)
