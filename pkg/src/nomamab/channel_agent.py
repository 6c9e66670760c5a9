"""Per-AP learner for the channel stage: explore, match, exploit in epochs."""
from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import matching
from .matching import MatchingState

log = logging.getLogger(__name__)

MAX_PHASE_LEN = 2 ** 62


class Phase(str, enum.Enum):
    EXPLORE = "explore"
    MATCH = "match"
    EXPLOIT = "exploit"


class ContractError(RuntimeError):
    """An agent operation was called in the wrong phase."""


@dataclass(frozen=True)
class EpochParams:
    explore_len: int
    c1: float = 3000.0
    c2: float = 5000.0
    delta: float = 0.0
    explore_mode: str = "constant"

    def __post_init__(self):
        if self.explore_mode not in ("constant", "decreasing"):
            raise ValueError(f"explore_mode must be 'constant' or 'decreasing', got {self.explore_mode!r}")
        if self.explore_len < 0 or self.c1 <= 0 or self.c2 <= 0 or self.delta < 0:
            raise ValueError("epoch constants must be positive")


@dataclass(frozen=True)
class EpochLengths:
    explore_len: int
    match_len: int
    exploit_len: int

    @property
    def total(self) -> int:
        return self.explore_len + self.match_len + self.exploit_len


def epoch_schedule(l: int, params: EpochParams) -> EpochLengths:
    if l < 1:
        raise ValueError("epochs are numbered from 1")
    if params.explore_mode == "constant":
        explore = params.explore_len
    else:
        explore = math.ceil(params.explore_len / l)
    match = math.ceil(params.c1 * l ** (1 + params.delta))
    if l >= 62 or params.c2 * 2.0 ** l > MAX_PHASE_LEN:
        log.warning("exploitation length c2*2^%d saturated at %d", l, MAX_PHASE_LEN)
        exploit = MAX_PHASE_LEN
    else:
        exploit = int(round(params.c2 * 2 ** l))
    return EpochLengths(int(explore), int(match), exploit)


def channel_actions(n_channels: int, n_plays: int) -> list[tuple[int, ...]]:
    """All N-subsets of channels in lexicographic order; list position is the action index."""
    return list(itertools.combinations(range(n_channels), n_plays))


def estimate_num_aps(collisions: int, slots: int, n_channels: int, beta: int) -> int:
    """Invert the non-sole-occupancy frequency b/T into an AP count, capped at beta*M."""
    if slots < 1:
        raise ValueError("need at least one exploration slot")
    cap = beta * n_channels
    if collisions >= slots:
        return cap
    if n_channels == 1:
        # every AP shares the only channel; any collision-free slot means K = 1
        return 1 if collisions == 0 else cap
    ratio = math.log((slots - collisions) / slots) / math.log(1.0 - 1.0 / n_channels)
    return int(min(max(round(ratio + 1.0), 1), cap))


class ChannelAgent:
    """One AP's private channel-stage state.

    Reward sums and counts are indexed ``[m, occupancy]`` with occupancy
    1..beta; column beta+1 counts observations above the NOMA cap (their
    mean is known to be zero and is never estimated).
    """

    def __init__(self, n_channels: int, n_plays: int, beta: int, epsilon: float,
                 rng: np.random.Generator, c_value: Optional[float] = None):
        if not 1 <= n_plays <= n_channels:
            raise ValueError("n_plays must lie in [1, n_channels]")
        self.M = n_channels
        self.N = n_plays
        self.beta = beta
        self.epsilon = epsilon
        self.rng = rng
        self.actions = channel_actions(n_channels, n_plays)
        self._action_index = {a: i for i, a in enumerate(self.actions)}
        self.W = np.zeros((n_channels, beta + 2))
        self.co = np.zeros((n_channels, beta + 2), dtype=np.int64)
        self.b = 0
        self.explored = 0
        self.mu_hat = np.zeros((n_channels, beta + 1))
        self.K_hat: Optional[int] = None
        self.epoch = 0
        self.phase: Optional[Phase] = None
        self.match_state: Optional[MatchingState] = None
        self.exploit_index: Optional[int] = None
        self.c_value = c_value

    # -- exploration ---------------------------------------------------
    def begin_epoch(self, l: int):
        self.epoch = l
        self.phase = Phase.EXPLORE

    def _require(self, phase: Phase):
        if self.phase is not phase:
            raise ContractError(f"operation needs phase {phase.value}, agent is in {self.phase}")

    def explore_step(self) -> int:
        self._require(Phase.EXPLORE)
        return int(self.rng.integers(self.M))

    def explore_batch(self, n: int) -> np.ndarray:
        """``n`` successive exploration choices, identical to n calls of :meth:`explore_step`."""
        self._require(Phase.EXPLORE)
        return self.rng.integers(self.M, size=n)

    def _slot(self, occupancy):
        return np.minimum(occupancy, self.beta + 1)

    def explore_update(self, channel: int, reward: float, occupancy: int):
        self._require(Phase.EXPLORE)
        j = min(occupancy, self.beta + 1)
        self.W[channel, j] += reward
        self.co[channel, j] += 1
        if occupancy > 1:
            self.b += 1
        self.explored += 1

    def explore_update_batch(self, channels, rewards, occupancies):
        self._require(Phase.EXPLORE)
        channels = np.asarray(channels)
        occupancies = np.asarray(occupancies)
        j = self._slot(occupancies)
        np.add.at(self.W, (channels, j), rewards)
        np.add.at(self.co, (channels, j), 1)
        self.b += int(np.count_nonzero(occupancies > 1))
        self.explored += len(channels)

    def finalize_exploration(self, slots: Optional[int] = None):
        """Turn the cumulative sums into mean and AP-count estimates."""
        slots = self.explored if slots is None else slots
        seen = self.co[:, 1:self.beta + 1] > 0
        est = np.divide(self.W[:, 1:self.beta + 1], self.co[:, 1:self.beta + 1],
                        out=self.mu_hat[:, 1:].copy(), where=seen)
        self.mu_hat[:, 1:] = np.clip(est, 0.0, 1.0)
        self.K_hat = estimate_num_aps(self.b, slots, self.M, self.beta)
        return self.mu_hat, self.K_hat

    def gain_estimates(self, mu_max: float) -> np.ndarray:
        """Amplitude gain estimate per channel from the sole-occupancy mean."""
        return self.mu_hat[:, 1] * mu_max

    # -- matching ------------------------------------------------------
    def u_max(self) -> float:
        top = np.sort(self.mu_hat[:, 1])[::-1][:self.N]
        return float(top.sum())

    @property
    def c(self) -> float:
        """Experimentation exponent: a fixed value if given, else K_hat * N."""
        if self.c_value is not None:
            return float(self.c_value)
        return float((self.K_hat or 1) * self.N)

    def begin_matching(self):
        self.phase = Phase.MATCH
        self.match_state = MatchingState(len(self.actions))
        self._u_max = self.u_max()

    def matching_choose(self) -> int:
        self._require(Phase.MATCH)
        return matching.choose(self.match_state, self.epsilon, self.c, self.rng)

    def utilities(self, channels: Sequence[int], occupancies: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.mu_hat[m, o]) if o <= self.beta else 0.0
                     for m, o in zip(channels, occupancies))

    def matching_transition(self, action: int, occupancies: Sequence[int]):
        """Apply the mood update for ``action`` given the observed channel occupancies."""
        self._require(Phase.MATCH)
        u = self.utilities(self.actions[action], occupancies)
        before = self.match_state.clamp_events
        matching.transition(self.match_state, action, u, self._u_max, self.epsilon, self.rng)
        if before == 0 and self.match_state.clamp_events:
            log.warning("utility sum exceeded u_max in epoch %d; acceptance clamped", self.epoch)

    # -- exploitation --------------------------------------------------
    def begin_exploitation(self) -> int:
        self._require(Phase.MATCH)
        self.phase = Phase.EXPLOIT
        self.exploit_index = self.exploit_action()
        return self.exploit_index

    def exploit_action(self) -> int:
        counts = self.match_state.content_counts if self.match_state is not None else np.zeros(0)
        best = matching.most_content_action(counts)
        if best is None:
            chans = tuple(sorted(np.argsort(-self.mu_hat[:, 1], kind="stable")[:self.N].tolist()))
            log.warning("no content slot in matching phase; falling back to best estimated channels %s", chans)
            return self._action_index[chans]
        return best

    def action_channels(self, index: int) -> tuple[int, ...]:
        return self.actions[index]

    def snapshot(self) -> dict:
        return {
            "epoch": self.epoch,
            "phase": self.phase.value if self.phase else None,
            "W": self.W.tolist(),
            "co": self.co.tolist(),
            "b": self.b,
            "explored": self.explored,
            "mu_hat": self.mu_hat.tolist(),
            "K_hat": self.K_hat,
            "matching": self.match_state.to_dict() if self.match_state else None,
            "exploit_index": self.exploit_index,
        }
