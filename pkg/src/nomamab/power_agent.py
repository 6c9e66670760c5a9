"""Per-AP, per-channel learner for the power-level game.

Same explore / match / exploit structure as the channel stage, over the
AP's feasible power levels, with a single play and zero reward on a level
collision. Silent slots (collisions) carry no sample, so they are counted
but kept out of the mean estimates.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from . import matching
from .channel_agent import ContractError, Phase
from .matching import MatchingState

log = logging.getLogger(__name__)


class PowerAgent:
    def __init__(self, channel: int, feasible: Sequence[int], n_levels: int, occupancy: int,
                 epsilon: float, rng: np.random.Generator):
        self.channel = channel
        self.levels = tuple(int(l) for l in feasible)
        self.L = n_levels
        self.K_m = occupancy
        self.epsilon = epsilon
        self.rng = rng
        self.sums = np.zeros(n_levels)
        self.counts = np.zeros(n_levels, dtype=np.int64)
        self.silent = np.zeros(n_levels, dtype=np.int64)
        self.muP_hat = np.zeros(n_levels)
        self.epoch = 0
        self.phase: Optional[Phase] = None
        self.match_state: Optional[MatchingState] = None
        self.exploit_level: Optional[int] = None
        if not self.levels:
            log.warning("AP has no feasible power level on channel %d; it abstains", channel)

    @property
    def abstains(self) -> bool:
        return not self.levels

    def _require(self, phase: Phase):
        if self.phase is not phase:
            raise ContractError(f"operation needs phase {phase.value}, agent is in {self.phase}")

    def begin_epoch(self, l: int):
        self.epoch = l
        self.phase = Phase.EXPLORE

    def explore_step(self) -> Optional[int]:
        self._require(Phase.EXPLORE)
        if self.abstains:
            return None
        return self.levels[int(self.rng.integers(len(self.levels)))]

    def explore_batch(self, n: int) -> Optional[np.ndarray]:
        self._require(Phase.EXPLORE)
        if self.abstains:
            return None
        return np.asarray(self.levels)[self.rng.integers(len(self.levels), size=n)]

    def explore_update(self, level: int, reward: Optional[float]):
        self._require(Phase.EXPLORE)
        if reward is None:
            self.silent[level] += 1
        else:
            self.sums[level] += reward
            self.counts[level] += 1

    def explore_update_batch(self, levels, rewards, heard):
        """``heard[i]`` is False where slot i was silent (its reward entry is ignored)."""
        self._require(Phase.EXPLORE)
        levels = np.asarray(levels)
        heard = np.asarray(heard, dtype=bool)
        np.add.at(self.sums, levels[heard], np.asarray(rewards)[heard])
        np.add.at(self.counts, levels[heard], 1)
        np.add.at(self.silent, levels[~heard], 1)

    def finalize_exploration(self):
        seen = self.counts > 0
        np.divide(self.sums, self.counts, out=self.muP_hat, where=seen)
        np.clip(self.muP_hat, 0.0, 1.0, out=self.muP_hat)
        return self.muP_hat

    def u_max(self) -> float:
        if self.abstains:
            return 0.0
        return float(self.muP_hat[list(self.levels)].max())

    def begin_matching(self):
        self.phase = Phase.MATCH
        self.match_state = MatchingState(len(self.levels))
        self._u_max = self.u_max()

    def matching_choose(self) -> Optional[int]:
        """Level to play this matching frame (``None`` when abstaining)."""
        self._require(Phase.MATCH)
        if self.abstains:
            return None
        idx = matching.choose(self.match_state, self.epsilon, float(self.K_m), self.rng)
        return self.levels[idx]

    def matching_transition(self, level: int, reward: Optional[float]):
        """Mood update after playing ``level``; ``reward is None`` means a collision."""
        self._require(Phase.MATCH)
        u = 0.0 if reward is None else float(self.muP_hat[level])
        matching.transition(self.match_state, self.levels.index(level), (u,), self._u_max,
                            self.epsilon, self.rng)

    def begin_exploitation(self) -> Optional[int]:
        self._require(Phase.MATCH)
        self.phase = Phase.EXPLOIT
        self.exploit_level = self.exploit_action()
        return self.exploit_level

    def exploit_action(self) -> Optional[int]:
        if self.abstains:
            return None
        counts = self.match_state.content_counts if self.match_state is not None else np.zeros(0)
        best = matching.most_content_action(counts)
        if best is None:
            level = max(self.levels, key=lambda l: (self.muP_hat[l], -l))
            log.warning("no content slot on channel %d; falling back to level %d", self.channel, level)
            return level
        return self.levels[best]

    def snapshot(self) -> dict:
        return {
            "channel": self.channel,
            "levels": list(self.levels),
            "K_m": self.K_m,
            "epoch": self.epoch,
            "phase": self.phase.value if self.phase else None,
            "sums": self.sums.tolist(),
            "counts": self.counts.tolist(),
            "silent": self.silent.tolist(),
            "muP_hat": self.muP_hat.tolist(),
            "matching": self.match_state.to_dict() if self.match_state else None,
            "exploit_level": self.exploit_level,
        }
