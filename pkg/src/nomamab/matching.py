"""Trial-and-error matching dynamics over a finite action set.

Each learner carries a mood (content / discontent), a baseline action and
a baseline utility vector. Content learners replay their baseline except
with probability eps**c; discontent learners pick uniformly. After observing
utilities the mood is updated, and every slot that ends content increments
the counter of the action just played.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)


class Mood(str, enum.Enum):
    CONTENT = "C"
    DISCONTENT = "D"


@dataclass
class MatchingState:
    n_actions: int
    mood: Mood = Mood.DISCONTENT
    baseline_action: Optional[int] = None
    baseline_utility: Optional[tuple[float, ...]] = None
    content_counts: np.ndarray = field(default=None)
    clamp_events: int = 0

    def __post_init__(self):
        if self.content_counts is None:
            self.content_counts = np.zeros(self.n_actions, dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "mood": self.mood.value,
            "baseline_action": self.baseline_action,
            "baseline_utility": list(self.baseline_utility) if self.baseline_utility is not None else None,
            "content_counts": self.content_counts.tolist(),
            "clamp_events": self.clamp_events,
        }


def choose(state: MatchingState, epsilon: float, c: float, rng: np.random.Generator) -> int:
    n = state.n_actions
    if state.mood is Mood.CONTENT and state.baseline_action is not None:
        # one uniform draw decides experimenting; skip the second draw when n == 1
        if n > 1 and epsilon > 0 and rng.random() < epsilon ** c:
            other = int(rng.integers(n - 1))
            return other + (other >= state.baseline_action)
        return state.baseline_action
    return int(rng.integers(n))


def acceptance_probability(u_max: float, utility_sum: float, epsilon: float) -> tuple[float, bool]:
    """Probability eps**(u_max - sum u) of turning content; second item flags a clamp."""
    gap = u_max - utility_sum
    clamped = gap < 0
    if clamped:
        gap = 0.0
    if epsilon == 0:
        return (1.0 if gap == 0 else 0.0), clamped
    return epsilon ** gap, clamped


def transition(state: MatchingState, action: int, utilities: tuple[float, ...], u_max: float,
               epsilon: float, rng: np.random.Generator) -> MatchingState:
    """Update ``state`` in place after playing ``action`` and observing ``utilities``."""
    utilities = tuple(float(u) for u in utilities)
    if any(u == 0.0 for u in utilities):
        state.mood = Mood.DISCONTENT
        state.baseline_action, state.baseline_utility = action, utilities
    elif (state.mood is Mood.CONTENT and action == state.baseline_action
          and utilities == state.baseline_utility):
        pass
    else:
        p, clamped = acceptance_probability(u_max, sum(utilities), epsilon)
        if clamped:
            state.clamp_events += 1
            log.debug("utility sum %.6g exceeds u_max %.6g; acceptance clamped to 1",
                      sum(utilities), u_max)
        # a draw is consumed even when p == 1 so the RNG stream does not depend on p
        accept = rng.random() < p
        state.mood = Mood.CONTENT if accept else Mood.DISCONTENT
        state.baseline_action, state.baseline_utility = action, utilities
    if state.mood is Mood.CONTENT:
        state.content_counts[action] += 1
    return state


def most_content_action(counts: np.ndarray) -> Optional[int]:
    """Index with the largest count, lowest index on ties; ``None`` when all counts are zero."""
    counts = np.asarray(counts)
    if counts.size == 0 or counts.max() <= 0:
        return None
    return int(np.argmax(counts))
