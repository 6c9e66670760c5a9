"""Uplink NOMA power-domain math: SINR ladders, received power levels, SIC checks.

Level indices are 0-based throughout: index 0 is the highest SINR target
(decoded first by SIC), index L-1 the lowest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    return 10.0 * np.log10(np.asarray(value, dtype=float))


@dataclass(frozen=True)
class SinrLadder:
    """L linear SINR targets sorted by decreasing value.

    With ``strict=False`` equal neighbouring targets are accepted; the
    closed-form stability bound then no longer applies and only the direct
    received-power check is used.
    """

    gammas: tuple[float, ...]
    strict: bool = True

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        object.__setattr__(self, "gammas", g)
        if len(g) < 1:
            raise ValueError("SINR ladder needs at least one level")
        if any(not math.isfinite(x) or x <= 0 for x in g):
            raise ValueError(f"SINR targets must be finite and positive, got {g}")
        for a, b in zip(g, g[1:]):
            if a < b or (self.strict and a == b):
                raise ValueError(f"SINR targets must be descending, got {g}")

    @classmethod
    def from_db(cls, gammas_db: Sequence[float], strict: bool = True) -> "SinrLadder":
        return cls(tuple(float(x) for x in db_to_linear(list(gammas_db))), strict=strict)

    @property
    def L(self) -> int:
        return len(self.gammas)

    @property
    def gamma_max(self) -> float:
        return self.gammas[0]


@dataclass(frozen=True)
class PowerLevelSet:
    """Received power levels (W) matching a ladder, plus the noise power N0*Bc."""

    levels: tuple[float, ...]
    noise_power: float

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if any(v <= 0 for v in lv):
            raise ValueError("received power levels must be positive")
        if any(a <= b for a, b in zip(lv, lv[1:])):
            raise ValueError("received power levels must be strictly descending")

    @property
    def L(self) -> int:
        return len(self.levels)

    def interference(self) -> np.ndarray:
        """Residual interference V_l = sum of all weaker levels, per level."""
        v = np.asarray(self.levels)
        tail = np.cumsum(v[::-1])[::-1]
        return np.append(tail[1:], 0.0)

    def sinr(self) -> np.ndarray:
        """SINR each level achieves when every weaker level is also occupied."""
        return np.asarray(self.levels) / (self.interference() + self.noise_power)


def rate_for_sinr(gamma_linear, bandwidth_hz):
    """Shannon rate B*log2(1+gamma) in bit/s. Accepts scalars or arrays."""
    g = np.asarray(gamma_linear, dtype=float)
    b = np.asarray(bandwidth_hz, dtype=float)
    if np.any(g < 0):
        raise ValueError("SINR must be non-negative")
    if np.any(b <= 0):
        raise ValueError("bandwidth must be positive")
    out = b * np.log2(1.0 + g)
    return float(out) if out.ndim == 0 else out


def power_levels(ladder: SinrLadder, noise_power: float) -> PowerLevelSet:
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    g = np.asarray(ladder.gammas)
    # backward recursion from the weakest level: v_L = Gamma_L * N0Bc
    levels = np.empty_like(g)
    prod = 1.0
    for l in range(ladder.L - 1, -1, -1):
        levels[l] = g[l] * noise_power * prod
        prod *= g[l] + 1.0
    return PowerLevelSet(tuple(levels), float(noise_power))


@dataclass(frozen=True)
class SicReport:
    """Outcome of a SIC stability check, with both forms of the condition.

    ``formula_margins[l]`` is Gamma_l minus the closed-form lower bound;
    ``direct_margins[l]`` is v_l - V_l in units of N0*Bc. Both have L-1
    entries (the weakest level carries no condition).
    """

    stable: bool
    formula_ok: bool
    direct_ok: bool
    formula_margins: tuple[float, ...] = field(default=())
    direct_margins: tuple[float, ...] = field(default=())

    def __bool__(self) -> bool:
        return self.stable


def sic_formula_bounds(ladder: SinrLadder) -> np.ndarray:
    """Right-hand side 2^(L-l-1)*Gamma_L / prod_{l'>l}(Gamma_l'+1) for l < L-1 (0-based)."""
    g = np.asarray(ladder.gammas)
    L = ladder.L
    out = np.empty(L - 1)
    for l in range(L - 1):
        out[l] = 2.0 ** (L - l - 2) * g[-1] / np.prod(g[l + 1:] + 1.0)
    return out


def check_sic_stability(ladder: SinrLadder) -> SicReport:
    """Check that every level's power exceeds the sum of all weaker levels.

    For strict ladders both the closed-form SINR bound and the direct
    v_l > V_l comparison must hold; non-strict ladders use the direct check
    alone.
    """
    if ladder.L == 1:
        return SicReport(True, True, True)
    g = np.asarray(ladder.gammas)
    formula_margins = g[:-1] - sic_formula_bounds(ladder)
    # v scales linearly with N0*Bc, so unit noise gives margins in noise units
    levels = power_levels(ladder, 1.0)
    direct_margins = (np.asarray(levels.levels) - levels.interference())[:-1]
    formula_ok = bool(np.all(formula_margins > 0))
    direct_ok = bool(np.all(direct_margins > 0))
    stable = (formula_ok and direct_ok) if ladder.strict else direct_ok
    return SicReport(stable, formula_ok, direct_ok,
                     tuple(float(x) for x in formula_margins),
                     tuple(float(x) for x in direct_margins))


def transmit_power(v_l, gain):
    """Transmit power v_l / gain**2 for an amplitude gain; zero gain gives inf (infeasible)."""
    v = np.asarray(v_l, dtype=float)
    h = np.asarray(gain, dtype=float)
    if np.any(v <= 0):
        raise ValueError("received power level must be positive")
    if np.any(h < 0):
        raise ValueError("gain estimate must be non-negative")
    with np.errstate(divide="ignore"):
        out = np.where(h > 0, v / np.where(h > 0, h, 1.0) ** 2, np.inf)
    return float(out) if out.ndim == 0 else out


def feasible_power_levels(level_set: PowerLevelSet, gain: float, budget: float) -> tuple[int, ...]:
    """Indices of levels whose required transmit power fits the budget (may be empty)."""
    if budget < 0:
        raise ValueError("power budget must be non-negative")
    if gain <= 0:
        return ()
    p = transmit_power(np.asarray(level_set.levels), gain)
    return tuple(int(i) for i in np.flatnonzero(p <= budget))
