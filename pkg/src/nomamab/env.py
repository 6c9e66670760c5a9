"""Ground-truth environment for the two-stage allocation game.

The environment is the only place that knows channel gains and mean
rewards. Agents interact with it exclusively through feedback objects.
"""
from __future__ import annotations

import hashlib
import json
import logging
from math import comb
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .noma import PowerLevelSet, SinrLadder, power_levels, rate_for_sinr, transmit_power

log = logging.getLogger(__name__)

MW_TO_W = 1e-3


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """Network parameters; defaults follow the desk-scale reproduction setup."""

    n_aps: int = 4
    n_channels: int = 4
    n_plays: int | list[int] = 2
    beta: int = 2
    sinr_db: list[float] = field(default_factory=lambda: [24.0, 4.77])
    strict_ladder: bool = True
    cell_radius_m: float = 150.0
    min_distance_m: float = 10.0
    bandwidth_hz: float = 2.5e6
    noise_psd_mw_per_hz: float = 4e-18
    budgets_w: list[float] = field(default_factory=lambda: [1.0, 1.0, 2.0, 2.0])
    shadowing_db: float = 4.0
    w1: float | list[float] = 0.5

    def plays(self) -> np.ndarray:
        n = self.n_plays
        if isinstance(n, (list, tuple)):
            return np.asarray(n, dtype=int)
        return np.full(self.n_aps, int(n), dtype=int)

    def weights(self) -> np.ndarray:
        w = self.w1
        if isinstance(w, (list, tuple)):
            return np.asarray(w, dtype=float)
        return np.full(self.n_aps, float(w))

    def validate(self) -> list[dict]:
        """Return a list of ``{"field", "message"}`` problems (empty when valid)."""
        errs = []

        def bad(name, msg):
            errs.append({"field": name, "message": msg})

        if self.n_aps < 1:
            bad("n_aps", "must be >= 1")
        if self.n_channels < 1:
            bad("n_channels", "must be >= 1")
        if self.beta < 1:
            bad("beta", "must be >= 1")
        if errs:
            return errs
        plays = self.plays()
        if plays.shape != (self.n_aps,):
            bad("n_plays", f"expected {self.n_aps} entries")
        elif np.any(plays < 1) or np.any(plays > self.n_channels):
            bad("n_plays", "each AP must play between 1 and n_channels channels")
        elif self.beta * self.n_channels < plays.sum():
            bad("beta", f"beta*M = {self.beta * self.n_channels} < sum N_k = {int(plays.sum())}")
        if len(self.sinr_db) < self.beta:
            bad("sinr_db", f"need L >= beta, got L={len(self.sinr_db)}")
        try:
            SinrLadder.from_db(self.sinr_db, strict=self.strict_ladder)
        except ValueError as exc:
            bad("sinr_db", str(exc))
        if len(self.budgets_w) != self.n_aps:
            bad("budgets_w", f"expected {self.n_aps} entries")
        elif any(b < 0 for b in self.budgets_w):
            bad("budgets_w", "budgets must be non-negative")
        if not 0 < self.min_distance_m < self.cell_radius_m:
            bad("min_distance_m", "must satisfy 0 < min_distance < cell_radius")
        if self.bandwidth_hz <= 0:
            bad("bandwidth_hz", "must be positive")
        if self.noise_psd_mw_per_hz <= 0:
            bad("noise_psd_mw_per_hz", "must be positive")
        if self.shadowing_db < 0:
            bad("shadowing_db", "must be non-negative")
        w = self.weights()
        if w.shape != (self.n_aps,) or np.any((w < 0) | (w > 1)):
            bad("w1", "weights must lie in [0, 1], one per AP")
        return errs


def pathloss_db(d_km):
    """Macro-cell distance-dependent path loss 128.1 + 37.6 log10(d[km])."""
    return 128.1 + 37.6 * np.log10(np.asarray(d_km, dtype=float))


@dataclass
class NetworkScenario:
    config: ScenarioConfig
    positions: np.ndarray      # (K, 2) metres, MBS at origin
    gains: np.ndarray          # (K, M) amplitude gains h
    budgets: np.ndarray        # (K, M) watts
    ladder: SinrLadder
    levels: PowerLevelSet
    plays: np.ndarray          # (K,) N_k
    w1: np.ndarray             # (K,)

    @property
    def K(self) -> int:
        return self.gains.shape[0]

    @property
    def M(self) -> int:
        return self.gains.shape[1]

    @property
    def beta(self) -> int:
        return self.config.beta

    @property
    def L(self) -> int:
        return self.ladder.L

    @property
    def w2(self) -> np.ndarray:
        return 1.0 - self.w1

    @property
    def bandwidth_hz(self) -> float:
        return self.config.bandwidth_hz

    @property
    def noise_power(self) -> float:
        return self.levels.noise_power

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "positions": self.positions.tolist(),
            "gains": self.gains.tolist(),
            "budgets": self.budgets.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkScenario":
        cfg = ScenarioConfig(**d["config"])
        return _assemble(cfg, np.asarray(d["positions"], float),
                         np.asarray(d["gains"], float), np.asarray(d["budgets"], float))

    @classmethod
    def from_json(cls, text: str) -> "NetworkScenario":
        return cls.from_dict(json.loads(text))


def _assemble(cfg, positions, gains, budgets) -> NetworkScenario:
    ladder = SinrLadder.from_db(cfg.sinr_db, strict=cfg.strict_ladder)
    noise = cfg.noise_psd_mw_per_hz * MW_TO_W * cfg.bandwidth_hz
    if np.any(gains <= 0):
        raise ScenarioError("all channel gains must be positive")
    return NetworkScenario(cfg, positions, gains, budgets, ladder,
                           power_levels(ladder, noise), cfg.plays(), cfg.weights())


def generate_scenario(config: ScenarioConfig, seed) -> NetworkScenario:
    """Drop APs uniformly in the cell and derive per-channel gains.

    Gains follow the path-loss model plus i.i.d. log-normal shadowing per
    (AP, channel); ``shadowing_db=0`` gives frequency-flat gains.
    """
    errs = config.validate()
    if errs:
        raise ScenarioError("; ".join(f"{e['field']}: {e['message']}" for e in errs))
    rng = np.random.default_rng(seed)
    K, M = config.n_aps, config.n_channels
    r0, R = config.min_distance_m, config.cell_radius_m
    radius = np.sqrt(rng.uniform(r0 ** 2, R ** 2, size=K))
    angle = rng.uniform(0.0, 2 * np.pi, size=K)
    positions = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    pl = pathloss_db(radius / 1000.0)[:, None] + config.shadowing_db * rng.standard_normal((K, M))
    gains = np.sqrt(10.0 ** (-pl / 10.0))
    budgets = np.repeat(np.asarray(config.budgets_w, float)[:, None], M, axis=1)
    return _assemble(config, positions, gains, budgets)


def sample_uniform(mean, w_max: float, rng: np.random.Generator):
    """Draw from Uniform[mu-w, mu+w] with w = min(mu, 1-mu, w_max), elementwise."""
    mu = np.asarray(mean, dtype=float)
    w = np.minimum(np.minimum(mu, 1.0 - mu), w_max)
    u = rng.random(mu.shape)
    return mu + w * (2.0 * u - 1.0)


def table_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class ChannelRewardTable:
    """Mean channel rewards indexed ``mu[k, m, occupancy]``.

    The occupancy axis runs 0..K; column 0 and every column above beta are 0.
    """

    mu: np.ndarray
    mu_max: float
    beta: int

    @property
    def single(self) -> np.ndarray:
        return self.mu[:, :, 1]

    def mean(self, k, m, occupancy):
        return self.mu[k, m, occupancy]

    @property
    def digest(self) -> str:
        return table_digest(self.mu)


def build_channel_rewards(scenario: NetworkScenario) -> ChannelRewardTable:
    K, M, beta = scenario.K, scenario.M, scenario.beta
    mu_max = float(scenario.gains.max())
    single = scenario.gains / mu_max
    mu = np.zeros((K, M, K + 1))
    for occ in range(1, min(beta, K) + 1):
        mu[:, :, occ] = single / occ
    return ChannelRewardTable(mu, mu_max, beta)


@dataclass(frozen=True)
class PowerRewardTable:
    """Mean power-level rewards ``muP[k, m, l]`` with feasibility and transmit powers.

    Infeasible entries carry muP = 0 and are never offered to an agent.
    """

    muP: np.ndarray
    feasible: np.ndarray
    tx_power: np.ndarray
    inv_power_max: float

    @property
    def digest(self) -> str:
        return table_digest(self.muP)

    def feasible_levels(self, k: int, m: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.feasible[k, m]))

    def infeasible_pairs(self, schedule: dict[int, Sequence[int]]) -> list[tuple[int, int]]:
        """Scheduled (k, m) pairs whose feasible level set is empty."""
        return [(k, m) for m, aps in schedule.items() for k in aps if not self.feasible[k, m].any()]


def build_power_rewards(scenario: NetworkScenario, gain_estimates: np.ndarray) -> PowerRewardTable:
    """Reward trading SINR against transmit power, from the APs' own gain estimates."""
    h_hat = np.asarray(gain_estimates, dtype=float)
    v = np.asarray(scenario.levels.levels)
    p = transmit_power(v[None, None, :], h_hat[:, :, None])
    feasible = p <= scenario.budgets[:, :, None]
    inv = np.where(feasible, 1.0 / p, 0.0)
    inv_max = float(inv.max()) if feasible.any() else 1.0
    sinr_term = np.asarray(scenario.ladder.gammas) / scenario.ladder.gamma_max
    muP = (scenario.w1[:, None, None] * sinr_term[None, None, :]
           + scenario.w2[:, None, None] * inv / inv_max)
    muP = np.where(feasible, muP, 0.0)
    return PowerRewardTable(muP, feasible, p, inv_max)


@dataclass(frozen=True)
class ChannelFeedback:
    channels: tuple[int, ...]
    rewards: tuple[float, ...]
    occupancy: tuple[int, ...]


@dataclass(frozen=True)
class PowerFeedback:
    """Reward for the chosen level, or ``None`` when SIC failed (no feedback sent)."""

    level: int
    reward: Optional[float]


class Environment:
    """Steps the channel and power games and scores physical allocations."""

    def __init__(self, scenario: NetworkScenario, w_max: float = 0.05):
        if not 0 <= w_max <= 0.5:
            raise ValueError("w_max must lie in [0, 0.5]")
        self.scenario = scenario
        self.w_max = w_max
        self.channel_table = build_channel_rewards(scenario)
        self.power_table: Optional[PowerRewardTable] = None

    @property
    def mu_max(self) -> float:
        """Reward normaliser broadcast to every AP."""
        return self.channel_table.mu_max

    # -- channel stage -------------------------------------------------
    def occupancy(self, actions: Sequence[Sequence[int]]) -> np.ndarray:
        occ = np.zeros(self.scenario.M, dtype=int)
        for chans in actions:
            occ[list(chans)] += 1
        return occ

    def _check_actions(self, actions, n_plays=None):
        sc = self.scenario
        if len(actions) != sc.K:
            raise ValueError(f"expected {sc.K} actions, got {len(actions)}")
        for k, chans in enumerate(actions):
            want = sc.plays[k] if n_plays is None else n_plays
            if len(chans) != want or len(set(chans)) != len(chans):
                raise ValueError(f"AP {k} must select {want} distinct channels, got {chans}")
            if any(not 0 <= m < sc.M for m in chans):
                raise ValueError(f"AP {k} selected an unknown channel: {chans}")

    def step_channel(self, actions: Sequence[Sequence[int]], rng: np.random.Generator,
                     n_plays: Optional[int] = None) -> list[ChannelFeedback]:
        """One timeslot of the channel game. ``actions[k]`` lists AP k's channels.

        ``n_plays`` overrides the per-AP play count (exploration plays 1).
        """
        self._check_actions(actions, n_plays)
        occ = self.occupancy(actions)
        out = []
        for k, chans in enumerate(actions):
            chans = tuple(int(m) for m in chans)
            occs = tuple(int(occ[m]) for m in chans)
            means = self.channel_table.mu[k, list(chans), list(occs)]
            x = sample_uniform(means, self.w_max, rng)
            out.append(ChannelFeedback(chans, tuple(float(v) for v in x), occs))
        return out

    def explore_channel_batch(self, choices: np.ndarray, rng: np.random.Generator):
        """Vectorised single-channel plays: ``choices`` is (T, K).

        Returns sampled rewards and occupancies, both (T, K), drawn exactly as
        T successive calls of :meth:`step_channel` would model them.
        """
        choices = np.asarray(choices, dtype=int)
        T, K = choices.shape
        if K != self.scenario.K:
            raise ValueError("choices must have one column per AP")
        M = self.scenario.M
        counts = np.zeros((T, M), dtype=int)
        np.add.at(counts, (np.repeat(np.arange(T), K), choices.ravel()), 1)
        occ = np.take_along_axis(counts, choices, axis=1)
        means = self.channel_table.mu[np.arange(K)[None, :], choices, occ]
        return sample_uniform(means, self.w_max, rng), occ

    def expected_channel_reward(self, actions: Sequence[Sequence[int]]) -> np.ndarray:
        """Per-AP mean reward of a joint action (no sampling)."""
        occ = self.occupancy(actions)
        mu = self.channel_table.mu
        return np.array([sum(mu[k, m, occ[m]] for m in chans) for k, chans in enumerate(actions)])

    def expected_single_play_reward(self) -> float:
        """Mean system reward when every AP plays one uniformly random channel."""
        K, M = self.scenario.K, self.scenario.M
        mu = self.channel_table.mu
        q = 1.0 / M
        pmf = np.array([comb(K - 1, j) * q ** j * (1 - q) ** (K - 1 - j) for j in range(K)])
        total = 0.0
        for k in range(K):
            total += np.mean(mu[k, :, 1:K + 1] @ pmf)
        return float(total)

    # -- power stage ---------------------------------------------------
    def set_gain_estimates(self, gain_estimates: np.ndarray) -> PowerRewardTable:
        self.power_table = build_power_rewards(self.scenario, gain_estimates)
        return self.power_table

    def step_power(self, m: int, levels: dict[int, int], rng: np.random.Generator) -> dict[int, PowerFeedback]:
        """One timeslot of the level game on channel ``m``; ``levels`` maps AP -> level index."""
        pt = self.power_table
        if pt is None:
            raise RuntimeError("power rewards not built; call set_gain_estimates first")
        for k, l in levels.items():
            if not pt.feasible[k, m, l]:
                raise ValueError(f"level {l} is not feasible for AP {k} on channel {m}")
        chosen = list(levels.values())
        if len(set(chosen)) < len(chosen):
            return {k: PowerFeedback(l, None) for k, l in levels.items()}
        aps = list(levels)
        means = pt.muP[aps, m, chosen]
        x = sample_uniform(means, self.w_max, rng)
        return {k: PowerFeedback(l, float(v)) for k, l, v in zip(aps, chosen, x)}

    def explore_power_batch(self, m: int, aps: Sequence[int], levels: np.ndarray,
                            rng: np.random.Generator):
        """Vectorised level plays on channel ``m``: ``levels`` is (T, len(aps)).

        Returns sampled rewards (T, n) and a (T,) ``heard`` mask that is False
        on collision slots, where the reward entries carry no information.
        The per-slot distribution equals that of :meth:`step_power`.
        """
        pt = self.power_table
        if pt is None:
            raise RuntimeError("power rewards not built; call set_gain_estimates first")
        levels = np.asarray(levels, dtype=int)
        aps = np.asarray(aps, dtype=int)
        if not pt.feasible[aps[None, :], m, levels].all():
            raise ValueError(f"an infeasible level was played on channel {m}")
        srt = np.sort(levels, axis=1)
        heard = ~np.any(srt[:, 1:] == srt[:, :-1], axis=1)
        x = sample_uniform(pt.muP[aps[None, :], m, levels], self.w_max, rng)
        return x, heard

    def physical_metrics(self, allocation: dict[int, dict[int, Optional[int]]]) -> dict:
        """Rate, transmit power and energy efficiency of a channel+level allocation.

        ``allocation[k][m]`` is the level index AP k uses on channel m (``None``
        when it abstains). A channel is decodable when it carries at most beta
        transmitters on pairwise distinct levels. Only decodable transmissions
        count towards ``total_power``; ``attempted_power`` includes every
        transmission.
        """
        sc = self.scenario
        per_channel: dict[int, list[tuple[int, int]]] = {}
        for k, chans in allocation.items():
            for m, l in chans.items():
                if l is not None:
                    per_channel.setdefault(m, []).append((k, l))
        gammas = np.asarray(sc.ladder.gammas)
        v = np.asarray(sc.levels.levels)
        rate = power = attempted = 0.0
        for m, users in per_channel.items():
            ls = [l for _, l in users]
            ok = len(users) <= sc.beta and len(set(ls)) == len(ls)
            for k, l in users:
                p = v[l] / sc.gains[k, m] ** 2
                attempted += p
                if ok:
                    rate += rate_for_sinr(gammas[l], sc.bandwidth_hz)
                    power += p
        ee = rate / power if power > 0 else 0.0
        return {"sum_rate": rate, "total_power": power, "ee": ee, "attempted_power": attempted}
