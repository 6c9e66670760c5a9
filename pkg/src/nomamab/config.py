"""Run configuration: parsing, defaults and validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from .env import ScenarioConfig


class ConfigError(ValueError):
    """Invalid configuration; ``report`` is a machine-readable list of problems."""

    def __init__(self, report: list[dict]):
        self.report = report
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in report))

    def to_json(self) -> str:
        return json.dumps({"error": "invalid configuration", "problems": self.report}, indent=2)


@dataclass
class AlgorithmConfig:
    explore_len: Union[int, str] = "auto"
    explore_cap: int = 100_000
    power_explore_len: Union[int, str] = "auto"
    power_explore_cap: int = 10_000
    c1: float = 3000.0
    c2: float = 5000.0
    delta: float = 0.0
    epsilon: float = 5e-5
    c_policy: Union[str, float] = "KN"
    explore_mode: str = "constant"
    w_max: float = 0.05
    eta: float = 0.05
    gamma: Optional[float] = None
    ucb_alpha: float = 2.0
    ucb_tie_break: str = "lowest"


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    horizon_channel: int = 600_000
    horizon_power: int = 400_000
    horizon_ucb: Optional[int] = None
    seeds: list[int] = field(default_factory=lambda: [0])
    method: str = "proposed"
    out_dir: str = "runs"
    trace_stride: int = 100
    converged_fraction: float = 0.1
    realized_regret: bool = False
    slot_seconds: float = 62.5e-6

    @property
    def ucb_horizon(self) -> int:
        return self.horizon_ucb if self.horizon_ucb is not None else self.horizon_channel + self.horizon_power

    def validate(self) -> list[dict]:
        errs = [dict(e, field=f"scenario.{e['field']}") for e in self.scenario.validate()]

        def bad(name, msg):
            errs.append({"field": name, "message": msg})

        a = self.algorithm
        for name in ("explore_len", "power_explore_len"):
            v = getattr(a, name)
            if not (v == "auto" or (isinstance(v, int) and not isinstance(v, bool) and v >= 1)):
                bad(f"algorithm.{name}", "must be 'auto' or a positive integer")
        if a.explore_cap < 1 or a.power_explore_cap < 1:
            bad("algorithm.explore_cap", "caps must be positive")
        if a.c1 <= 0 or a.c2 <= 0:
            bad("algorithm.c1", "c1 and c2 must be positive")
        if a.delta < 0:
            bad("algorithm.delta", "must be non-negative")
        if not 0 <= a.epsilon < 1:
            bad("algorithm.epsilon", "must lie in [0, 1)")
        if not (a.c_policy == "KN" or (isinstance(a.c_policy, (int, float)) and a.c_policy > 0)):
            bad("algorithm.c_policy", "must be 'KN' or a positive number")
        if a.explore_mode not in ("constant", "decreasing"):
            bad("algorithm.explore_mode", "must be 'constant' or 'decreasing'")
        if not 0 <= a.w_max <= 0.5:
            bad("algorithm.w_max", "must lie in [0, 0.5]")
        if not 0 < a.eta < 2:
            bad("algorithm.eta", "must lie in (0, 2)")
        if a.gamma is not None and not 0 < a.gamma < 1:
            bad("algorithm.gamma", "must lie in (0, 1)")
        if a.ucb_alpha <= 0:
            bad("algorithm.ucb_alpha", "must be positive")
        if a.ucb_tie_break not in ("lowest", "random"):
            bad("algorithm.ucb_tie_break", "must be 'lowest' or 'random'")
        if self.scenario.n_channels < 2 and (a.explore_len == "auto"):
            bad("algorithm.explore_len", "automatic length needs at least 2 channels")
        if len(self.scenario.sinr_db) < 2 and a.power_explore_len == "auto":
            bad("algorithm.power_explore_len", "automatic length needs at least 2 SINR levels")
        if self.horizon_channel < 1 or self.horizon_power < 0:
            bad("horizon_channel", "horizons must be positive")
        if self.horizon_ucb is not None and self.horizon_ucb < 1:
            bad("horizon_ucb", "must be positive")
        if not self.seeds:
            bad("seeds", "need at least one seed")
        elif any(not isinstance(s, int) or s < 0 or s >= 2 ** 64 for s in self.seeds):
            bad("seeds", "seeds must be integers in [0, 2^64)")
        if self.method not in ("proposed", "ucb"):
            bad("method", "must be 'proposed' or 'ucb'")
        if self.trace_stride < 1:
            bad("trace_stride", "must be >= 1")
        if not 0 < self.converged_fraction <= 1:
            bad("converged_fraction", "must lie in (0, 1]")
        return errs

    def check(self) -> "RunConfig":
        errs = self.validate()
        if errs:
            raise ConfigError(errs)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        problems = []
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                problems.append({"field": key, "message": "unknown field"})
        sc = d.pop("scenario", {}) or {}
        al = d.pop("algorithm", {}) or {}
        for sub, klass, prefix in ((sc, ScenarioConfig, "scenario"), (al, AlgorithmConfig, "algorithm")):
            names = {f.name for f in fields(klass)}
            problems += [{"field": f"{prefix}.{k}", "message": "unknown field"} for k in sub if k not in names]
        if problems:
            raise ConfigError(problems)
        cfg = cls(scenario=ScenarioConfig(**sc), algorithm=AlgorithmConfig(**al),
                  **{k: v for k, v in d.items() if k in known})
        return cfg

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([{"field": "<file>", "message": f"not valid JSON: {exc}"}]) from exc
        return cls.from_dict(data)


def parse_seeds(spec: str) -> list[int]:
    """Parse ``"7"``, ``"0..9"`` or ``"1,4,5"`` into a seed list."""
    out = []
    try:
        for part in spec.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError as exc:
        raise ConfigError([{"field": "seeds", "message": f"cannot parse {spec!r}"}]) from exc
    return out
