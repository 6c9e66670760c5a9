"""Post-processing: log-square regret fits, cross-seed aggregation, estimation error."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class LogSquareFit:
    a: float
    r2: float
    t_min: float
    n_points: int
    band: Optional[tuple[float, float]] = None
    within_band: Optional[bool] = None
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"a": self.a, "r2": self.r2, "t_min": self.t_min, "n_points": self.n_points,
                "band": list(self.band) if self.band else None, "within_band": self.within_band,
                "violations": self.violations}


def fit_log_square(t, regret, t_min: float = 0.0, band: Optional[tuple[float, float]] = None,
                   base: float = np.e, n_check: int = 50, min_points: int = 100,
                   monotone_tol: float = 1e-9) -> LogSquareFit:
    """Least-squares fit of ``regret(t) ~ a * log(t)^2`` over the tail ``t > t_min``.

    R^2 is the usual centred coefficient of determination of the
    through-origin model. With ``band=(lo, hi)`` the curve is also checked
    against ``lo*log(t)^2 <= regret <= hi*log(t)^2`` at ``n_check``
    log-spaced tail points.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(regret, dtype=float)
    if t.shape != y.shape:
        raise DataError("t and regret must have the same length")
    drops = np.diff(y) < -monotone_tol * max(1.0, float(np.abs(y).max(initial=0.0)))
    if np.any(drops):
        raise DataError(f"regret curve decreases at t = {t[1:][drops][:5].tolist()}")
    tail = t > max(t_min, 1.0)
    if tail.sum() < min_points:
        raise DataError(f"need at least {min_points} points past t_min, got {int(tail.sum())}")
    x = (np.log(t[tail]) / np.log(base)) ** 2
    yt = y[tail]
    a = float(x @ yt / (x @ x))
    ss_res = float(np.sum((yt - a * x) ** 2))
    ss_tot = float(np.sum((yt - yt.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    fit = LogSquareFit(a, r2, float(t_min), int(tail.sum()))
    if band is not None:
        lo, hi = band
        tt = t[tail]
        idx = np.unique(np.searchsorted(tt, np.geomspace(tt[0], tt[-1], n_check)).clip(0, len(tt) - 1))
        xs = x[idx]
        ys = yt[idx]
        bad = (ys < lo * xs) | (ys > hi * xs)
        fit.band = (lo, hi)
        fit.within_band = not bool(bad.any())
        fit.violations = [{"t": float(tt[i]), "regret": float(ys[j]), "ratio": float(ys[j] / xs[j])}
                          for j, i in enumerate(idx) if bad[j]]
    return fit


def aggregate(runs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mean and population std across equally long runs."""
    if len(runs) < 1:
        raise DataError("need at least one run")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise DataError(f"runs have different lengths: {sorted(lengths)}")
    arr = np.vstack([np.asarray(r, dtype=float) for r in runs])
    return arr.mean(axis=0), arr.std(axis=0)


def estimation_error(mu_hat: np.ndarray, mu: np.ndarray) -> float:
    """Mean absolute error of mean-reward estimates on the normalised [0, 1] scale."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.mean(np.abs(mu_hat - mu)))
