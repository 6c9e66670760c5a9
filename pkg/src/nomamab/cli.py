"""Command-line entry point: run, aggregate, fit, oracle, bounds."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_seeds
from .env import Environment, ScenarioError, generate_scenario
from .harness import SCENARIO, dump_json, run_many, seed_streams
from .metrics import DataError, aggregate, fit_log_square
from .oracle import (EnumerationCapExceeded, phase_length_bounds, regret_bound_curves,
                     schedule_from_actions, solve_channel, solve_power)

log = logging.getLogger("nomamab")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "explore_mode", None):
        cfg.algorithm.explore_mode = args.explore_mode
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "seeds", None):
        cfg.seeds = parse_seeds(args.seeds)
    elif getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    return cfg.check()


def cmd_run(args):
    cfg = _load_config(args)
    summaries = run_many(cfg, jobs=args.jobs)
    for s in summaries:
        line = {"seed": s["seed"], "method": s["method"], "ee": s["converged"]["ee"]}
        if s["method"] == "proposed":
            line.update(channel_optimal=s["channel"]["frozen_optimal"],
                        converged_epoch=s["channel"]["converged_epoch"])
        print(json.dumps(line))
    return 0


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    return header, np.array([[float(x) if x != "" else np.nan for x in r] for r in body]).reshape(-1, len(header))


def cmd_aggregate(args):
    root = Path(args.runs)
    files = sorted(root.glob(f"seed_*/{args.file}"))
    if not files:
        raise DataError(f"no {args.file} under {root}/seed_*")
    tables = [_read_csv(f) for f in files]
    header = tables[0][0]
    if any(h != header for h, _ in tables):
        raise DataError("runs have different columns")
    t = tables[0][1][:, 0]
    cols = {"t": t}
    for j, name in enumerate(header[1:], start=1):
        mean, std = aggregate([data[:, j] for _, data in tables])
        if any(not np.array_equal(data[:, 0], t) for _, data in tables):
            raise DataError("runs have different time axes")
        cols[f"{name}_mean"], cols[f"{name}_std"] = mean, std
    out = Path(args.output) if args.output else root / f"aggregate_{args.file}"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([f"{x:.10g}" for x in row])
    print(json.dumps({"runs": len(files), "output": str(out)}))
    return 0


def cmd_fit(args):
    header, data = _read_csv(Path(args.csv))
    if args.column not in header:
        raise DataError(f"column {args.column!r} not in {header}")
    t = data[:, 0]
    y = data[:, header.index(args.column)]
    t_min = args.t_min
    if t_min is None:
        t_min = _first_epoch_end(Path(args.csv))
    base = math.e if args.base == "e" else float(args.base)
    fit = fit_log_square(t, y, t_min=t_min, band=tuple(args.band) if args.band else None,
                         base=base, min_points=args.min_points)
    print(json.dumps(fit.to_dict(), indent=2))
    return 0


def _first_epoch_end(csv_path: Path) -> float:
    """End of the first epoch of the stage a regret CSV belongs to, from the sibling summary."""
    summary = csv_path.parent / "summary.json"
    if not summary.exists():
        return 0.0
    s = json.loads(summary.read_text())
    stage = "power" if "power" in csv_path.name else "channel"
    epochs = s.get(stage, {}).get("epochs", [])
    if not epochs:
        return 0.0
    e = epochs[0]
    return float(e["explore"] + e["match"] + e["exploit"])


def _scenario_and_oracle(cfg: RunConfig, seed: int):
    scenario = generate_scenario(cfg.scenario, seed_streams(seed)[SCENARIO])
    env = Environment(scenario, cfg.algorithm.w_max)
    sol = solve_channel(env.channel_table, scenario.plays)
    # level games on the optimal schedule, scored with the true gains
    pt = env.set_gain_estimates(scenario.gains)
    sched = schedule_from_actions(sol.actions, scenario.M)
    power = [solve_power(pt, m, [k for k in aps if pt.feasible[k, m].any()])
             for m, aps in sched.items() if 0 < len(aps) <= scenario.beta]
    return scenario, sol, power


def cmd_oracle(args):
    cfg = _load_config(args)
    out = []
    for seed in cfg.seeds:
        _, sol, power = _scenario_and_oracle(cfg, seed)
        out.append({"seed": seed, "channel": sol.to_dict(), "power": [p.to_dict() for p in power]})
    print(json.dumps(out if len(out) > 1 else out[0], indent=2))
    return 0


def cmd_bounds(args):
    cfg = _load_config(args)
    alg = cfg.algorithm
    out = []
    for seed in cfg.seeds:
        scenario, sol, power = _scenario_and_oracle(cfg, seed)
        gaps = [p.delta for p in power if p.delta > 0]
        dp = min(gaps) if gaps else float("nan")
        rec = {"seed": seed, "delta_M": sol.delta, "delta_P": dp}
        try:
            ph = phase_length_bounds(scenario.K, scenario.M, scenario.beta, scenario.L, sol.delta, dp,
                                     alg.eta, alg.gamma)
            rec["phase_lengths"] = ph.__dict__
            horizons = args.horizons or [cfg.horizon_channel]
            n = int(scenario.plays.max())
            curves = regret_bound_curves(scenario.K, n, ph.T_C0, ph.T_P0, alg.c1, alg.c2, alg.delta,
                                         horizons)
            rec["regret_bounds"] = {k: np.asarray(v).tolist() for k, v in curves.as_columns().items()}
            rec["regret_bounds"]["exploit"] = curves.exploit
        except ValueError as exc:
            rec["error"] = str(exc)
        out.append(rec)
    print(json.dumps(out if len(out) > 1 else out[0], indent=2, default=float))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nomamab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp, with_method=True):
        sp.add_argument("--config", help="JSON run configuration (defaults otherwise)")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--seed", type=int)
        g.add_argument("--seeds", help="seed range A..B or comma list")
        sp.add_argument("--explore-mode", choices=["constant", "decreasing"])
        if with_method:
            sp.add_argument("--method", choices=["proposed", "ucb"])

    sp = sub.add_parser("run", help="simulate seeds and write traces")
    config_flags(sp)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("aggregate", help="mean/std of a per-seed CSV across seeds")
    sp.add_argument("--runs", required=True, help="directory holding seed_* subdirectories")
    sp.add_argument("--file", default="regret_channel.csv")
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("fit", help="fit regret(t) ~ a log(t)^2")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--column", default="regret")
    sp.add_argument("--t-min", type=float, help="fit only t > T (default: end of first epoch)")
    sp.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--base", default="e", help="logarithm base: e or a number")
    sp.add_argument("--min-points", type=int, default=100)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("oracle", help="brute-force optimal assignments")
    config_flags(sp, with_method=False)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bounds", help="gaps, phase lengths and regret bounds")
    config_flags(sp, with_method=False)
    sp.add_argument("--horizons", type=float, nargs="+")
    sp.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc.to_json(), file=sys.stderr)
        return 2
    except (DataError, ScenarioError, EnumerationCapExceeded, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
