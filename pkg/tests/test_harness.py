import json

import numpy as np
import pytest

from nomamab.channel_agent import EpochParams, epoch_schedule
from nomamab.cli import main
from nomamab.config import AlgorithmConfig, ConfigError, RunConfig, parse_seeds
from conftest import make_scenario
from nomamab.env import Environment, ScenarioConfig
from nomamab.oracle import solve_channel
from nomamab.harness import (PHASES, _converged, horizon_for_epochs, planned_channel_explore,
                             run_channel_stage, run_many, run_single)


def small_config(**over) -> RunConfig:
    """Two APs on three channels with short phases, fast enough for unit tests."""
    cfg = RunConfig(
        scenario=ScenarioConfig(n_aps=2, n_channels=3, n_plays=1, budgets_w=[1.0, 2.0]),
        algorithm=AlgorithmConfig(explore_len=2000, power_explore_len=500, c1=300, c2=500,
                                  epsilon=0.01),
        horizon_channel=30_000, horizon_power=10_000, horizon_ucb=5_000, trace_stride=50)
    for k, v in over.items():
        setattr(cfg, k, v)
    return cfg


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("1,4") == [1, 4]
    assert parse_seeds("7") == [7]
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


def test_default_config_is_valid_and_roundtrips():
    cfg = RunConfig()
    assert cfg.validate() == []
    back = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert back.digest() == cfg.digest()


def test_invalid_config_reports_all_fields():
    cfg = RunConfig(seeds=[], method="greedy")
    cfg.algorithm.epsilon = 1.5
    cfg.algorithm.explore_mode = "sometimes"
    fields = {e["field"] for e in cfg.validate()}
    assert {"seeds", "method", "algorithm.epsilon", "algorithm.explore_mode"} <= fields
    with pytest.raises(ConfigError) as exc:
        cfg.check()
    assert json.loads(exc.value.to_json())["problems"]


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"horizon": 5})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"algorithm": {"eps": 0.1}})


def test_horizon_for_epochs():
    p = EpochParams(100, c1=10, c2=20)
    assert horizon_for_epochs(2, p) == (100 + 10 + 40) + (100 + 20 + 80)
    assert horizon_for_epochs(3, p) == sum(epoch_schedule(l, p).total for l in (1, 2, 3))


def test_converged_metrics_are_window_means():
    rate = np.array([0, 0, 0, 10.0, 20.0])
    power = np.array([1, 1, 1, 1.0, 3.0])
    c = _converged(rate, power, 0.4)
    assert c["sum_rate"] == 15 and c["total_power"] == 2 and c["ee"] == 7.5


def test_auto_channel_exploration_is_capped():
    cfg = RunConfig()
    n, info = planned_channel_explore(cfg, 0)
    assert n <= cfg.algorithm.explore_cap
    assert info["source"] == "auto" and info["T_K_hat"] == 13056


@pytest.fixture(scope="module")
def small_run():
    return run_single(small_config(), 3, "proposed")


def test_proposed_run_structure(small_run):
    s = small_run.summary
    ch = s["channel"]
    assert ch["epochs"][0]["explore"] == 2000
    assert ch["epochs"][0]["match"] == 300
    assert ch["epochs"][0]["exploit"] == 1000
    starts = [e["start"] for e in ch["epochs"]]
    assert starts[0] == 0 and all(b > a for a, b in zip(starts, starts[1:]))
    assert len(ch["frozen_actions"]) == 2
    assert 0 <= ch["frozen_value"] <= ch["optimum"] + 1e-12
    for e in ch["epochs"]:
        if "estimation_error" in e:
            assert 0 <= e["estimation_error"] < 0.05
    assert s["converged"]["ee"] >= 0


def test_regret_tables_are_monotone(small_run):
    for name in ("regret_channel", "regret_power"):
        header, rows = small_run.tables[name]
        assert header[:2] == ["t", "regret"]
        reg = np.array([float(r[1]) for r in rows])
        t = np.array([int(r[0]) for r in rows])
        assert np.all(np.diff(t) > 0)
        assert np.all(np.diff(reg) >= -1e-9)


def test_trace_stages_are_ordered(small_run):
    header, rows = small_run.tables["trace"]
    t = [int(r[0]) for r in rows]
    stages = [r[1] for r in rows]
    assert t == sorted(t)
    first_power = stages.index("power")
    assert set(stages[:first_power]) == {"channel"} and set(stages[first_power:]) == {"power"}
    assert {r[3] for r in rows} <= set(PHASES)


def test_convergence_seconds_use_slot_duration(small_run):
    ch = small_run.summary["channel"]
    if ch["convergence_slot"] is not None:
        assert ch["convergence_seconds"] == pytest.approx(ch["convergence_slot"] * 62.5e-6)


@pytest.mark.parametrize("seed", range(5))
def test_lone_ap_settles_on_clearly_best_channel(seed):
    # one channel is 10x better, so a worse channel is accepted w.p. eps^0.9 ~ 1e-4
    sc = make_scenario([[0.1, 1.0, 0.1]])
    env = Environment(sc)
    alg = AlgorithmConfig(explore_len=500, c1=300, c2=500)
    sol = solve_channel(env.channel_table, 1)
    stage = run_channel_stage(env, alg, 500, 20_000, np.random.default_rng(seed),
                              [np.random.default_rng(100 + seed)], sol)
    assert stage.frozen == [(1,)]
    assert all(e["K_hat"] == [1] for e in stage.epochs)
    assert all(e["estimation_error"] < 0.02 for e in stage.epochs)
    assert np.all(np.diff(np.cumsum(stage.regret_inc)) >= 0)


def test_ucb_run(tmp_path):
    res = run_single(small_config(), 1, "ucb")
    assert res.summary["n_arms"] == 3 * 2
    assert res.summary["horizon"] == 5000


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_outputs_byte_identical_across_runs_and_jobs(tmp_path):
    cfg = small_config(seeds=[1, 2])
    run_many(cfg, out=str(tmp_path / "a"), jobs=1)
    run_many(cfg, out=str(tmp_path / "b"), jobs=2)
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys() and a == b
    manifest = json.loads(a["manifest.json"])
    assert manifest["config_sha256"] == cfg.digest()
    assert "proposed/seed_1/trace.csv" in manifest["files"]


def test_cli_run_fit_aggregate(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(small_config().to_json())
    out = tmp_path / "runs"
    assert main(["run", "--config", str(cfg_path), "--seeds", "0,1", "--out", str(out)]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert [l["seed"] for l in lines] == [0, 1]
    assert main(["aggregate", "--runs", str(out / "proposed")]) == 0
    agg = out / "proposed" / "aggregate_regret_channel.csv"
    assert agg.read_text().splitlines()[0] == "t,regret_mean,regret_std"
    capsys.readouterr()
    assert main(["fit", "--csv", str(out / "proposed" / "seed_0" / "regret_channel.csv"),
                 "--min-points", "10"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["t_min"] == 3300 and fit["a"] > 0


def test_cli_reports_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"method": "greedy", "algorithm": {"epsilon": 2}}))
    assert main(["run", "--config", str(bad)]) == 2
    report = json.loads(capsys.readouterr().err)
    assert {p["field"] for p in report["problems"]} >= {"method", "algorithm.epsilon"}
    assert main(["run", "--seeds", "x..y"]) == 2


def test_cli_data_errors(tmp_path, capsys):
    assert main(["aggregate", "--runs", str(tmp_path)]) == 1
    csv_path = tmp_path / "r.csv"
    csv_path.write_text("t,regret\n" + "".join(f"{t},{100 - t}\n" for t in range(1, 200)))
    assert main(["fit", "--csv", str(csv_path), "--t-min", "0"]) == 1


def test_cli_oracle_and_bounds(capsys):
    assert main(["oracle", "--seed", "0"]) == 0
    sol = json.loads(capsys.readouterr().out)
    assert len(sol["channel"]["actions"]) == 4
    assert main(["bounds", "--seed", "0", "--horizons", "1e5", "1e6"]) == 0
    b = json.loads(capsys.readouterr().out)
    assert b["phase_lengths"]["T_K_hat"] == 13056
    assert len(b["regret_bounds"]["envelope"]) == 2
