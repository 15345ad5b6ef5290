import json
import math

import pytest

from goalreach import config as C
from goalreach.cli import main

SMALL = """
extends = "desk"

[actuator_data]
duration = 240.0

[dnn]
hidden = [16, 8]
max_epochs = 120

[scenario]
goals = [[0.0, 3.0]]
"""


# ----------------------------------------------------------------------------- config

def test_shipped_profiles_load():
    for name in C.PROFILES:
        cfg = C.load_config(name)
        C.planner_env(cfg)
        C.scenario_config(cfg)
    t3 = C.scenario_config(C.load_config("table3_asphalt"))
    t4 = C.scenario_config(C.load_config("table4_soft"))
    assert (len(t3.goals), t3.terrain) == (5, "asphalt")
    assert (len(t4.goals), t4.terrain) == (6, "soft")
    assert t3.fault.trigger_goal_index == 5 and t3.fault.magnitude == 10.0


def test_baseline_carries_table_defaults():
    cfg = C.load_config()
    tc, env = C.train_config(cfg), C.planner_env(cfg)
    assert (tc.alpha, tc.gamma, tc.episodes) == (0.10, 0.95, 30000)
    assert (tc.eps_0, tc.eps_final) == (1.0, 1e-3)
    assert env.goal_tol == 0.10 and env.start_min_dist == 0.20
    assert env.discretizer.n_theta == 24
    fc, split = C.fit_config(cfg)
    assert fc.hidden == (320, 210, 105) and fc.max_epochs == 500 and split.train == 0.34
    g = C.controller_gains(cfg)
    assert (g.epsilon, g.gamma, g.delta) == (1.0, 0.01, 0.2)


def test_extends_chain_and_overrides(tmp_path):
    (tmp_path / "a.toml").write_text('extends = "desk"\n[planner]\nepisodes = 7\n')
    (tmp_path / "b.toml").write_text('extends = "a.toml"\n[planner]\nalpha = 0.2\n')
    cfg = C.load_config(tmp_path / "b.toml")
    assert cfg["planner"]["episodes"] == 7 and cfg["planner"]["alpha"] == 0.2
    assert cfg["planner"]["workspace_half"] == 10.0


@pytest.mark.parametrize("body", [
    "[planner]\nepisodez = 3\n",
    "[nonsense]\nx = 1\n",
    'extends = "self.toml"\n',
    "[planner]\nalpha = 0.0\n",
    "[scenario]\nterrain = \"ice\"\n",
    "[fault]\nenabled = true\ntrigger_goal_index = 99\n",
    "this is not toml",
])
def test_invalid_configs_raise_config_error(tmp_path, body):
    p = tmp_path / "self.toml"
    p.write_text(body)
    with pytest.raises(C.ConfigError):
        cfg = C.load_config(p)
        C.train_config(cfg)
        C.scenario_config(cfg)


def test_dump_toml_round_trips(tmp_path):
    cfg = C.load_config("table4_soft")
    (tmp_path / "x.toml").write_text(C.dump_toml(cfg))
    assert C.load_config(tmp_path / "x.toml") == cfg


# ----------------------------------------------------------------------------- CLI

def test_cli_usage_and_config_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2
    assert main(["train-planner", "--config", str(tmp_path / "missing.toml"), "--out-dir", str(tmp_path)]) == 3
    assert "goalreach: error [config]" in capsys.readouterr().err


def test_cli_missing_artifacts(tmp_path, capsys):
    assert main(["simulate", "--config", "desk", "--out-dir", str(tmp_path)]) == 4
    assert main(["report", "--out-dir", str(tmp_path)]) == 4
    assert "[artifact]" in capsys.readouterr().err


def test_cli_train_planner_small(tmp_path):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text('extends = "desk"\n[planner]\nepisodes = 50\neval_episodes = 10\n')
    out = tmp_path / "run"
    assert main(["train-planner", "--config", str(cfg), "--out-dir", str(out), "--rule", "sarsa"]) == 0
    assert {"qtable.json", "learning_curve.csv", "planner_eval.json"} <= {p.name for p in out.iterdir()}
    assert len((out / "learning_curve.csv").read_text().splitlines()) == 51
    # outputs are write-once
    assert main(["train-planner", "--config", str(cfg), "--out-dir", str(out)]) == 6
    assert main(["train-planner", "--config", str(cfg), "--out-dir", str(out), "--force"]) == 0


def test_cli_pipeline_end_to_end(tmp_path, desk_table, capsys):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    out = tmp_path / "run"
    out.mkdir()
    desk_table.save(out / "qtable.json")
    common = ["--config", str(cfg), "--out-dir", str(out)]
    assert main(["gen-actuator-data", *common]) == 0
    assert main(["train-dnn", *common]) == 0
    train_rep = json.loads((out / "train_report.json").read_text())
    assert train_rep["test_mse"] < 0.05
    assert main(["simulate", *common, "--terrain", "soft"]) == 0
    run = json.loads((out / "run_report.json").read_text())
    assert run["success"] and run["terrain"] == "soft"
    assert main(["report", "--out-dir", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["rmse"] == pytest.approx(metrics["rmse_recomputed"], abs=1e-12)
    assert (out / "plot_data.csv").exists() and (out / "mode_log.csv").exists()
    assert "rmse" in capsys.readouterr().out.lower()

    # a model trained on a different plant is rejected before the run starts
    other = tmp_path / "other.toml"
    other.write_text(SMALL + "\n[plant]\nc1 = 0.3\n")
    assert main(["simulate", "--config", str(other), "--out-dir", str(out), "--force"]) == 4


def test_cli_simulate_is_deterministic(tmp_path, desk_table, fitted_model):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    docs = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        desk_table.save(out / "qtable.json")
        model = fitted_model[0].with_params(fitted_model[0].get_params())
        model.meta["plant"] = C.load_config(cfg)["plant"]
        model.save(out / "model.json")
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--seed", "5"]) == 0
        docs.append((out / "run_report.json").read_bytes())
    assert docs[0] == docs[1]
    assert not math.isnan(json.loads(docs[0])["rmse"])
