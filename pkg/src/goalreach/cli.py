"""Command-line pipeline: train the planner, build the actuator dataset, fit the
inverse model, run scenarios and summarise telemetry.

Every subcommand reads one layered TOML config (``--config``, a file path or a
shipped profile name) and writes its artifacts into ``--out-dir``. Existing
files are never overwritten unless ``--force`` is given.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as C
from .actuator import ActuatorDataset, generate_dataset
from .metrics import rmse
from .neural import NetworkModel, fit
from .planner.agent import QTable
from .planner.training import evaluate_greedy, train
from .pose import StreamExhausted
from .sim import InverseModel, TELEMETRY_FIELDS, simulate, simulate_step, wheel_metrics, write_telemetry

log = logging.getLogger("goalreach")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ARTIFACT = 4
EXIT_RUN = 5
EXIT_IO = 6


class CliError(Exception):
    def __init__(self, category: str, code: int, message: str):
        super().__init__(message)
        self.category = category
        self.code = code


def _out(args, name: str) -> Path:
    path = Path(args.out_dir) / name
    if path.exists() and not args.force:
        raise CliError("io", EXIT_IO, f"{path} exists; pass --force to overwrite")
    return path


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _resolve(args, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else Path(args.out_dir) / p


def _load_cfg(args) -> dict:
    return C.load_config(args.config)


# ----------------------------------------------------------------------------- commands

def cmd_train_planner(args) -> int:
    cfg = _load_cfg(args)
    env = C.planner_env(cfg)
    tc = C.train_config(cfg, args.rule, args.seed)
    q_path, curve_path, eval_path = (_out(args, n) for n in
                                     ("qtable.json", "learning_curve.csv", "planner_eval.json"))
    log.info("training %s for %d episodes on %s", tc.rule.value, tc.episodes, env.workspace)
    q, curve = train(tc, env)
    q.meta.update({"workspace_half": cfg["planner"]["workspace_half"],
                   "goal_mode": env.goal_mode})
    q.save(q_path)
    curve.to_csv(curve_path)
    summary = evaluate_greedy(q, env, tc.eval_episodes, tc.timeout_steps, seed=tc.rng_seed + 1)
    _write_json(eval_path, {"rule": tc.rule.value, "rng_seed": tc.rng_seed, **asdict(summary)})
    print(f"greedy success rate {summary.success_rate:.3f} over {summary.episodes} episodes")
    return EXIT_OK


def cmd_gen_actuator_data(args) -> int:
    cfg = _load_cfg(args)
    a = cfg["actuator_data"]
    path = _out(args, "dataset.csv")
    try:
        ds = generate_dataset(str(a["excitation"]), C.plant_params(cfg), float(a["duration"]),
                              float(a["dt"]), int(a["seed"] if args.seed is None else args.seed),
                              float(a["period"]))
    except ValueError as exc:
        raise C.ConfigError(f"[actuator_data] {exc}") from exc
    ds.to_csv(path)
    print(f"wrote {len(ds)} samples to {path}")
    return EXIT_OK


def cmd_train_dnn(args) -> int:
    cfg = _load_cfg(args)
    fc, split = C.fit_config(cfg, args.seed)
    ds_path = Path(args.dataset) if args.dataset else Path(args.out_dir) / "dataset.csv"
    try:
        ds = ActuatorDataset.from_csv(ds_path)
    except (OSError, ValueError, IndexError) as exc:
        raise CliError("artifact", EXIT_ARTIFACT, f"cannot read dataset {ds_path}: {exc}") from exc
    model_path, report_path = _out(args, "model.json"), _out(args, "train_report.json")
    model, report = fit(ds, split, fc)
    model.meta["plant"] = ds.meta.get("plant")
    model.save(model_path)
    _write_json(report_path, report.to_dict())
    ratio = report.test_mse_physical / report.target_variance if report.target_variance else math.nan
    print(f"stop={report.stop_cause} best_epoch={report.best_epoch} "
          f"test MSE / target variance = {ratio:.3e}")
    if report.degenerate:
        raise CliError("validation", EXIT_RUN, "degenerate dataset: constant input or target")
    return EXIT_OK


def _load_inverse(args, cfg) -> InverseModel:
    path = _resolve(args, cfg["scenario"]["model"])
    try:
        model = NetworkModel.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError("artifact", EXIT_ARTIFACT, f"cannot load inverse model: {exc}") from exc
    trained_on = model.meta.get("plant")
    if trained_on is not None and trained_on != cfg["plant"]:
        raise CliError("artifact", EXIT_ARTIFACT,
                       f"{path} was trained on a different plant than the config's [plant]")
    return InverseModel.from_network(model)


def _load_qtable(args, cfg) -> QTable:
    path = _resolve(args, cfg["scenario"]["qtable"])
    expect = C.planner_env(cfg).new_table().hash
    try:
        return QTable.load(path, expect_hash=expect)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError("artifact", EXIT_ARTIFACT, f"cannot load Q-table: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    scen = C.scenario_config(cfg, args.terrain, args.seed)
    kind = cfg["scenario"]["kind"]
    if kind not in ("goals", "step"):
        raise C.ConfigError(f"[scenario] kind must be 'goals' or 'step', got {kind!r}")
    # every artifact is checked before the first tick
    inverse = _load_inverse(args, cfg)
    q = _load_qtable(args, cfg) if kind == "goals" else None
    provider = C.pose_provider(cfg, Path(args.out_dir)) if kind == "goals" else None
    tel_path, rep_path = _out(args, "telemetry.csv"), _out(args, "run_report.json")
    mode_path = _out(args, "mode_log.csv")
    telemetry: list = []
    if kind == "step":
        st = cfg["step"]
        report = simulate_step(scen, inverse, float(st["v_step"]), float(st["t_step"]),
                               float(st["duration"]), float(st["goal_distance"]), telemetry)
    else:
        try:
            report = simulate(scen, q, inverse, provider, telemetry)
        except StreamExhausted as exc:
            raise CliError("artifact", EXIT_ARTIFACT, f"pose log too short: {exc}") from exc
    write_telemetry(tel_path, telemetry)
    _write_json(rep_path, report.to_dict())
    with open(mode_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "mode", "cause"])
        for m in report.mode_log:
            w.writerow([m["tick"], m["mode"], m["cause"]])
    for g in report.goals:
        print(f"{g.label:>10}  target ({g.target[0]:+.3f}, {g.target[1]:+.3f})  "
              f"final ({g.final[0]:+.3f}, {g.final[1]:+.3f})  error {g.error:.4f}")
    if report.goals:
        print(f"RMSE {report.rmse:.4f} m, final mode {report.final_mode}, success {report.success}")
    for i, m in enumerate(report.wheel_metrics, 1):
        if m is not None and kind == "step":
            print(f"wheel {i}: steady-state error {m['steady_state_error']:.4f} m/s, "
                  f"overshoot {m['overshoot']:.4f} m/s")
    if kind == "step":
        print(f"success {report.success}")
    if not report.success:
        raise CliError("safety" if report.final_mode != "STOPPED" and scen.fault else "goal",
                       EXIT_RUN, f"scenario {scen.name} did not complete")
    return EXIT_OK


def _read_telemetry(path: Path) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError("artifact", EXIT_ARTIFACT, f"cannot read telemetry {path}: {exc}") from exc
    if not rows or list(rows[0]) != list(TELEMETRY_FIELDS):
        raise CliError("artifact", EXIT_ARTIFACT, f"{path} is not a telemetry file")
    try:
        return {k: np.array([r[k] for r in rows], dtype=object if k == "mode" else float)
                for k in TELEMETRY_FIELDS}
    except ValueError as exc:
        raise CliError("artifact", EXIT_ARTIFACT, f"malformed telemetry {path}: {exc}") from exc


def cmd_report(args) -> int:
    tel_path = Path(args.telemetry) if args.telemetry else Path(args.out_dir) / "telemetry.csv"
    tel = _read_telemetry(tel_path)
    dt = float(tel["t"][1] - tel["t"][0]) if tel["t"].size > 1 else 0.05
    refs = np.column_stack([tel[f"v_d{i}"] for i in range(1, 5)])
    speeds = np.column_stack([tel[f"v{i}"] for i in range(1, 5)])
    wm = wheel_metrics(dt, refs, speeds)
    doc = {"telemetry": str(tel_path), "ticks": int(tel["t"].size), "wheel_metrics": wm}
    run_report = tel_path.with_name("run_report.json")
    rep = json.loads(run_report.read_text()) if run_report.exists() else {}
    if rep.get("goals"):
        doc["goals"] = rep["goals"]
        doc["rmse"] = rep["rmse"]
        doc["rmse_recomputed"] = rmse(g["error"] for g in rep["goals"])
    metrics_path, plot_path = _out(args, "metrics.json"), _out(args, "plot_data.csv")
    _write_json(metrics_path, doc)
    cols = ["t", "x", "y", "x_meas", "y_meas", "mode"] + [f"{k}{i}" for i in range(1, 5)
                                                         for k in ("v_d", "v")]
    with open(plot_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(tel["t"].size):
            w.writerow([tel[c][k] if c == "mode" else repr(float(tel[c][k])) for c in cols])

    def fmt(v):
        return "   n/a" if v is None else f"{v:8.4f}"

    print(f"{'wheel':>5} {'peak t(s)':>9} {'overshoot':>9} {'settle(s)':>9} {'e_ss(m/s)':>9}")
    for i, m in enumerate(wm, 1):
        if m is None:
            print(f"{i:>5}   no constant-reference segment")
            continue
        print(f"{i:>5} {fmt(m['peak_time']):>9} {fmt(m['overshoot']):>9} "
              f"{fmt(m['settling_time']):>9} {fmt(m['steady_state_error']):>9}")
    if "goals" in doc:
        for g in doc["goals"]:
            print(f"{g['label']:>10}  final ({g['final'][0]:+.3f}, {g['final'][1]:+.3f})  "
                  f"error {g['error']:.4f}")
        print(f"RMSE {doc['rmse']:.4f} m (recomputed {doc['rmse_recomputed']:.4f})")
    return EXIT_OK


# ----------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalreach", description="Train, simulate and evaluate the goal-reaching robot pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", default="baseline",
                       help="config file or shipped profile (%s)" % ", ".join(C.PROFILES))
        p.add_argument("--out-dir", default=".", help="artifact directory (created if missing)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the command's seed")
        return p

    p = common(sub.add_parser("train-planner", help="train the tabular planner"))
    p.add_argument("--rule", choices=("qlearning", "sarsa"), default=None)
    p.set_defaults(func=cmd_train_planner)
    p = common(sub.add_parser("gen-actuator-data", help="generate the actuator dataset"))
    p.set_defaults(func=cmd_gen_actuator_data)
    p = common(sub.add_parser("train-dnn", help="fit the inverse actuator model"))
    p.add_argument("--dataset", default=None, help="dataset CSV (default: OUT_DIR/dataset.csv)")
    p.set_defaults(func=cmd_train_dnn)
    p = common(sub.add_parser("simulate", help="run a closed-loop scenario"))
    p.add_argument("--terrain", choices=("asphalt", "soft"), default=None)
    p.set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("report", help="metrics table and plot data from telemetry"), seed=False)
    p.add_argument("--telemetry", default=None, help="telemetry CSV (default: OUT_DIR/telemetry.csv)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except C.ConfigError as exc:
        category, code, msg = "config", EXIT_CONFIG, str(exc)
    except CliError as exc:
        category, code, msg = exc.category, exc.code, str(exc)
    except OSError as exc:
        category, code, msg = "io", EXIT_IO, str(exc)
    print(f"goalreach: error [{category}]: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
