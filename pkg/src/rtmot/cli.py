"""Command-line front end: ``rtmot {analyze,simulate,sweep,verify}``.

Exit codes: 0 ok, 1 unschedulable or verification failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from .analysis import rta_min
from .scheduler import ExecutionTimeModel, Policy, simulate
from .task_model import ConfigError, PAIRS, fps_to_period, tasks_from_config, tasks_from_fps
from .workload import Scenario, ScenarioParams, generate_scenario

logger = logging.getLogger("rtmot")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

TRACE_COLUMNS = ("t_us", "task", "job_idx", "pair", "budget_us", "actual_us", "inverted", "miss")
CONFIDENCE_COLUMNS = ("task", "frame", "pair", "n_tracklets", "measured",
                      "predicted_LL", "predicted_LH", "predicted_HL", "predicted_HH")
SWEEP_COLUMNS = ("fps", "policy", "schedulable", "simulated", "seeds", "jobs", "misses",
                 "conf_mean", "conf_min", "conf_max", "LL", "LH", "HL", "HH")


# --- configuration ----------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve_seed(cli_seed, config: dict) -> int:
    """``--seed`` beats ``RTMOT_SEED``, which beats the config's ``seed``."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("RTMOT_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"RTMOT_SEED must be an integer, got {env!r}") from None
    seed = config.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    return seed


def taskset(config: dict, fps=None):
    if fps:
        return tasks_from_fps(fps)
    if "fps" in config and "tasks" not in config:
        if not config["fps"]:
            raise ConfigError("config has no tasks")
        return tasks_from_fps(config["fps"])
    return tasks_from_config(config)


def parse_policies(names) -> list[Policy]:
    out = []
    for name in names:
        try:
            out.append(Policy(name))
        except ValueError:
            raise ConfigError(f"unknown policy {name!r}") from None
    return out


def scenario_params(config: dict, frames: int) -> ScenarioParams:
    raw = dict(config.get("scenario") or {})
    known = {f.name for f in fields(ScenarioParams)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown scenario parameters {sorted(unknown)}")
    raw.setdefault("horizon", frames)
    params = ScenarioParams(**raw)
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params


def frames_needed(tasks, horizon_us: int) -> int:
    return max((horizon_us - 1 - t.phase) // t.period for t in tasks) + 1


def build_scenario(config: dict, tasks, horizon_us: int, seed: int) -> Scenario:
    path = config.get("scenario_file")
    if path:
        try:
            scenario = Scenario.from_json(Path(path).read_text())
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot load scenario {path}: {exc}") from None
        return scenario
    params = scenario_params(config, frames_needed(tasks, horizon_us))
    return generate_scenario(seed, params, task_ids=[t.id for t in tasks])


def horizon_us(args, config: dict) -> int:
    ms = args.horizon_ms if args.horizon_ms is not None else config.get("horizon_ms", 10_000)
    if not isinstance(ms, (int, float)) or ms <= 0:
        raise ConfigError(f"horizon_ms must be positive, got {ms!r}")
    return int(round(ms * 1000))


def exec_model(args, config: dict, seed: int) -> ExecutionTimeModel:
    text = args.exec_model or config.get("exec_model", "wcet")
    try:
        return ExecutionTimeModel.parse(text, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


# --- analyze ----------------------------------------------------------------


def analyze_report(tasks, policies) -> dict:
    report = {"tasks": [{"id": t.id, "period_us": t.period, "priority": t.priority} for t in tasks],
              "policies": {}}
    for pol in policies:
        res = rta_min(tasks, pol.analysis_pair)
        report["policies"][pol.value] = {
            "pair": res.pair.value,
            "schedulable": res.schedulable,
            "response_time_us": {str(k): v for k, v in res.response_time.items()},
            "task_schedulable": {str(k): v for k, v in res.task_schedulable.items()},
        }
    return report


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    tasks = taskset(config, args.fps)
    policies = parse_policies(args.policy or config.get("policies") or ["min"])
    report = analyze_report(tasks, policies)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for name, res in report["policies"].items():
            verdict = "schedulable" if res["schedulable"] else "UNSCHEDULABLE"
            times = ", ".join(f"R{k}={int(v) / 1000:g}ms" for k, v in res["response_time_us"].items())
            print(f"{name:10s} [{res['pair']}] {verdict}: {times}")
    ok = all(r["schedulable"] for r in report["policies"].values())
    return EXIT_OK if ok else EXIT_FAIL


# --- simulate ---------------------------------------------------------------


def write_trace_csv(trace, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow((r.t, r.task_id, r.job_index, r.pair.value, r.budget, r.actual,
                        int(r.inverted), int(r.miss)))


def write_confidence_csv(trace, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONFIDENCE_COLUMNS)
        for s in trace.confidence:
            w.writerow((s.task_id, s.frame, s.pair.value, s.n_tracklets, repr(s.measured),
                        *(repr(s.predicted[p]) for p in PAIRS)))


def trace_metrics(trace) -> dict:
    return {
        "policy": trace.policy,
        "horizon_us": trace.horizon,
        "jobs": len(trace.records),
        "misses": len(trace.misses),
        "inversions": sum(r.inverted for r in trace.records),
        "pair_histogram": trace.pair_histogram(),
        "mean_confidence": {str(k): v for k, v in trace.mean_confidence().items()},
        "overall_confidence": trace.overall_confidence(),
    }


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    tasks = taskset(config, args.fps)
    policy = parse_policies([args.policy or config.get("policy", "flex")])[0]
    seed = resolve_seed(args.seed, config)
    horizon = horizon_us(args, config)
    model = exec_model(args, config, seed)
    out = output_dir(args.out or config.get("output_dir", "rtmot-out"))

    verdict = rta_min(tasks, policy.analysis_pair)
    if not verdict.schedulable and not args.force:
        logger.error("policy %s fails the offline analysis; use --force to run anyway", policy.value)
        return EXIT_FAIL
    scenario = None
    if not args.no_scenario:
        scenario = build_scenario(config, tasks, horizon, seed)
        (out / "scenario.json").write_text(scenario.to_json())
    try:
        trace = simulate(tasks, policy, horizon, exec_model=model, scenario=scenario)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    write_trace_csv(trace, out / "trace.csv")
    if scenario is not None:
        write_confidence_csv(trace, out / "confidence.csv")
    metrics = trace_metrics(trace)
    metrics.update(seed=seed, exec_model=args.exec_model or config.get("exec_model", "wcet"),
                   schedulable=verdict.schedulable, forced=bool(args.force and not verdict.schedulable))
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(f"{policy.value}: {metrics['jobs']} jobs, {metrics['misses']} misses, "
          f"confidence {metrics['overall_confidence']:.4f}, pairs {metrics['pair_histogram']}")
    return EXIT_OK


# --- sweep ------------------------------------------------------------------


def run_cell(cell: dict) -> dict:
    """Simulate one (FPS set, policy) cell over its seeds. Picklable for the pool."""
    tasks = tasks_from_fps(cell["fps"])
    policy = Policy(cell["policy"])
    schedulable = rta_min(tasks, policy.analysis_pair).schedulable
    row = {"fps": "/".join(str(f) for f in cell["fps"]), "policy": policy.value,
           "schedulable": schedulable, "simulated": False, "seeds": len(cell["seeds"]),
           "jobs": 0, "misses": 0, "conf_mean": "", "conf_min": "", "conf_max": "",
           **{p.value: 0 for p in PAIRS}}
    if not schedulable and not cell["force"]:
        return row
    confs = []
    for seed in cell["seeds"]:
        scenario = generate_scenario(
            seed, scenario_params(cell["scenario"], frames_needed(tasks, cell["horizon"])),
            task_ids=[t.id for t in tasks])
        model = ExecutionTimeModel.parse(cell["exec_model"], seed=seed)
        trace = simulate(tasks, policy, cell["horizon"], exec_model=model, scenario=scenario)
        row["jobs"] += len(trace.records)
        row["misses"] += len(trace.misses)
        for pair, n in trace.pair_histogram().items():
            row[pair] += n
        confs.append(trace.overall_confidence())
    row.update(simulated=True, conf_mean=sum(confs) / len(confs), conf_min=min(confs),
               conf_max=max(confs))
    return row


def sweep_grid(config: dict, args) -> list[dict]:
    fps_sets = config.get("fps_sets")
    if fps_sets is None:
        raise ConfigError("sweep needs fps_sets")
    for fps in fps_sets:
        if not fps:
            raise ConfigError("empty FPS set in sweep")
        for f in fps:
            fps_to_period(f)
    policies = parse_policies(args.policy or config.get("policies") or
                              ["min", "flex-npi", "flex", "static-HL", "static-LH", "static-HH"])
    base = resolve_seed(args.seed, config)
    seeds = config.get("seeds")
    if seeds is None or os.environ.get("RTMOT_SEED") or args.seed is not None:
        seeds = [base + i for i in range(args.n_seeds or config.get("n_seeds", 1))]
    scenario_params(config, 1)  # validate early
    horizon = horizon_us(args, config)
    model = args.exec_model or config.get("exec_model", "wcet")
    exec_model(args, config, 0)
    return [
        {"fps": list(fps), "policy": pol.value, "seeds": list(seeds), "horizon": horizon,
         "scenario": {"scenario": config.get("scenario") or {}}, "exec_model": model,
         "force": bool(args.force)}
        for fps in fps_sets for pol in policies
    ]


def run_sweep(cells, workers: int = 1) -> list[dict]:
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_cell, cells))  # map preserves cell order
    return [run_cell(c) for c in cells]


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.fps_set:
        config["fps_sets"] = [[float(x) if "." in x else int(x) for x in s.split("/")]
                              for s in args.fps_set]
    cells = sweep_grid(config, args)
    if not cells:
        logger.warning("empty sweep grid; nothing to do")
        return EXIT_OK
    out = output_dir(args.out or config.get("output_dir", "rtmot-out"))
    rows = run_sweep(cells, args.workers)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (int(v) if isinstance(v, bool) else v) for k, v in row.items()})
    for row in rows:
        conf = f"{row['conf_mean']:.4f}" if row["simulated"] else "-"
        flag = "ok" if row["schedulable"] else "UNSCHED"
        print(f"{row['fps']:>12s} {row['policy']:10s} {flag:8s} conf={conf} "
              f"misses={row['misses']} LL/LH/HL/HH={row['LL']}/{row['LH']}/{row['HL']}/{row['HH']}")
    return EXIT_OK


# --- verify -----------------------------------------------------------------


def cmd_verify(args) -> int:
    from .oracle import verify_flex, verify_gate, verify_rta

    seed = resolve_seed(args.seed, load_config(args.config))
    ok = True
    if args.suite in ("rta", "all"):
        rep = verify_rta(args.sets, seed=seed)
        print(f"rta: {rep.sets} sets, {rep.schedulable} schedulable, {rep.tick_runs} tick runs, "
              f"{len(rep.disagreements)} disagreements")
        ok &= rep.ok
    if args.suite in ("gate", "all"):
        rep = verify_gate(args.snapshots, seed=seed)
        print(f"gate: {rep.snapshots} snapshots, {rep.admitted} admitted grants, "
              f"{len(rep.disagreements)} disagreements")
        ok &= rep.ok
    if args.suite in ("flex", "all"):
        rep = verify_flex(args.flex_sets, seed=seed)
        print(f"flex: {rep.runs} runs, {rep.jobs} jobs, {rep.upgraded} non-LL grants, "
              f"{rep.inversions} inversions, {len(rep.misses)} runs with misses")
        ok &= rep.ok
    return EXIT_OK if ok else EXIT_FAIL


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    policies = [p.value for p in Policy]
    parser = argparse.ArgumentParser(prog="rtmot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy_nargs=None):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--fps", type=float, nargs="+", help="task FPS list (reference WCETs)")
        p.add_argument("--policy", choices=policies, nargs=policy_nargs)

    p = sub.add_parser("analyze", help="offline response-time analysis")
    common(p, "+")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run one policy and write trace/metrics")
    common(p)
    p.add_argument("--horizon-ms", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--exec-model", help="wcet | scaled:F | stochastic[:LO]")
    p.add_argument("--out", help="output directory")
    p.add_argument("--force", action="store_true", help="run even if the offline analysis fails")
    p.add_argument("--no-scenario", action="store_true", help="schedule without tracking workload")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="FPS sets x policies x seeds")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--fps-set", action="append", help="slash-separated FPS set, e.g. 6/4 (repeatable)")
    p.add_argument("--policy", choices=policies, nargs="+")
    p.add_argument("--horizon-ms", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-seeds", type=int)
    p.add_argument("--exec-model")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="simulate unschedulable cells too")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="oracle cross-checks of the analysis and the gate")
    p.add_argument("--config")
    p.add_argument("--suite", choices=("rta", "gate", "flex", "all"), default="all")
    p.add_argument("--sets", type=int, default=1000)
    p.add_argument("--snapshots", type=int, default=10_000)
    p.add_argument("--flex-sets", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
