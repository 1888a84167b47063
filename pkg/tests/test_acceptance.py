"""Acceptance criteria, one test each.

Each check returns ``(passed, detail)``; the tests assert on it and report a
one-line verdict (shown in the pytest terminal summary, or printed when this
file is run directly).
"""

import random
import statistics
import time

import numpy as np

from rtmot.analysis import GateCounter, SchedulerSnapshot, rta_min
from rtmot.cli import run_sweep, sweep_grid
from rtmot.confidence import (
    MatchCategory, MotionState, Tracklet, lambda_a, lambda_s, lambda_v, predict_pair,
    update_tracklet,
)
from rtmot.oracle import verify_flex, verify_gate, verify_rta
from rtmot.scheduler import npfp_flex_decide, simulate
from rtmot.task_model import PAIRS, REFERENCE_PROFILE, Pair, TaskSpec, rm_assign, tasks_from_fps, wcet_of
from rtmot.workload import ScenarioParams, generate_scenario

TOL = 1e-12
ALL_POLICIES = ["min", "flex-npi", "flex", "static-HL", "static-LH", "static-HH"]


def rta_soundness():
    t0 = time.perf_counter()
    rep = verify_rta(1000, seed=0, n_max=5, u_range=(0.3, 1.2))
    dt = time.perf_counter() - t0
    ok = rep.ok and rep.sets >= 1000 and dt < 60
    return ok, (f"{rep.sets} sets, {rep.schedulable} schedulable, {rep.tick_runs} tick runs, "
                f"{len(rep.disagreements)} misses, {dt:.1f}s")


def flex_never_misses():
    t0 = time.perf_counter()
    rep = verify_flex(500, seeds=(0, 1, 2), seed=0, hyperperiods=3)
    dt = time.perf_counter() - t0
    ok = rep.ok and rep.runs >= 1500 and rep.upgraded > 0 and rep.inversions > 0 and dt < 120
    return ok, (f"{rep.runs} runs, {rep.jobs} jobs, {rep.upgraded} non-LL grants, "
                f"{rep.inversions} inversions, {len(rep.misses)} runs with misses, {dt:.1f}s")


def gate_soundness():
    t0 = time.perf_counter()
    rep = verify_gate(10_000, seed=0, n_max=4)
    dt = time.perf_counter() - t0
    ok = rep.ok and rep.snapshots >= 10_000 and dt < 120
    return ok, (f"{rep.snapshots} snapshots, {rep.admitted} admitted grants, "
                f"{len(rep.disagreements)} unsafe, {dt:.1f}s")


def reference_fixture():
    ll, hh = wcet_of(REFERENCE_PROFILE, Pair.LL), wcet_of(REFERENCE_PROFILE, Pair.HH)
    res = rta_min(tasks_from_fps([6, 4]))
    ok = ll == 29_000 and hh == 57_700 and res.response_time == {0: 58_000, 1: 58_000} and res.schedulable
    return ok, f"C_LL={ll}us C_HH={hh}us R={res.response_time} schedulable={res.schedulable}"


def _random_tracklets(rng):
    out = []
    for i in range(rng.randint(1, 10)):
        out.append(Tracklet(
            id=i, start=0, last_seen=0,
            motion=MotionState(0, 0, rng.uniform(5, 80), rng.uniform(5, 80), rng.gauss(0, 4), rng.gauss(0, 4)),
            motion_frame=0, appearance=tuple(rng.gauss(0, 1) for _ in range(8)),
            appearance_frame=rng.randint(0, 2), appearance_update=tuple(rng.gauss(0, 1) for _ in range(8)),
            appearance_update_frame=1, omega_m=rng.random(), omega_a=rng.random(),
            motion_prev=MotionState(0, 0, rng.uniform(5, 80), rng.uniform(5, 80), rng.gauss(0, 4), rng.gauss(0, 4)),
        ))
    return out


def confidence_units():
    box = MotionState(0, 0, 40, 40, 2, -1)
    closed = [
        abs(lambda_s(box, box) - 0.5) < TOL,
        abs(lambda_v(box, box) - 1.0) < TOL,
        abs(lambda_a((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)) - 1.0) < TOL,
        abs(lambda_a((1.0, 0.0), (0.0, 1.0))) < TOL,
    ]
    rng = random.Random("acceptance-confidence")
    tracked = resets = decays = 0
    for ts in (_random_tracklets(rng) for _ in range(200)):
        for chi in ts:
            tracked += 1
            cg1 = update_tracklet(chi, MatchCategory.CG1, 5, chi.motion, (1.0,) * 8)
            resets += (cg1.omega_m, cg1.omega_a) == (1.0, 1.0)
            cur = chi
            for f in range(5, 10):
                seen = tuple(rng.gauss(0, 1) for _ in range(8))
                nxt = update_tracklet(cur, MatchCategory.CG3, f, appearance=seen)
                decays += nxt.omega <= cur.omega
                cur = nxt
    dominance = hh_one = 0
    for _ in range(1000):
        ts = _random_tracklets(rng)
        roi = {t.id for t in ts if rng.random() < 0.5}
        o = {p: predict_pair(ts, p, roi) for p in PAIRS}
        hh_one += abs(o[Pair.HH] - 1.0) < TOL
        dominance += (o[Pair.HH] >= o[Pair.HL] >= o[Pair.LL]) and (o[Pair.HH] >= o[Pair.LH] >= o[Pair.LL])
    ok = (all(closed) and resets == tracked and decays == 5 * tracked
          and hh_one == 1000 and dominance == 1000)
    return ok, (f"closed forms {sum(closed)}/4, CG1 resets {resets}/{tracked}, "
                f"CG3 monotone {decays}/{5 * tracked}, HH=1 {hh_one}/1000, dominance {dominance}/1000")


def _ordering_pairs(n_pairs=100, horizon_us=10_000_000):
    rng = random.Random("acceptance-ordering")
    rows = []
    while len(rows) < n_pairs:
        fps = sorted((rng.randint(1, 12) for _ in range(rng.randint(1, 4))), reverse=True)
        tasks = tasks_from_fps(fps)
        if not rta_min(tasks).schedulable:
            continue
        seed = rng.randrange(1 << 30)
        frames = max(horizon_us // t.period for t in tasks) + 1
        sc = generate_scenario(seed, ScenarioParams(horizon=frames), task_ids=[t.id for t in tasks])
        rows.append({p: simulate(tasks, p, horizon_us, scenario=sc).overall_confidence()
                     for p in ("min", "flex-npi", "flex")})
    return rows


def policy_ordering():
    rows = _ordering_pairs()
    mean = {p: statistics.fmean(r[p] for r in rows) for p in ("min", "flex-npi", "flex")}
    strict = sum(r["flex"] > r["min"] for r in rows)
    npi_ge_min = sum(r["flex-npi"] >= r["min"] for r in rows)
    flex_ge_npi = sum(r["flex"] >= r["flex-npi"] for r in rows)
    ok = mean["flex"] >= mean["flex-npi"] >= mean["min"] and strict >= 0.95 * len(rows)
    return ok, (f"{len(rows)} pairs, mean flex={mean['flex']:.4f} flex-npi={mean['flex-npi']:.4f} "
                f"min={mean['min']:.4f}; flex>min {strict}/{len(rows)}; per pair flex>=npi "
                f"{flex_ge_npi}, npi>=min {npi_ge_min}")


def complexity():
    ns = list(range(2, 9))
    counts, terms = [], []
    for n in ns:
        tasks = rm_assign(TaskSpec(i, 10_000_000 + 1000 * i, REFERENCE_PROFILE) for i in range(n))
        snap = SchedulerSnapshot(0, tuple(tasks), {t.id: True for t in tasks},
                                 {t.id: t.period for t in tasks})
        counter = GateCounter()
        npfp_flex_decide(snap, None, counter)
        counts.append(counter.check_calls)
        terms.append(counter.terms)
    slope = float(np.polyfit(np.log(ns), np.log(counts), 1)[0])
    ratios = [c / (n * n * n) for c, n in zip(counts, ns)]  # n' = n: all tasks active
    term_slope = float(np.polyfit(np.log(ns), np.log(terms), 1)[0])
    ok = slope <= 2.3 and all(b <= a for a, b in zip(ratios, ratios[1:]))
    return ok, (f"check calls {dict(zip(ns, counts))}, fit exponent {slope:.2f} (<= 2.3), "
                f"calls/(n^2 n') non-increasing from {ratios[0]:.2f} to {ratios[-1]:.2f}; "
                f"summation terms exponent {term_slope:.2f}")


def experiment_shape():
    class Args:
        policy = ALL_POLICIES
        seed = None
        n_seeds = 1
        horizon_ms = 10_000
        exec_model = None
        force = False

    two = [[6 + i, 4 + i] for i in range(5)]
    four = [[8 + i, 4 + i, 2 + i, 1 + i] for i in range(3)]
    rows = run_sweep(sweep_grid({"fps_sets": two + four}, Args), workers=2)
    by = {(r["fps"], r["policy"]): r for r in rows}
    fps_keys = ["/".join(map(str, f)) for f in two + four]
    complete = len(rows) == len(fps_keys) * len(ALL_POLICIES)
    flex_ok = all(by[(f, "flex")]["schedulable"] and by[(f, "flex")]["simulated"]
                  and by[(f, "flex")]["misses"] == 0 for f in fps_keys)
    hist_ok = all(sum(r[p.value] for p in PAIRS) == r["jobs"] for r in rows)
    boundary = [f for f in fps_keys if not by[(f, "static-HH")]["schedulable"] and by[(f, "flex")]["schedulable"]]
    ok = complete and flex_ok and hist_ok and bool(boundary)
    flex_hist = {f: "/".join(str(by[(f, "flex")][p.value]) for p in PAIRS) for f in fps_keys}
    return ok, (f"{len(rows)} cells, flex schedulable+miss-free everywhere={flex_ok}, "
                f"static-HH unschedulable where flex is: {boundary}; flex LL/LH/HL/HH {flex_hist}")


CRITERIA = [
    (1, "RTA soundness vs tick oracle", rta_soundness),
    (2, "flex never misses on offline-schedulable sets", flex_never_misses),
    (3, "gate soundness vs exhaustive future", gate_soundness),
    (4, "reference WCETs and 6/4 FPS response times", reference_fixture),
    (5, "confidence unit suite", confidence_units),
    (6, "policy ordering flex >= flex-npi >= min", policy_ordering),
    (7, "gate work O(n^2 n')", complexity),
    (8, "FPS sweep experiment shape", experiment_shape),
]


def _line(num, name, ok, detail):
    return f"criterion {num} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"


def _check(num, acceptance_line):
    _, name, fn = CRITERIA[num - 1]
    ok, detail = fn()
    line = _line(num, name, ok, detail)
    print(line)
    acceptance_line(line)
    assert ok, line


def test_criterion_1_rta_soundness(acceptance_line):
    _check(1, acceptance_line)


def test_criterion_2_flex_no_misses(acceptance_line):
    _check(2, acceptance_line)


def test_criterion_3_gate_soundness(acceptance_line):
    _check(3, acceptance_line)


def test_criterion_4_reference_fixture(acceptance_line):
    _check(4, acceptance_line)


def test_criterion_5_confidence_units(acceptance_line):
    _check(5, acceptance_line)


def test_criterion_6_policy_ordering(acceptance_line):
    _check(6, acceptance_line)


def test_criterion_7_complexity(acceptance_line):
    _check(7, acceptance_line)


def test_criterion_8_experiment_shape(acceptance_line):
    _check(8, acceptance_line)


if __name__ == "__main__":
    failed = 0
    for num, name, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(num, name, ok, detail), flush=True)
    raise SystemExit(1 if failed else 0)
