"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Run ``pytest tests/test_acceptance.py -v`` to see the lines; they are printed
with output capture disabled so they show up in the normal pytest log.
"""

import dataclasses
import itertools
import subprocess
import sys
import time
from collections import Counter

import numpy as np
import pytest

from instances import map_dataset, random_problem
from pipeshap.add import INVALID, ValueSpace, count_all, count_uniform, eval_add, restrict, sum_diagrams
from pipeshap.harness.benchmark import fit_slope, time_importance
from pipeshap.harness.config import ExperimentConfig
from pipeshap.harness.repair import run_repair_simulation
from pipeshap.knn import ValidationTuple, make_utility
from pipeshap.shapley import (
    SubsetGame,
    brute_force_shapley,
    shapley_1nn_fork,
    shapley_1nn_map,
    shapley_knn_general,
    shapley_knn_map_fast,
    tmc_shapley,
)
from test_add import _assignments, _enumerate, random_add

pytestmark = pytest.mark.acceptance

EXACT_TOL = 1e-9
SUITE_BUDGET = 300.0
MAP_SLOPE, MAP_SLOPE_TOL = 2.0, 0.3
JOIN_SLOPE_MAX = 4.3
ONENN_N, ONENN_BUDGET = 100_000, 10.0
MIN_SPEEDUP = 100.0
TMC_SES, TMC_SLACK, TMC_PASS_RATE = 3.0, 1e-12, 0.95
REPAIR_WINS = 9

CLASSES = ("map", "fork", "join")
KS = (1, 2, 3)
LABEL_COUNTS = (2, 3)
UTILITIES = ("accuracy", "fnr", "eqodds_diff")
BATTERY_SEEDS = 4


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok
    return emit


def _gap(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if len(a) else 0.0


@pytest.fixture(scope="module")
def battery():
    """Every instance of the randomized battery, solved by brute force and both general engines."""
    runs = []
    start = time.perf_counter()
    combos = itertools.product(range(BATTERY_SEEDS), CLASSES, KS, LABEL_COUNTS, UTILITIES)
    for idx, (_, cls, k, n_labels, utility) in enumerate(combos):
        d, val, ut = random_problem(10_000 + idx, cls, k, n_labels, utility)
        runs.append({
            "cls": cls, "k": k, "d": d, "val": val, "ut": ut,
            "brute": brute_force_shapley(d, val, k, ut).values,
            "marginal": shapley_knn_general(d, val, k, ut).values,
            "pairwise": shapley_knn_general(d, val, k, ut, engine="pairwise").values,
        })
    return runs, time.perf_counter() - start


def test_criterion_1_general_matches_brute_force(battery, verdict):
    runs, seconds = battery
    worst = max(max(_gap(r["marginal"], r["brute"]), _gap(r["pairwise"], r["brute"])) for r in runs)
    classes = Counter(r["cls"] for r in runs)
    widest = max(len(r["d"].variables) for r in runs)
    ok = (len(runs) >= 200 and worst <= EXACT_TOL and seconds < SUITE_BUDGET
          and widest <= 12 and set(classes) == set(CLASSES))
    assert verdict(1, "general engines vs brute force", ok,
                   f"{len(runs)} instances {dict(classes)}, |A|<={widest}, max gap {worst:.2e} "
                   f"(tol {EXACT_TOL:.0e}), {seconds:.1f}s (budget {SUITE_BUDGET:.0f}s)")


def test_criterion_2_fast_paths_match_general(battery, verdict):
    runs, _ = battery
    gaps = {"map_fast": [], "1nn_map": [], "1nn_fork": []}
    for r in runs:
        d, val, k, ut = r["d"], r["val"], r["k"], r["ut"]
        if r["cls"] == "map":
            gaps["map_fast"].append(_gap(shapley_knn_map_fast(d, val, k, ut).values, r["marginal"]))
            if k == 1:
                gaps["1nn_map"].append(_gap(shapley_1nn_map(d, val, ut).values, r["marginal"]))
        if r["cls"] == "fork" and k == 1:
            gaps["1nn_fork"].append(_gap(shapley_1nn_fork(d, val, ut).values, r["marginal"]))
    worst = max(max(g) for g in gaps.values())
    ok = all(gaps.values()) and worst <= EXACT_TOL
    detail = ", ".join(f"{name} {len(g)} runs max {max(g):.2e}" for name, g in gaps.items())
    assert verdict(2, "fast paths vs general", ok, f"{detail} (tol {EXACT_TOL:.0e})")


def test_criterion_3_add_engine(verdict):
    count_ok = 0
    big = 0
    for seed in range(100):
        rng = np.random.default_rng(50_000 + seed)
        n = int(rng.integers(1, 17))
        big += n > 12
        space = ValueSpace(n, int(rng.integers(1, 4)), int(rng.integers(0, 4)))
        add = random_add(rng, n, space, width=2 if n > 12 else 3)
        seen = _enumerate(add)
        table = count_all(add)
        count_ok += table == {e: c for e, c in seen.items() if e is not INVALID} \
            and sum(table.values()) + seen.get(INVALID, 0) == 2 ** n
    uniform = count_uniform(3, 5, 10)
    laws_ok = 0
    for seed in range(20):
        rng = np.random.default_rng(60_000 + seed)
        n = int(rng.integers(1, 9))
        space = ValueSpace(2 * n, 2, 2)
        x, y = random_add(rng, n, space), random_add(rng, n, space)
        var, bit = x.order.ids[int(rng.integers(n))], int(rng.integers(2))
        r = restrict(x, var, bit)
        s = sum_diagrams(x, y)
        good = all(eval_add(r, v) == eval_add(x, {**v, var: bit}) for v in _assignments(r.order))
        for v in _assignments(x.order):
            ex, ey = eval_add(x, v), eval_add(y, v)
            want = INVALID if ex is INVALID or ey is INVALID else ex + ey
            good &= eval_add(s, v) == (want if space.contains(want) else INVALID)
        laws_ok += good
    ok = count_ok == 100 and uniform == 3 and laws_ok == 20
    assert verdict(3, "ADD counting, uniform case, restrict/sum", ok,
                   f"{count_ok}/100 diagrams exact ({big} with |A|>12), uniform C(3,2) -> {uniform}, "
                   f"{laws_ok}/20 restrict+sum law checks")


def _game_table(d, val, k, ut):
    n = len(d.variables)
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    per = SubsetGame(d, val, k, ut).per_validation(bits)
    return ut.w * per.sum(axis=1)


def _symmetric_and_dummy(u, n):
    masks = np.arange(1 << n)
    dummies = [i for i in range(n) if np.array_equal(u[masks[(masks >> i) & 1 == 0] | (1 << i)],
                                                          u[masks[(masks >> i) & 1 == 0]])]
    pairs = []
    for i, j in itertools.combinations(range(n), 2):
        rest = masks[((masks >> i) & 1 == 0) & ((masks >> j) & 1 == 0)]
        if np.array_equal(u[rest | (1 << i)], u[rest | (1 << j)]):
            pairs.append((i, j))
    return dummies, pairs


def test_criterion_4_shapley_axioms(battery, verdict):
    runs, _ = battery
    worst_eff = worst_sym = worst_dummy = 0.0
    n_pairs = n_dummies = n_checked = 0
    for r in runs:
        d, val, k, ut = r["d"], r["val"], r["k"], r["ut"]
        n = len(d.variables)
        u = _game_table(d, val, k, ut)
        dummies, pairs = _symmetric_and_dummy(u, n)
        n_pairs += len(pairs)
        n_dummies += len(dummies)
        exact = [r["brute"], r["marginal"], r["pairwise"]]
        if r["cls"] == "map":
            exact.append(shapley_knn_map_fast(d, val, k, ut).values)
        for phi in exact:
            n_checked += 1
            worst_eff = max(worst_eff, abs(phi.sum() - (u[-1] - u[0])))
            for i, j in pairs:
                worst_sym = max(worst_sym, abs(phi[i] - phi[j]))
            for i in dummies:
                worst_dummy = max(worst_dummy, abs(phi[i]))
    ok = max(worst_eff, worst_sym, worst_dummy) <= EXACT_TOL and n_pairs > 0 and n_dummies > 0
    assert verdict(4, "efficiency, symmetry, dummy", ok,
                   f"{n_checked} exact runs; efficiency gap {worst_eff:.2e}, "
                   f"{n_pairs} symmetric pairs gap {worst_sym:.2e}, {n_dummies} dummies max |phi| "
                   f"{worst_dummy:.2e} (tol {EXACT_TOL:.0e})")


def _ladder(cfg, sizes, n_validation, repeats):
    return [time_importance(cfg, n, n_validation, repeats) for n in sizes]


def test_criterion_5_complexity_scaling(verdict):
    map_sizes = (200, 400, 800, 1600, 3200)
    map_cfg = ExperimentConfig(synthetic="map", method="map_fast", k=3, seed=0)
    map_secs = _ladder(map_cfg, map_sizes, 5, 5)
    map_slope = fit_slope(map_sizes, map_secs)

    onenn_cfg = ExperimentConfig(synthetic="map", method="1nn_map", k=1, seed=0)
    onenn = time_importance(onenn_cfg, ONENN_N, 10, 1)

    join_sizes = (50, 100, 200, 400)
    join_cfg = ExperimentConfig(synthetic="join", method="general", k=3, seed=0)
    join_secs = _ladder(join_cfg, join_sizes, 1, 3)
    join_slope = fit_slope(join_sizes, join_secs)

    ok = (abs(map_slope - MAP_SLOPE) <= MAP_SLOPE_TOL and onenn < ONENN_BUDGET
          and join_slope <= JOIN_SLOPE_MAX)
    assert verdict(5, "runtime scaling", ok,
                   f"map K=3 slope {map_slope:.2f} (want {MAP_SLOPE}+-{MAP_SLOPE_TOL}) over {map_sizes}; "
                   f"1-NN map N={ONENN_N} in {onenn:.2f}s (< {ONENN_BUDGET:.0f}s); "
                   f"join slope {join_slope:.2f} (<= {JOIN_SLOPE_MAX}) over {join_sizes}")


def test_criterion_6_speedup_over_tmc(verdict):
    cfg = ExperimentConfig(synthetic="map", k=1, seed=0)
    fast = time_importance(dataclasses.replace(cfg, method="datascope"), 1000, 20, 3)
    slow = time_importance(dataclasses.replace(cfg, method="tmc_x100"), 1000, 20, 1)
    ratio = slow / fast
    assert verdict(6, "datascope vs tmc_x100 at N=1000, K=1", ratio >= MIN_SPEEDUP,
                   f"{fast * 1e3:.2f}ms vs {slow:.2f}s, speedup {ratio:.0f}x (want >= {MIN_SPEEDUP:.0f}x)")


def _tmc_instance(seed):
    rng = np.random.default_rng(70_000 + seed)
    d = map_dataset(rng.normal(size=6), rng.integers(0, 2, size=6))
    val = [ValidationTuple((float(x),), int(y)) for x, y in zip(rng.normal(size=3), rng.integers(0, 2, size=3))]
    return d, val, make_utility("accuracy", val, d, k=2)


def test_criterion_7_tmc_consistency(verdict):
    trials = 20
    hits = 0
    worst = 0.0
    for seed in range(trials):
        d, val, ut = _tmc_instance(seed)
        exact = brute_force_shapley(d, val, 2, ut).values
        est = tmc_shapley(d, val, 2, ut, 20_000, truncation_tolerance=None, seed=seed)
        z = np.abs(est.values - exact) / np.maximum(est.stderr, TMC_SLACK)
        worst = max(worst, float(z.max()))
        hits += bool(np.all(np.abs(est.values - exact) <= TMC_SES * est.stderr + TMC_SLACK))
    ok = hits >= TMC_PASS_RATE * trials
    assert verdict(7, "TMC within 3 SE of brute force", ok,
                   f"{hits}/{trials} trials with all 6 estimates inside (need >= {TMC_PASS_RATE:.0%}), "
                   f"worst |err|/SE {worst:.2f}")


def _auc(reports):
    f = np.array([r.fraction for r in reports])
    m = np.array([r.metric_median for r in reports])
    return float(np.sum((f[1:] - f[:-1]) * (m[1:] + m[:-1]) / 2))


def test_criterion_8_repair_beats_random(verdict):
    wins = 0
    margins = []
    for seed in range(10):
        base = ExperimentConfig(synthetic="map", synthetic_size=1000, flip_probability=0.5, k=1,
                                utility="accuracy", seed=seed, repetitions=1, checkpoints=20)
        ds = _auc(run_repair_simulation(dataclasses.replace(base, method="datascope")))
        rnd = _auc(run_repair_simulation(dataclasses.replace(base, method="random")))
        wins += ds > rnd
        margins.append(ds - rnd)
    assert verdict(8, "repair AUC datascope > random", wins >= REPAIR_WINS,
                   f"{wins}/10 seeds (need >= {REPAIR_WINS}), AUC margin min {min(margins):.3f} "
                   f"mean {np.mean(margins):.3f}")


def _cli_runs(tmp_path, t3_paths):
    train, val, test = t3_paths
    data = ["--train", train, "--validation", val, "--features", "x"]
    return {
        "shapley": ["shapley", *data, "--k", "2", "--method", "general"],
        "shapley_tmc": ["shapley", *data, "--method", "tmc_x10", "--seed", "5"],
        "repair": ["repair-sim", *data, "--test", test, "--seed", "3", "--repetitions", "3",
                   "--checkpoints", "3", "--method", "datascope_interactive"],
        "repair_synth": ["repair-sim", "--synthetic", "fork", "--synthetic-size", "60", "--seed", "1",
                         "--method", "tmc_x10", "--flip-probability", "0.4"],
        "benchmark": ["benchmark", "--synthetic", "join", "--sizes", "20,40", "--seed", "2", "--no-timing"],
    }


def test_criterion_9_cli_determinism(tmp_path, verdict):
    (tmp_path / "train.csv").write_text("x,y\n1,1\n2,0\n3,1\n4,0\n")
    (tmp_path / "val.csv").write_text("x,y\n0,1\n2.5,0\n")
    (tmp_path / "test.csv").write_text("x,y\n0.5,1\n2.2,0\n3.1,1\n")
    paths = tuple(str(tmp_path / f) for f in ("train.csv", "val.csv", "test.csv"))
    same, failures = 0, []
    runs = _cli_runs(tmp_path, paths)
    for name, args in runs.items():
        outputs = []
        # same arguments (output path included) each time; bytes are read back after every run
        out = tmp_path / name
        for _ in range(2):
            proc = subprocess.run([sys.executable, "-m", "pipeshap.cli", *args, "--out", str(out),
                                   "--format", "both"], capture_output=True, text=True)
            if proc.returncode != 0:
                failures.append(f"{name}: exit {proc.returncode} {proc.stderr.strip()}")
                break
            outputs.append((out.with_suffix(".csv").read_bytes(), out.with_suffix(".json").read_bytes()))
        if len(outputs) == 2 and outputs[0] == outputs[1]:
            same += 1
        elif len(outputs) == 2:
            failures.append(f"{name}: outputs differ")
    ok = same == len(runs)
    detail = f"{same}/{len(runs)} subcommand runs byte-identical across processes (csv+json)"
    assert verdict(9, "CLI determinism", ok, detail + ("; " + "; ".join(failures) if failures else ""))
