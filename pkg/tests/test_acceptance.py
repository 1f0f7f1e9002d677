"""Acceptance suite: one PASS/FAIL line per criterion, printed past pytest's capture.

Criteria 1-3 share experiment runs through module-scoped fixtures; criteria 8
and 9 re-inspect those runs.
"""
import itertools
import time

import numpy as np
import pytest

from priorcd.graph import DirectedGraph, acyclicity_value, is_acyclic
from priorcd.harness import ExperimentConfig, dumps_report, run_experiment
from priorcd.metrics import evaluate
from priorcd.prior import ANSWERS, PairVerdict, assemble_prior, parse_response, render_prompt
from priorcd.solver import SolverConfig, objective_gradient, total_objective

from oracles import brute_metrics, central_difference, has_cycle_by_paths

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]
ALL_RUNS = {}  # label -> (report, out dir), for criteria 8 and 9


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def physics_cfg(out, size, prior=None, preset="vanilla", seeds=SEEDS, positive=True):
    return ExperimentConfig(
        dataset={"kind": "physics", "size": size, "n": 5000, "noise_variance": 0.5,
                 "positive": positive},
        prior=prior or {"kind": "none"}, preset=preset, seeds=list(seeds), out=str(out))


def run(label, cfg):
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    report_time = time.perf_counter() - t0
    ALL_RUNS[label] = (report, cfg)
    return report, report_time


def mean(report, key):
    return report["aggregate"][key]["mean"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def prior_runs(workdir):
    out = {}
    for size in (5, 7):
        out[size, "none"] = run(f"c2_none_{size}", physics_cfg(workdir / f"c2_none_{size}", size))[0]
        out[size, "truth"] = run(f"c2_truth_{size}", physics_cfg(
            workdir / f"c2_truth_{size}", size, {"kind": "truth"}, "physics-notears"))[0]
    return out


# -- criterion 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("positive", [True, False], ids=["positive", "mixed-signs"])
def test_criterion_1_exact_recovery_d3(workdir, verdict, positive):
    label = f"c1_{'pos' if positive else 'mixed'}"
    report, elapsed = run(label, physics_cfg(workdir / label, 3, positive=positive))
    shds = [r["metrics"]["shd"] for r in report["runs"]]
    exact = sum(s == 0 for s in shds)
    per_seed = elapsed / len(SEEDS)
    ok = exact >= 4 and per_seed < 60
    verdict(1, ok, f"d=3 ({'positive' if positive else 'mixed-sign'} weights) SHD per seed "
                   f"{shds}, exact in {exact}/5, {per_seed:.2f}s per seed")
    assert ok


# -- criterion 2 ---------------------------------------------------------------------------

@pytest.mark.parametrize("size", [5, 7])
def test_criterion_2_prior_improves(prior_runs, verdict, size):
    none, truth = prior_runs[size, "none"], prior_runs[size, "truth"]
    shd_n, shd_t = mean(none, "shd"), mean(truth, "shd")
    fdr_n, fdr_t = mean(none, "fdr"), mean(truth, "fdr")
    ok = shd_t <= shd_n and fdr_t <= fdr_n
    verdict(2, ok, f"d={size} mean SHD {shd_n:.2f} -> {shd_t:.2f} with truth prior, "
                   f"mean FDR {fdr_n:.3f} -> {fdr_t:.3f}")
    assert ok


def test_criterion_2_mixed_sign_information(workdir, capsys):
    # not asserted: with negative true coefficients the positive prior start can
    # settle in a wrong-sign optimum; reported so the effect stays visible
    none = run_experiment(physics_cfg(workdir / "info_none", 5, positive=False))
    truth = run_experiment(physics_cfg(workdir / "info_truth", 5, {"kind": "truth"},
                                       "physics-notears", positive=False))
    with capsys.disabled():
        print(f"\n[criterion 2, info] mixed-sign d=5: mean SHD {mean(none, 'shd'):.2f} -> "
              f"{mean(truth, 'shd'):.2f} with truth prior (not asserted)")


# -- criterion 3 ---------------------------------------------------------------------------

def test_criterion_3_random_prior_degrades(workdir, prior_runs, verdict):
    # 20 trials: 4 random priors with the true edge count on each of the 5 datasets
    cfg = physics_cfg(workdir / "c3_random", 7, {"kind": "random", "edge_count": 10, "repeat": 4},
                      "physics-notears")
    report, _ = run("c3_random", cfg)
    assert len(report["runs"]) == 20
    fdr_random = mean(report, "fdr")
    fdr_truth = mean(prior_runs[7, "truth"], "fdr")
    ok = fdr_random > fdr_truth
    verdict(3, ok, f"d=7 mean FDR random prior {fdr_random:.3f} (20 trials) vs truth prior "
                   f"{fdr_truth:.3f}")
    assert ok


# -- criterion 4 ---------------------------------------------------------------------------

def test_criterion_4_acyclicity_oracle(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    count = 0
    for bits in itertools.product((0, 1), repeat=9):
        a = np.array(bits, dtype=float).reshape(3, 3)
        mismatches += (acyclicity_value(a) < 1e-8) != (not has_cycle_by_paths(a))
        count += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 1.0
    verdict(4, ok, f"{count} binary 3x3 matrices, {mismatches} disagreements, {elapsed:.3f}s")
    assert ok


# -- criterion 5 ---------------------------------------------------------------------------

def test_criterion_5_gradient(verdict):
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((100, 5))
        w = rng.uniform(-0.6, 0.6, (5, 5))
        np.fill_diagonal(w, 0.0)
        k = (rng.random((5, 5)) < 0.3).astype(float)
        np.fill_diagonal(k, 0.0)
        cfg = SolverConfig(lambda_sparsity=0.1, lambda_sim=0.7)
        rho, alpha = 10.0, 1.0

        def f(v):
            h = acyclicity_value(v)
            return total_objective(v, x, k, cfg) + 0.5 * rho * h * h + alpha * h

        an = objective_gradient(w, x, k, cfg, rho, alpha)
        fd = central_difference(f, w, 1e-6)
        mask = ~np.eye(5, dtype=bool) & (np.abs(w) > 1e-3)
        rel = np.abs(an[mask] - fd[mask]) / np.maximum(np.abs(fd[mask]), 1e-12)
        worst = max(worst, float(rel.max()))
    ok = worst <= 1e-4
    verdict(5, ok, f"20 instances at d=5, worst relative error {worst:.2e}")
    assert ok


# -- criterion 6 ---------------------------------------------------------------------------

def test_criterion_6_metrics_oracle(verdict):
    rng = np.random.default_rng(66)
    names = tuple("abcde")
    mismatches = 0
    for _ in range(200):
        p, t = ((rng.random((5, 5)) < 0.3).astype(int) for _ in range(2))
        np.fill_diagonal(p, 0)
        np.fill_diagonal(t, 0)
        got = evaluate(DirectedGraph(names, p), DirectedGraph(names, t)).to_dict()
        want = brute_metrics(p, t)
        mismatches += any(got[key] != want[key] for key in got)

    # d=12, no predicted edges, 48 true edges
    truth = np.zeros((12, 12), dtype=int)
    cells = [(i, j) for i in range(12) for j in range(12) if i != j]
    for idx in np.random.default_rng(0).choice(len(cells), 48, replace=False):
        truth[cells[idx]] = 1
    arctic_names = tuple(f"v{i}" for i in range(12))
    r = evaluate(DirectedGraph.empty(arctic_names), DirectedGraph(arctic_names, truth))
    row_ok = round(r.nhd, 2) == 0.33 and round(r.nhd_ratio, 2) == 0.33 and r.fdr is None
    ok = mismatches == 0 and row_ok
    verdict(6, ok, f"200 random pairs, {mismatches} mismatches; empty d=12 row NHD {r.nhd:.4f}, "
                   f"ratio {r.nhd_ratio:.4f}, FDR {r.fdr}, FPR {r.fpr}, TPR {r.tpr}")
    assert ok


# -- criterion 7 ---------------------------------------------------------------------------

def test_criterion_7_prompt_protocol(verdict):
    recovered = [parse_response(render_prompt("Surface Air Temperature", "Evaporation Rate")
                                + f"\nReasoning.\n<Answer>{a}</Answer>") for a in ANSWERS]
    names = ("SAT", "ER")
    patterns = [assemble_prior([PairVerdict("SAT", "ER", a)], names).k.tolist() for a in ANSWERS]
    expected = [[[0, 1], [0, 0]], [[0, 0], [1, 0]], [[0, 1], [1, 0]], [[0, 0], [0, 0]]]
    ok = recovered == list(ANSWERS) and patterns == expected
    verdict(7, ok, f"parsed {recovered}; patterns A/B/C/D {patterns}")
    assert ok


# -- criteria 8 and 9 (after the runs above) -------------------------------------------------

def test_criterion_8_constraints(verdict):
    labels = [k for k in ALL_RUNS if k.startswith(("c1_", "c2_", "c3_"))]
    assert labels, "criteria 1-3 must run first"
    checked = bad = nonconverged = 0
    for label in labels:
        report, cfg = ALL_RUNS[label]
        for r in report["runs"]:
            if not r["converged"]:
                nonconverged += 1
                continue
            g = DirectedGraph.load(f"{cfg.out}/{r['run_id']}/graph.json")
            checked += 1
            bad += not (r["h_final"] <= 1e-8 and is_acyclic(g))
    ok = bad == 0 and checked > 0
    verdict(8, ok, f"{checked} converged runs checked, {bad} violations, "
                   f"{nonconverged} non-converged")
    assert ok


def test_criterion_9_determinism(workdir, verdict):
    results = []
    for label in ("c1_pos", "c2_truth_5", "c3_random"):
        report, cfg = ALL_RUNS[label]
        again = run_experiment(ExperimentConfig.from_dict(
            {**cfg.to_dict(), "out": str(workdir / f"repeat_{label}")}))
        first = (workdir / label / "report.json").read_bytes()
        second = (workdir / f"repeat_{label}" / "report.json").read_bytes()
        results.append(first == second and dumps_report(report) == dumps_report(again))
    ok = all(results)
    verdict(9, ok, f"byte-identical report JSON on repeat for c1/c2/c3 runs: {results}")
    assert ok
