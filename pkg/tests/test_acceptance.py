"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line.  Run with
``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import itertools
import json
import sys
import time

import numpy as np
import pytest
from scipy import stats as sps

from biasmon import monitor, stats
from biasmon.cli import main
from biasmon.ingest import EXCLUDED, DataError, derive_label, dump_dataset
from biasmon.metrics import auroc, auroc_bruteforce, f1_score, prevalence
from biasmon.simulate import (DriftScenario, base_distribution, calibrate_scenario, run_scenario,
                              shifted_proportions)
from biasmon.synthetic import GroupSpec, make_table


def report(n, ok, detail=""):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
    sys.stdout.flush()
    assert ok, f"criterion {n} failed: {detail}"


def test_c01_prevalence():
    a, b = prevalence(7346, 210326), prevalence(1158, 53548)
    report(1, abs(a - 0.0337) <= 1e-4 and abs(b - 0.0212) <= 1e-4, f"{a:.5f} {b:.5f}")


def test_c02_f1():
    a, b = f1_score(0.896, 0.679), f1_score(0.548, 0.500)
    report(2, abs(a - 0.773) <= 5e-4 and abs(b - 0.523) <= 5e-4, f"{a:.5f} {b:.5f}")


def test_c03_auroc_oracle():
    rng = np.random.default_rng(3)
    worst, done = 0.0, 0
    t0 = time.perf_counter()
    while done < 1000:
        n = int(rng.integers(2, 201))
        # few distinct values so ties are common
        scores = rng.integers(0, int(rng.integers(2, 30)), n) / 10.0
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        worst = max(worst, abs(auroc(scores, labels) - auroc_bruteforce(scores, labels)))
        done += 1
    dt = time.perf_counter() - t0
    report(3, worst <= 1e-12 and dt < 10, f"max |diff|={worst:.2e} in {dt:.1f}s")


def test_c04_rank_test_calibration():
    exact = stats.mann_whitney_u([1, 2, 3], [4, 5, 6])
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    p = [stats.mann_whitney_u(rng.normal(size=50), rng.normal(size=50)).p_value for _ in range(1000)]
    dt = time.perf_counter() - t0
    ks = sps.kstest(p, "uniform").statistic
    ok = exact.p_value == 0.1 and exact.details["method"] == "exact" and ks < 0.05 and dt < 30
    report(4, ok, f"exact p={exact.p_value!r}, KS={ks:.4f}")


def test_c05_kruskal_dunn():
    groups = [[1, 2], [3, 4], [5, 6]]
    h = stats.kruskal_wallis(groups).statistic
    z = max(abs(r.statistic) for r in stats.dunn_posthoc(groups))
    report(5, abs(h - 4.571) <= 1e-3 and abs(z - 2.138) <= 1e-3, f"H={h:.4f} z={z:.4f}")


def test_c06_cramers_v():
    vals = [stats.cramers_v(t).effect for t in ([[10, 0], [0, 10]], [[5, 5], [5, 5]], [[10, 20], [20, 10]])]
    ok = abs(vals[0] - 1) < 1e-12 and abs(vals[1]) < 1e-12 and abs(vals[2] - 0.3333) <= 1e-3
    report(6, ok, " ".join(f"{v:.4f}" for v in vals))


def test_c07_cusum_trace():
    chart = monitor.run_chart([0.7, 0.7, 0.6, 0.6, 0.6], monitor.CusumCalibration(0.7, 0.05, k=0.0, h=0.2))
    trace_ok = np.allclose(chart.s_lower, [0, 0, -0.1, -0.2, -0.3], atol=1e-12)
    first = chart.episodes[0][0] if chart.episodes else None
    report(7, trace_ok and first == 3, f"s_lower={np.round(chart.s_lower, 12).tolist()} first alarm={first}")


def test_c08_detection_property():
    mu, sigma, n, onset = 0.68, 0.02, 200, 100
    cal = monitor.CusumCalibration(mu, sigma, k=0.0)
    delays, fars = [], []
    for seed in range(100):
        x = np.random.default_rng(seed).normal(mu, sigma, n)
        x[onset:] -= 2 * sigma
        ev = monitor.evaluate_alarms(monitor.run_chart(x, cal), onset - 1)
        fars.append(ev.far)
        # a missed detection counts as an infinite delay
        delays.append(np.inf if ev.detection_delay is None else ev.detection_delay)
    med_delay, med_far = float(np.median(delays)), float(np.median(fars))
    report(8, med_delay <= 10 and med_far <= 1, f"median delay={med_delay} median FAR={med_far}")


@pytest.fixture(scope="module")
def five_groups():
    specs = [GroupSpec(f"g{i}", 200 + 40 * i, 1800 + 200 * i, s)
             for i, s in enumerate([0.8, 0.75, 0.7, 0.65, 0.6])]
    return make_table(specs, seed=1)


def test_c09_null_stability(five_groups):
    ok = 0
    t0 = time.perf_counter()
    for seed in range(50):
        sc = DriftScenario("group", "g4", 0.0, n_batches=200, batch_size=1000, flexibility=0.025, seed=seed)
        cal = calibrate_scenario(sc, five_groups, 0.5)
        res = run_scenario(sc, five_groups, 0.5, cal)
        ok += res.evaluation.far <= 1 and abs(res.s_lower_final) < cal.h
    dt = time.perf_counter() - t0
    report(9, ok >= 45 and dt < 120, f"{ok}/50 seeds stable in {dt:.1f}s")


def test_c10_sweep_monotonicity():
    sens = np.array([0.3, 0.9, 0.9, 0.9, 0.9])
    table = make_table([GroupSpec("u", 300, 2700, 0.3)] + [GroupSpec(f"g{i}", 300, 2700, 0.9) for i in range(4)],
                       seed=2)
    grid = [0.0, 0.1, 0.2, 0.3]
    base = base_distribution(table, "group")
    finals = np.zeros((20, len(grid)))
    post_means = np.zeros(20)
    t0 = time.perf_counter()
    for seed in range(20):
        template = DriftScenario("group", "u", 0.0, seed=seed)
        cal = calibrate_scenario(template, table, 0.5, k=0.0)
        for j, d in enumerate(grid):
            res = run_scenario(DriftScenario("group", "u", d, seed=seed), table, 0.5, cal)
            finals[seed, j] = res.s_lower_final
            if d == 0.3:
                post_means[seed] = np.mean(res.chart.metric[template.onset:])
    dt = time.perf_counter() - t0
    mean, se = finals.mean(0), finals.std(0, ddof=1) / np.sqrt(20)
    monotone = all(mean[j + 1] <= mean[j] + 3 * np.hypot(se[j], se[j + 1]) for j in range(len(grid) - 1))
    # expected share of positives per group, before integer rounding
    w = shifted_proportions(base, "u", 0.3) * base.prevalence
    expected = (w / w.sum()) @ sens
    mix_ok = abs(post_means.mean() - expected) <= 3 * post_means.std(ddof=1) / np.sqrt(20)
    ok = monotone and mean[-1] < 0 and mix_ok and dt < 180
    report(10, ok, f"mean S_l(N)={np.round(mean, 3).tolist()} post mean={post_means.mean():.4f} "
                   f"analytic={expected:.4f} in {dt:.1f}s")


def test_c11_cli_determinism(tmp_path):
    specs = [GroupSpec(f"g{i}", 60, 540, s) for i, s in enumerate([0.8, 0.7, 0.6])]
    table = tmp_path / "table.csv"
    table.write_text(dump_dataset(make_table(specs, seed=5)))
    stream = tmp_path / "stream.csv"
    rng = np.random.default_rng(11)
    stream.write_text("metric\n" + "".join(f"{float(v)!r}\n" for v in rng.normal(0.7, 0.02, 60).round(6)))
    drifted = rng.normal(0.7, 0.02, 60) - np.r_[np.zeros(30), np.full(30, 0.05)]
    (tmp_path / "drift.csv").write_text("metric\n" + "".join(f"{float(v)!r}\n" for v in drifted.round(6)))
    commands = [
        ["analyze", "--input", f"{table},{table}", "--threshold", "auto", "--out", "{d}/report.json"],
        ["calibrate", "--stream", stream, "--k", "0.01", "--out", "{d}/cal.json"],
        ["monitor", "--calibration", "{d}/cal.json", "--stream", tmp_path / "drift.csv", "--drift-index", "29",
         "--out", "{d}/chart.csv"],
        ["chart", "--chart", "{d}/chart.csv", "--calibration", "{d}/cal.json", "--out", "{d}/chart.svg"],
        ["simulate", "--input", table, "--attribute", "group", "--shift-group", "g2", "--delta-p", "0.2",
         "--n-batches", "40", "--batch-size", "200", "--seed", "7",
         "--out-chart", "{d}/sim_chart.csv", "--out-eval", "{d}/sim_eval.json"],
        ["sweep", "--input", table, "--attribute", "group", "--delta-grid=-0.1:0.1:0.1", "--n-batches", "20",
         "--batch-size", "200", "--seed", "7", "--out", "{d}/sweep.csv"],
    ]
    outputs = {}
    t0 = time.perf_counter()
    codes = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        for cmd in commands:
            codes.append(main([str(c).replace("{d}", str(d)) for c in cmd]))
        outputs[run] = {p.name: p.read_bytes() for p in sorted(d.iterdir())}
    dt = time.perf_counter() - t0
    same = outputs["a"] == outputs["b"] and len(outputs["a"]) == 7
    json.loads(outputs["a"]["report.json"])
    report(11, same and set(codes) == {0} and dt < 60,
           f"{len(outputs['a'])} files identical={same} exit codes={sorted(set(codes))} in {dt:.1f}s")


def test_c12_birads_totality():
    expected = {0: EXCLUDED, 1: 0, 2: 0, 3: EXCLUDED, 4: 1, 5: 1, 6: 1}
    ok = all(derive_label(b) is EXCLUDED if v is EXCLUDED else derive_label(b) == v for b, v in expected.items())
    for b in itertools.chain(range(-5, 0), range(7, 15)):
        try:
            derive_label(b)
            ok = False
        except DataError:
            pass
    report(12, ok, "0..6 mapped, outside rejected")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
