"""Acceptance criteria, each at its stated tolerance.

Every criterion appends one ``PASS``/``FAIL`` line to ``RESULTS``; the lines
are printed as they are produced and again in the pytest terminal summary.
Run directly (``python tests/test_acceptance.py``) for the lines alone.
"""

import math
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_force_split, random_instance  # noqa: E402
from rfprune.cart import best_split  # noqa: E402
from rfprune.cli import run  # noqa: E402
from rfprune.dataset import Dataset, model_spec  # noqa: E402
from rfprune.median_tree import MedianTreeParams, grow_median_tree, max_depth  # noqa: E402
from rfprune.sampling import derive_stream  # noqa: E402
from rfprune.theory import (BoundInputs, beta, c3_constant, side_moment_constant,  # noqa: E402
                            mc_side_second_moment, optimal_depth, rate_exponent, risk_bound,
                            subsample_exponent)
from rfprune.tuning import (MAXNODES, SAMPSIZE, SweepSpec, default_base_config,  # noqa: E402
                            default_grid, rate_study, run_sweep, train_size)

RESULTS = []
JOBS = max(1, min(8, os.cpu_count() or 1))


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_analytic_exactness():
    checks = {
        "rate_exponent(1) = -2/3": abs(rate_exponent(1) + 2 / 3) <= 1e-12,
        "beta(1) = 0.25": beta(1) == 0.25,
        "C3(1, 1, 1) = 12": abs(c3_constant(1, 1.0, 1.0) - 12.0) <= 1e-9,
        "subsample exponent(1) = 1/3": abs(subsample_exponent(1) - 1 / 3) <= 1e-12,
    }
    bad = [k for k, ok in checks.items() if not ok]
    report(1, not bad, "analytic constants exact" if not bad else f"failed: {bad}")


def test_2_split_oracle():
    g = np.random.default_rng(20240601)
    mismatches = 0
    for _ in range(200):
        x, y, dims = random_instance(g, n_max=50, d_max=5)
        got = best_split(x, y, dims)
        want = brute_force_split(x, y, dims)
        if want is None or got is None:
            mismatches += (want is None) != (got is None)
            continue
        same_gain = math.isclose(got.gain, want[2], rel_tol=1e-9, abs_tol=1e-12)
        if (got.dimension, got.threshold) != want[:2] or not same_gain:
            mismatches += 1
    report(2, mismatches == 0, f"{200 - mismatches}/200 instances match the brute-force oracle")


def test_3_median_tree_structure():
    bad = 0
    for t in range(100):
        g = derive_stream(3, t)
        a_n = int(g.choice([64, 128, 256]))
        k = int(g.integers(0, max_depth(a_n) + 1))
        d = int(g.integers(1, 6))
        data = Dataset(g.random((a_n, d)), g.standard_normal(a_n))
        tree = grow_median_tree(data, np.arange(a_n), MedianTreeParams(a_n, k), g)
        leaves = tree.leaves
        counts = tree.count[leaves]
        ok = (all(tree.depth(v) == k for v in leaves)
              and counts.sum() == a_n - (2 ** k - 1)
              and np.all(counts >= a_n / 2 ** k - 2) and np.all(counts <= a_n / 2 ** k))
        bad += not ok
    report(3, bad == 0, f"{100 - bad}/100 trees with depth-k leaves, count sum a_n-(2^k-1), "
                        "leaf counts in [a_n 2^-k - 2, a_n 2^-k]")


@pytest.mark.slow
def test_4_side_moments():
    worst_z = 0.0
    failures = []
    for d in (1, 2, 5):
        for k in (1, 2, 3):
            a_n = 2 ** (k + 6)
            est = mc_side_second_moment(a_n, k, d, 10_000, master_seed=1000 + 10 * d + k,
                                        path="random")
            z = (est.estimate - est.exact_mean) / est.std_error
            bound = side_moment_constant(d) * beta(d) ** k
            worst_z = max(worst_z, abs(z))
            if abs(z) > 3 or est.estimate > bound + 3 * est.std_error:
                failures.append((d, k, round(z, 2)))
    # the cell of a fixed query point, reported for information only
    q = mc_side_second_moment(256, 3, 1, 2000, master_seed=4, path="query")
    qz = (q.estimate - q.exact_mean) / q.std_error
    report(4, not failures,
           f"9 (d,k) cases, max |z| vs beta-product formula {worst_z:.2f} (limit 3), all below "
           f"C beta^k + 3 SE; failures {failures}; info: fixed-query cell z={qz:.1f}")


def test_5_bound_minimizer():
    g = np.random.default_rng(5)
    bad = 0
    for _ in range(20):
        d = int(g.integers(1, 30))
        s2 = float(10 ** g.uniform(-2, 1))
        L = float(10 ** g.uniform(-1, 1))
        n = int(10 ** g.uniform(2, 7))
        _, k = optimal_depth(d, n, s2, L)
        best = risk_bound(BoundInputs(d, n, s2, L, k))
        bad += any(best > risk_bound(BoundInputs(d, n, s2, L, j)) for j in range(31))
    report(5, bad == 0, f"{20 - bad}/20 parameter sets minimized by k_star_int over k in [0, 30]")


@pytest.mark.slow
def test_6_pruning_matches_bootstrap():
    n = 400
    grid = default_grid(MAXNODES, n)
    point = int(round(0.3 * train_size(n)))
    assert point in grid
    spec = SweepSpec(model_spec(1), n, default_base_config(MAXNODES, 100), MAXNODES,
                     tuple(grid), 10, master_seed=6)
    res = run_sweep(spec, n_jobs=JOBS)
    best = min(res.mean_risk)
    at_point = res.mean_risk[res.grid.index(point)]
    ref = res.reference_risk
    ok = best <= 1.10 * ref and abs(at_point - ref) <= 0.25 * ref
    report(6, ok, f"best pruned {best:.5f} (maxnodes={res.grid[res.mean_risk.index(best)]}), "
                  f"maxnodes={point} {at_point:.5f}, bootstrap {ref:.5f}; ratios "
                  f"{best / ref:.3f} (<= 1.10) and {at_point / ref:.3f} (within 0.75..1.25)")


@pytest.mark.slow
def test_7_subsample_matches_bootstrap():
    n = 400
    a_n = int(round(0.63 * train_size(n)))
    parts = []
    ok = True
    for model in (1, 6):
        spec = SweepSpec(model_spec(model), n, default_base_config(SAMPSIZE, 100), SAMPSIZE,
                         (a_n,), 10, master_seed=70 + model)
        res = run_sweep(spec, n_jobs=JOBS)
        ratio = res.mean_risk[0] / res.reference_risk
        ok &= abs(ratio - 1) <= 0.10
        parts.append(f"model {model}: {res.mean_risk[0]:.5f} vs {res.reference_risk:.5f} "
                     f"(ratio {ratio:.3f})")
    report(7, ok, f"a_n={a_n} (0.63 x training size); " + "; ".join(parts) + "; limit 10%")


@pytest.mark.slow
def test_8_rate_study():
    res = rate_study([256, 512, 1024, 2048, 4096], 20, 0.1, master_seed=8, n_jobs=JOBS)
    ok = -0.85 <= res.slope <= -0.45
    report(8, ok, f"log-log slope {res.slope:.3f} in [-0.85, -0.45] (target -2/3); "
                  f"depths {res.depths}")


@pytest.mark.slow
def test_9_thread_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["generate", "--model", "1", "--n", "300", "--seed", "9", "--out", "d.csv"]) == 0
    for threads in ("1", "8"):
        # same relative paths in both runs, so the manifests may be compared whole
        (tmp_path / threads).mkdir()
        monkeypatch.chdir(tmp_path / threads)
        assert run(["train", "--data", "../d.csv", "--trees", "40", "--seed", "9",
                    "--threads", threads, "--out", "forest.txt"]) == 0
        assert run(["sweep", "--model", "1", "--n", "200", "--reps", "3", "--trees", "20",
                    "--seed", "9", "--threads", threads, "--out", "sweep.csv"]) == 0
    names = ("forest.txt", "forest.txt.manifest", "sweep.csv", "sweep.csv.manifest")
    same = [(tmp_path / "1" / f).read_bytes() == (tmp_path / "8" / f).read_bytes()
            for f in names]
    report(9, all(same), f"train and sweep artifacts byte-identical across --threads 1/8: "
                         f"{sum(same)}/{len(same)} files")

if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
