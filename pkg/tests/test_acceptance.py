"""One test per acceptance criterion.  Each prints a PASS/FAIL line that the
terminal summary collects under "acceptance criteria"."""
import math
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from gmpy2 import mpq

from parhac.cli import main as cli_main
from parhac.core import Cluster, NonInterferenceViolated, dendrogram_height, merge_clusters
from parhac.fileio import write_points
from parhac.gen import gen_nonmon_triangle, gen_uniform
from parhac.hac_parallel import SeparationViolated, run_parallel
from parhac.hac_seq import run_exact
from parhac.hardness import N_MIN, hardness_differential, random_tcp
from parhac.linkage import (check_apx_triangle, check_average_reducibility,
                            check_wards_sandwich, check_weak_reducibility,
                            check_weight_stability, lance_williams_update, linkage)
from parhac.verify import packing_check, potential_monitor, replay_verify
from test_nn_index import IMPLS, mutation_script
from test_verify import packing_config

# twice the largest height over five pilot seeds (scripts/height_pilot.py gave 20)
HEIGHT_THRESHOLD = 40

MATRIX_KINDS = ("centroid", "wards")
MATRIX_EPS = (0.01, 0.1, 1.0)
MATRIX_K = (1, 2, 3)
MATRIX_N = (50, 500, 2000)
MATRIX_SEEDS = range(10)


@pytest.fixture(scope="module")
def matrix():
    """Every parallel run of the correctness matrix, with checks on."""
    runs = []
    t0 = time.perf_counter()
    for kind in MATRIX_KINDS:
        for eps in MATRIX_EPS:
            for k in MATRIX_K:
                for n in MATRIX_N:
                    for seed in MATRIX_SEEDS:
                        inst = gen_uniform(n, k, seed, kind)
                        run = {"kind": kind, "eps": eps, "k": k, "n": n, "seed": seed,
                               "error": None, "verified": False}
                        try:
                            trace, stats = run_parallel(inst, eps, check=True)
                        except (NonInterferenceViolated, SeparationViolated) as exc:
                            run["error"] = type(exc).__name__
                            runs.append(run)
                            continue
                        run["verified"] = replay_verify(inst, trace, 1 + eps).ok
                        run["phases"] = stats.num_phases
                        run["bound"] = math.ceil(math.log(stats.aspect_ratio)
                                                 / math.log1p(eps)) + 1
                        run["bb_len"] = stats.max_bounce_back_len
                        runs.append(run)
    return runs, time.perf_counter() - t0


def random_cluster(rng, k, cid):
    m = int(rng.integers(1, 5))
    pts = rng.random((m, k))
    ws = rng.uniform(1, 100, m)
    mu = (ws[:, None] * pts).sum(axis=0) / ws.sum()
    return pts, ws, Cluster(cid, mu, ws.sum())


def _exact_summary(cl):
    return [mpq(float(x)) for x in cl.centroid], mpq(cl.weight)


def _exact_cost(pts, ws):
    W = sum(ws)
    mu = [sum(w * p[d] for p, w in zip(pts, ws)) / W for d in range(len(pts[0]))]
    return sum(w * sum((p[d] - mu[d]) ** 2 for d in range(len(mu))) for p, w in zip(pts, ws))


def _exact_raw_delta(pa, wa, pb, wb):
    """Raw-point objective increase of merging two point sets, exactly."""
    fa = [[mpq(float(x)) for x in p] for p in pa]
    fb = [[mpq(float(x)) for x in p] for p in pb]
    qa = [mpq(float(w)) for w in wa]
    qb = [mpq(float(w)) for w in wb]
    return _exact_cost(fa + fb, qa + qb) - _exact_cost(fa, qa) - _exact_cost(fb, qb)


def _exact_ward(ca, wa, cb, wb):
    return wa * wb / (wa + wb) * sum((x - y) ** 2 for x, y in zip(ca, cb))


def test_criterion_01_linkage_identities(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad: dict[str, int] = {}
    float_lw_misses = 0

    def tally(name, ok):
        if not ok:
            bad[name] = bad.get(name, 0) + 1

    for i in range(10_000):
        k = (1, 2, 3, 5)[i % 4]
        (pa, wa, a), (pb, wb, b), (_, _, c) = (random_cluster(rng, k, j) for j in range(3))
        dab, dac, dbc = (linkage(x, y, "wards") for x, y in [(a, b), (a, c), (b, c)])
        # the identity through the library update, in exact arithmetic on the
        # same summaries; float64 inputs alone can carry more than 1e-9
        # relative error when the result cancels (counted separately)
        (ea, xa), (eb, xb), (ec, xc) = map(_exact_summary, (a, b, c))
        lw = lance_williams_update(_exact_ward(ea, xa, ec, xc), _exact_ward(eb, xb, ec, xc),
                                   _exact_ward(ea, xa, eb, xb), xa, xb, xc)
        eab = [(xa * p + xb * q) / (xa + xb) for p, q in zip(ea, eb)]
        direct = _exact_ward(eab, xa + xb, ec, xc)
        tally("lance_williams", abs(lw - direct) <= mpq(1, 10**9) * abs(direct))
        flw = lance_williams_update(dac, dbc, dab, a.weight, b.weight, c.weight)
        fdirect = linkage(merge_clusters(a, b, -1), c, "wards")
        float_lw_misses += abs(flw - fdirect) > 1e-9 * abs(fdirect)
        raw = _exact_raw_delta(pa, wa, pb, wb)
        tally("alternate_wards", abs(mpq(dab) - raw) <= mpq(1, 10**9) * abs(raw))
        tally("weight_stability", check_weight_stability(a, b, "centroid").holds)
        tally("wards_sandwich", check_wards_sandwich(a, b).holds)
        for kind in ("centroid", "wards"):
            tally(f"average_reducibility_{kind}",
                  check_average_reducibility(a, b, c, kind).holds)
            tally(f"apx_triangle_{kind}", check_apx_triangle(a, b, c, kind).holds)
        tally("weak_reducibility", check_weak_reducibility(a, b, c).holds)
    elapsed = time.perf_counter() - t0
    passed = not bad and elapsed < 10
    report(1, passed, f"10000 triples, failures {bad or 'none'}, {elapsed:.1f}s (< 10s); "
                      f"float64 Lance-Williams beyond 1e-9: {float_lw_misses}")
    assert passed


def test_criterion_02_nonmonotone_triangle(report):
    vals = [r.value for r in run_exact(gen_nonmon_triangle())]
    err = max(abs(vals[0] - 1.0), abs(vals[1] - math.sqrt(3) / 2))
    passed = len(vals) == 2 and err <= 1e-12
    report(2, passed, f"merge values {vals}, max error {err:.1e} (<= 1e-12)")
    assert passed


def test_criterion_03_parallel_correctness(matrix, report):
    runs, elapsed = matrix
    failed = [r for r in runs if not r["verified"]]
    passed = not failed and elapsed < 600
    report(3, passed, f"{len(runs) - len(failed)}/{len(runs)} runs verified at c = 1+eps, "
                      f"{elapsed:.0f}s (< 600s)")
    assert passed


def test_criterion_04_non_interference(matrix, report):
    runs, _ = matrix
    errors = [r for r in runs if r["error"]]
    small = sum(r["n"] <= 500 for r in runs)
    report(4, not errors, f"{len(errors)} check failures over {len(runs)} runs; "
                          f"separation sampled on {small} runs with n <= 500")
    assert not errors


def test_criterion_05_wards_single_step_paths(matrix, report):
    runs, _ = matrix
    ward = [r for r in runs if r["kind"] == "wards" and r["error"] is None]
    longest = max(r["bb_len"] for r in ward)
    report(5, longest == 1, f"max bounce-back length {longest} over {len(ward)} Ward's runs")
    assert longest == 1


def test_criterion_06_phase_count(matrix, report):
    runs, _ = matrix
    done = [r for r in runs if r["error"] is None]
    over = {kind: [r for r in done if r["kind"] == kind and r["phases"] > r["bound"]]
            for kind in MATRIX_KINDS}
    worst = max((r["phases"] - r["bound"] for r in done), default=0)
    passed = not any(over.values())
    report(6, passed, "runs over ceil(log_{1+eps} rho) + 1: "
                      + ", ".join(f"{k} {len(v)}/{sum(r['kind'] == k for r in done)}"
                                  for k, v in over.items())
                      + f"; worst excess {worst} phases")
    assert passed


def test_criterion_07_potential_monotone(report):
    increases, worst = 0, 0.0
    for kind in ("centroid", "wards"):
        for seed in range(100):
            inst = gen_uniform(200, 2, seed, kind)
            pot = potential_monitor(inst, run_exact(inst), seed % inst.n, rel=1e-9)
            increases += pot.increases
            worst = max(worst, pot.max_rel_increase)
    report(7, increases == 0, f"{increases} within-phase increases over 200 traces "
                              f"(largest relative change {worst:.1e})")
    assert increases == 0


def test_criterion_08_packing(report):
    over = []
    for seed in range(100):
        pts, r, R, k = packing_config(seed)
        rep = packing_check(pts, np.ones(len(pts)), r, R, np.zeros(k))
        if not rep.holds:
            over.append((seed, rep.count, rep.bound))
    report(8, not over, f"{100 - len(over)}/100 configurations within (3R/r)^k")
    assert not over


def test_criterion_09_nn_index_oracle(report):
    queries = {impl: sum(mutation_script(impl, seed) for seed in range(200)) for impl in IMPLS}
    report(9, True, "200 scripts per index matched brute force; queries "
                    + ", ".join(f"{k} {v}" for k, v in queries.items()))


def test_criterion_10_hardness_differential(report):
    n = max(N_MIN, 40)
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    agree, invariant_fail = 0, []
    for _ in range(200):
        rep = hardness_differential(random_tcp(n, rng))
        agree += rep.agree
        if not all(rep.invariants.values()):
            invariant_fail.append(rep.first_failure)
    elapsed = time.perf_counter() - t0
    passed = agree == 200 and not invariant_fail and elapsed < 1200
    report(10, passed, f"n = {n} (n_min {N_MIN}): {agree}/200 agree, "
                       f"{len(invariant_fail)} invariant failures, {elapsed:.0f}s (< 1200s)")
    assert passed


def test_criterion_11_height(report):
    h = dendrogram_height(run_exact(gen_uniform(4096, 2, 0)))
    report(11, h <= HEIGHT_THRESHOLD, f"exact centroid height {h} on gen_uniform(4096, 2) "
                                      f"(frozen threshold {HEIGHT_THRESHOLD})")
    assert h <= HEIGHT_THRESHOLD


DETERMINISM_CASES = [
    ("centroid", ["--mode", "parallel", "--eps", "0.1"]),
    ("wards", ["--mode", "parallel", "--eps", "0.01", "--index", "grid"]),
    ("centroid", ["--mode", "parallel", "--eps", "1.0", "--check"]),
    ("wards", ["--mode", "capprox", "--eps", "0.5", "--seed", "7"]),
    ("centroid", ["--mode", "exact"]),
]


def test_criterion_12_determinism(report):
    differ = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for case, (kind, flags) in enumerate(DETERMINISM_CASES):
            pts = tmp / f"p{case}.csv"
            write_points(pts, gen_uniform(300, 1 + case % 3, case, kind))
            outs = []
            for rep, threads in enumerate(["1", "1", "4"]):
                out = tmp / f"t{case}_{rep}.jsonl"
                code = cli_main(["run", str(pts), "--linkage", kind, *flags,
                                 "--threads", threads, "--out-trace", str(out)])
                assert code == 0
                outs.append(out.read_bytes())
            if len(set(outs)) != 1:
                differ.append(case)
    report(12, not differ, f"{len(DETERMINISM_CASES)} cases x (2 runs + --threads 4): "
                           f"{len(differ)} differ")
    assert not differ
