import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parhac.core import Cluster, Instance, dendrogram_height
from parhac.gen import gen_chain, gen_nonmon_triangle, gen_sphere_center, gen_uniform
from parhac.hac_parallel import (PhaseState, bounce_back, build_shells_and_conflicts,
                                 locally_optimal_prefix,
                                 path_radius, run_parallel, select_mis, shell_radius)
from parhac.linkage import LinkageParams, linkage
from parhac.nn_index import BruteForceIndex
from parhac.verify import replay_verify


def test_radii():
    assert path_radius(1.0, 3, 2.0) == 12.0
    assert shell_radius(1.0, 3, 2.0) == 30.0
    # c = 4: L^{1 + log2 4} = L^3
    assert path_radius(4.0, 2, 1.0) == 2 * 4 * 8
    assert shell_radius(4.0, 2, 1.0) == 5 * 64 * 8


def test_select_mis_by_hand():
    assert select_mis([3, 1, 2, 4], [(1, 2), (2, 3), (3, 4)]) == [1, 3]
    assert select_mis([5, 6], []) == [5, 6]


def test_locally_optimal_prefix_chain():
    inst = gen_chain(5, 0.1)
    idx = BruteForceIndex("centroid", [Cluster(i, inst.coords[i], 1) for i in range(5)])
    bb = locally_optimal_prefix(idx.get(0), idx, 3)
    assert bb.path == [1, 2, 3]
    assert bb.values[0] == pytest.approx(1.1)
    # thresholds cut the path after the first merge
    bb = locally_optimal_prefix(idx.get(0), idx, 3, lower=1.0, upper=1.2)
    assert bb.path == [1]


@given(st.integers(0, 10_000), st.sampled_from(["centroid", "wards"]))
def test_bounce_back_matches_greedy(seed, kind):
    inst = gen_uniform(30, 2, seed, kind)
    params = LinkageParams.for_kind(kind)
    idx = BruteForceIndex(kind, [Cluster(i, inst.coords[i], 1) for i in range(inst.n)])
    a = idx.get(seed % inst.n)
    nn = idx.nearest(a)
    ph = PhaseState(0, nn.value / 1.05, nn.value * 1.1)
    bb = bounce_back(a, ph, idx, params, check=True)
    ref = locally_optimal_prefix(a, idx, inst.n, ph.lower, ph.upper)
    assert bb.path == ref.path and bb.values == ref.values


def test_two_points():
    inst = Instance(np.array([[0.0, 0.0], [3.0, 4.0]]))
    trace, stats = run_parallel(inst, 0.1, check=True)
    assert len(trace) == 1 and trace.records[0].value == 5.0
    assert stats.num_phases == 1 and stats.height == 1


def test_duplicates_premerged():
    inst = Instance(np.array([[0.0], [0.0], [1.0], [0.0]]))
    trace, _ = run_parallel(inst, 0.1, check=True)
    assert [r.value for r in trace][:2] == [0.0, 0.0]
    assert replay_verify(inst, trace, 1.1).ok


def test_all_duplicates():
    inst = Instance(np.zeros((4, 2)))
    trace, stats = run_parallel(inst, 0.5)
    assert len(trace) == 3 and stats.num_phases == 0


def test_sphere_center():
    inst = gen_sphere_center(3, 100.0, seed=1)
    trace, stats = run_parallel(inst, 0.1, check=True)
    assert replay_verify(inst, trace, 1.1).ok
    assert stats.height == dendrogram_height(trace)


@pytest.mark.parametrize("index", ["brute", "grid"])
@given(st.integers(0, 10_000), st.sampled_from(["centroid", "wards"]),
       st.sampled_from([0.01, 0.1, 1.0]), st.integers(1, 3))
def test_parallel_is_approximate(index, seed, kind, eps, k):
    inst = gen_uniform(60, k, seed, kind)
    trace, stats = run_parallel(inst, eps, check=True, index=index)
    rep = replay_verify(inst, trace, 1 + eps)
    assert rep.ok, rep.first_violation
    assert stats.height == dendrogram_height(trace)
    if kind == "wards":
        assert stats.max_bounce_back_len == 1
    # centroid merge values never exceed the largest singleton distance; a
    # Ward's merge can reach n/2 times the largest singleton value
    spread = stats.aspect_ratio * (inst.n / 2 if kind == "wards" else 1)
    bound = math.ceil(math.log(spread) / math.log1p(eps)) + 1
    assert stats.num_phases <= bound


@given(st.integers(0, 10_000))
def test_index_and_threads_do_not_change_trace(seed):
    inst = gen_uniform(80, 2, seed)
    base, _ = run_parallel(inst, 0.1)
    assert run_parallel(inst, 0.1, index="grid")[0].records == base.records
    assert run_parallel(inst, 0.1, threads=3)[0].records == base.records


def test_triangle_bounce_back():
    trace, stats = run_parallel(gen_nonmon_triangle(), 0.01, check=True)
    assert [r.value for r in trace] == pytest.approx([1.0, math.sqrt(3) / 2], abs=1e-12)
    # the second merge is below the first: it rides on the same bounce-back path
    assert stats.num_phases == 1 and stats.num_rounds_per_phase == [1]
    assert stats.max_bounce_back_len == 2


def test_isolated_pairs_have_single_step_paths():
    inst = Instance(np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 0.0], [102.0, 0.0]]))
    trace, stats = run_parallel(inst, 0.1, check=True)
    assert stats.max_bounce_back_len == 1
    assert [(r.a_id, r.b_id) for r in trace][:2] == [(0, 1), (2, 3)]


def test_far_apart_gadgets_run_independently():
    tri = gen_nonmon_triangle().coords
    both = Instance(np.vstack([tri, tri + [100.0, 0.0]]))
    trace, stats = run_parallel(both, 0.01, check=True)
    assert stats.num_rounds_per_phase[0] == 1
    first_round = [(r.a_id, r.b_id) for r in trace][:4]
    assert {x for pair in first_round for x in pair} >= {0, 1, 2, 3, 4, 5}
    assert replay_verify(both, trace, 1.01).ok


@pytest.mark.parametrize("kind", ["centroid", "wards"])
def test_large_run_phase_bound_from_observed_values(kind):
    inst = gen_uniform(2000, 2, 0, kind)
    trace, stats = run_parallel(inst, 0.1)
    assert replay_verify(inst, trace, 1.1).ok
    values = np.array([r.value for r in trace])
    spread = values.max() / values[values > 0].min()
    assert stats.num_phases <= math.ceil(math.log(spread) / math.log(1.1)) + 1


def _bbs_for(clusters, kind):
    idx = BruteForceIndex(kind, clusters)
    out = {}
    for c in clusters:
        nn = idx.nearest(c)
        out[c.id] = locally_optimal_prefix(c, idx, 2, lower=nn.value, upper=nn.value * 1.5)
    return out


def test_conflicts_far_apart_and_on_path():
    clusters = [Cluster(0, [0.0], 1), Cluster(1, [1.0], 1), Cluster(2, [1000.0], 1),
                Cluster(3, [1001.0], 1)]
    snap = {c.id: c for c in clusters}
    bbs = _bbs_for(clusters, "centroid")
    _, edges = build_shells_and_conflicts(clusters, bbs, snap, 10.0, "centroid")
    # 0 and 1 sit on each other's paths; the two pairs are far apart
    assert edges == {(0, 1), (2, 3)}


@given(st.integers(0, 10_000), st.sampled_from(["centroid", "wards"]))
def test_conflicts_match_brute_force(seed, kind):
    rng = np.random.default_rng(seed)
    clusters = [Cluster(i, rng.random(2), float(rng.integers(1, 5))) for i in range(50)]
    snap = {c.id: c for c in clusters}
    bbs = _bbs_for(clusters, kind)
    radius = float(rng.uniform(0.05, 0.3))
    shells, edges = build_shells_and_conflicts(clusters, bbs, snap, radius, kind)
    ref_edges = set()
    for a in clusters:
        members = [a.id, *bbs[a.id].path]
        shell = {b.id for b in clusters
                 if any(linkage(snap[m], b, kind) <= radius for m in members)}
        assert shells[a.id] == shell
        ref_edges |= {(min(a.id, b), max(a.id, b)) for b in shell if b != a.id}
    assert edges == ref_edges
