import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parhac.core import (Cluster, DegenerateInstance, Dendrogram, IncompleteTrace, Instance,
                         LinkageKind, MalformedInput, MalformedTrace, MergeRecord, MergeTrace,
                         aspect_ratio, dendrogram_height, duplicate_groups, merge_clusters,
                         normalize_scale, premerge_duplicates)
from parhac.gen import gen_chain, gen_uniform
from parhac.hac_seq import direct_linkage_oracle, run_exact
from parhac.verify import replay_clusters


def line(xs, kind="centroid", weights=None):
    return Instance(np.array(xs, dtype=float)[:, None], weights, kind)


def test_instance_validation():
    with pytest.raises(MalformedInput):
        Instance(np.zeros((1, 2)))
    with pytest.raises(MalformedInput):
        Instance(np.array([[0.0], [np.nan]]))
    with pytest.raises(MalformedInput):
        Instance(np.zeros((2, 1)), np.array([1.0, 0.0]))
    with pytest.raises(MalformedInput):
        Instance(np.zeros((2, 1)), np.array([1.0, 1.5]), "wards")
    with pytest.raises(MalformedInput):
        Instance(np.zeros((3, 1)), np.array([1.0, 1.0]))
    inst = Instance(np.zeros((2, 3)))
    assert inst.n == 2 and inst.dim == 3
    assert np.all(inst.weights == 1)
    assert inst.with_kind("ward").kind is LinkageKind.WARDS


def test_linkage_kind_parse():
    assert LinkageKind.parse("Centroid") is LinkageKind.CENTROID
    assert LinkageKind.parse("ward's") is LinkageKind.WARDS
    with pytest.raises(ValueError):
        LinkageKind.parse("single")


def test_aspect_ratio_examples():
    assert aspect_ratio(line([0, 1])) == 1.0
    assert aspect_ratio(line([0, 1, 3])) == 3.0
    # Ward's pair values from the raw-point objective: 1/2, 9/2, 4/2
    vals = [direct_linkage_oracle([[a]], [1], [[b]], [1], "wards") for a, b in [(0, 1), (0, 3), (1, 3)]]
    assert vals == pytest.approx([0.5, 4.5, 2.0], rel=1e-12)
    assert aspect_ratio(line([0, 1, 3], "wards")) == pytest.approx(max(vals) / min(vals), rel=1e-12)
    assert aspect_ratio(line([0, 1, 3], "wards")) == pytest.approx(9.0, rel=1e-12)


def test_aspect_ratio_degenerate():
    with pytest.raises(DegenerateInstance):
        aspect_ratio(line([2, 2, 2]))


def test_aspect_ratio_ignores_duplicates():
    assert aspect_ratio(line([0, 0, 5])) == 1.0


def test_normalize_scale_examples():
    out, f = normalize_scale(line([0, 2]))
    assert f == 0.5
    assert out.coords[:, 0].tolist() == [0.0, 1.0]

    out, f = normalize_scale(line([0, 0, 5]))
    # the singleton keeps id 2 and precedes the merged duplicate pair (new id 3)
    assert out.n == 2 and out.weights.tolist() == [1.0, 2.0]
    assert f == pytest.approx(1 / 5)
    assert out.coords[:, 0].tolist() == pytest.approx([1.0, 0.0])

    out, f = normalize_scale(line([0, 2], "wards"))
    assert f == pytest.approx(1 / math.sqrt(2))
    d = direct_linkage_oracle(out.coords[:1], [1], out.coords[1:], [1], "wards")
    assert d == pytest.approx(1.0, rel=1e-12)


def test_dendrogram_height_examples():
    t = MergeTrace(2, [MergeRecord(0, 0, 1, 2, 1.0)])
    assert dendrogram_height(t) == 1
    t = MergeTrace(4, [MergeRecord(0, 0, 1, 4, 1.0), MergeRecord(1, 2, 3, 5, 1.0),
                       MergeRecord(2, 4, 5, 6, 2.0)])
    assert dendrogram_height(t) == 2
    with pytest.raises(IncompleteTrace):
        dendrogram_height(MergeTrace(4, t.records[:2]))


def test_chain_height_matches_replay():
    inst = gen_chain(8, 0.01)
    trace = run_exact(inst)
    # independent height: count the merges each leaf's lineage goes through
    owner = {i: {i} for i in range(inst.n)}
    count = [0] * inst.n
    for rec in trace:
        members = owner.pop(rec.a_id) | owner.pop(rec.b_id)
        for m in members:
            count[m] += 1
        owner[rec.new_id] = members
    assert dendrogram_height(trace) == max(count)


def test_dendrogram_text_and_errors():
    t = MergeTrace(3, [MergeRecord(0, 0, 1, 3, 1.0), MergeRecord(1, 3, 2, 4, 0.5)])
    assert Dendrogram.from_trace(t).to_text() == "((0,1):1.0,2):0.5"
    bad = MergeTrace(3, [MergeRecord(0, 0, 1, 3, 1.0), MergeRecord(1, 0, 2, 4, 0.5)])
    with pytest.raises(MalformedTrace):
        Dendrogram.from_trace(bad)


def test_merge_record_roundtrip_and_validation():
    rec = MergeRecord(3, 1, 2, 7, 0.25, 4, 1)
    assert MergeRecord.from_dict(rec.to_dict()) == rec
    with pytest.raises(MalformedTrace):
        MergeRecord.from_dict({"step": 0, "a_id": 1, "b_id": 1, "new_id": 2, "value": 1.0})
    with pytest.raises(MalformedTrace):
        MergeRecord.from_dict({"step": 0, "a_id": 1, "b_id": 2, "new_id": 3, "value": -1.0})
    with pytest.raises(MalformedTrace):
        MergeRecord.from_dict({"step": 0, "a_id": 1})


def test_premerge_duplicates_order():
    inst = line([3, 0, 3, 0, 3])
    recs, clusters = premerge_duplicates(inst)
    assert duplicate_groups(inst.coords) == [[0, 2, 4], [1, 3]]
    assert [(r.a_id, r.b_id, r.new_id, r.value) for r in recs] == [
        (0, 2, 5, 0.0), (5, 4, 6, 0.0), (1, 3, 7, 0.0)]
    assert [(c.id, c.weight) for c in clusters] == [(6, 3.0), (7, 2.0)]


def test_merge_clusters_weighted_mean():
    a = Cluster(0, [0.0, 0.0], 3)
    b = Cluster(1, [4.0, 0.0], 1)
    m = merge_clusters(a, b, 2)
    assert m.centroid.tolist() == [1.0, 0.0] and m.weight == 4.0


@given(st.integers(0, 10_000), st.integers(3, 25), st.integers(1, 3))
def test_replayed_clusters_match_raw_members(seed, n, k):
    rng = np.random.default_rng(seed)
    inst = Instance(rng.random((n, k)), rng.integers(1, 5, n).astype(float))
    trace = run_exact(inst)
    members = {i: [i] for i in range(n)}
    for upto, rec in enumerate(trace, start=1):
        members[rec.new_id] = members.pop(rec.a_id) + members.pop(rec.b_id)
        if upto % 5 and upto != len(trace):
            continue
        got = {c.id: c for c in replay_clusters(inst, trace, upto)}
        for cid, mem in members.items():
            w = inst.weights[mem]
            mu = (w[:, None] * inst.coords[mem]).sum(axis=0) / w.sum()
            assert got[cid].weight == w.sum()
            np.testing.assert_allclose(got[cid].centroid, mu, rtol=1e-9, atol=1e-12)


@given(st.integers(0, 10_000))
def test_height_invariant_under_disjoint_permutation(seed):
    rng = np.random.default_rng(seed)
    trace = run_exact(gen_uniform(12, 2, seed))
    recs = list(trace.records)
    # swap adjacent merges that share no cluster
    for _ in range(10):
        i = int(rng.integers(0, len(recs) - 1))
        a, b = recs[i], recs[i + 1]
        if {a.a_id, a.b_id, a.new_id}.isdisjoint({b.a_id, b.b_id}):
            recs[i], recs[i + 1] = b, a
    assert dendrogram_height(MergeTrace(12, recs)) == dendrogram_height(trace)


@given(st.integers(0, 10_000), st.sampled_from(["centroid", "wards"]))
def test_aspect_ratio_scale_invariant(seed, kind):
    inst = gen_uniform(15, 3, seed, kind)
    out, _ = normalize_scale(inst)
    assert aspect_ratio(out) == pytest.approx(aspect_ratio(inst), rel=1e-9)
