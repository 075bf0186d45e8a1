"""Sequential HAC: the exact baseline and policy-driven c-approximate runs.

The state is a dense matrix of linkage values between alive clusters plus
each row's minimum.  After a merge only the new cluster's row is recomputed,
and only rows whose minimum pointed at one of the two merged clusters are
rescanned; every other row minimum can change only through the new row.
This is exact for any linkage (no reducibility is assumed) and keeps a full
run at O(n^2) memory with small per-step cost.
"""
from __future__ import annotations

import enum

import numpy as np

from .core import Instance, LinkageKind, MergeRecord, MergeTrace, merged_centroid
from .linkage import linkage_block


class Policy(str, enum.Enum):
    MIN_PAIR = "min_pair"
    MAX_WITHIN_C = "max_within_c"
    RANDOM_WITHIN_C = "random_within_c"


def _full_matrix(cents: np.ndarray, weights: np.ndarray, kind) -> np.ndarray:
    n = cents.shape[0]
    D = np.empty((n, n))
    step = max(1, 1_000_000 // n)
    for s in range(0, n, step):
        D[s:s + step] = linkage_block(cents[s:s + step], weights[s:s + step], cents, weights, kind)
    np.fill_diagonal(D, np.inf)
    return D


class _MatrixState:
    def __init__(self, inst: Instance):
        self.kind = inst.kind
        self.n = inst.n
        self.cents = inst.coords.copy()
        self.weights = inst.weights.copy()
        self.slot_id = np.arange(self.n, dtype=np.int64)
        self.alive = np.ones(self.n, dtype=bool)
        self.D = _full_matrix(self.cents, self.weights, self.kind)
        self.rowmin = self.D.min(axis=1)
        self.rowarg = self.D.argmin(axis=1)
        self.next_id = self.n

    def min_value(self) -> float:
        return float(self.rowmin.min())

    def min_pair(self) -> tuple[int, int]:
        """Slots of the minimum pair, ties broken by the smallest id pair."""
        v = self.rowmin.min()
        rows = np.flatnonzero(self.rowmin == v)
        if rows.size == 2 and self.rowarg[rows[0]] == rows[1]:
            return int(rows[0]), int(rows[1])
        best = None
        for s in rows:
            for t in np.flatnonzero(self.D[s] == v):
                a, b = int(self.slot_id[s]), int(self.slot_id[t])
                key = (min(a, b), max(a, b))
                if best is None or key < best[0]:
                    best = (key, int(s), int(t))
        return best[1], best[2]

    def eligible_pairs(self, bound: float) -> tuple[np.ndarray, np.ndarray]:
        """Slot pairs (s < t) with value <= bound."""
        s, t = np.nonzero(np.triu(self.D <= bound, 1))
        return s, t

    def merge(self, sa: int, sb: int, step: int) -> MergeRecord:
        D = self.D
        ida, idb = int(self.slot_id[sa]), int(self.slot_id[sb])
        value = float(D[sa, sb])
        new_c = merged_centroid(self.cents[sa], self.weights[sa], self.cents[sb], self.weights[sb])
        new_w = self.weights[sa] + self.weights[sb]
        new_id = self.next_id
        self.next_id += 1

        self.alive[sb] = False
        D[sb, :] = np.inf
        D[:, sb] = np.inf
        self.rowmin[sb] = np.inf

        self.cents[sa] = new_c
        self.weights[sa] = new_w
        self.slot_id[sa] = new_id
        row = linkage_block(new_c, np.array([new_w]), self.cents, self.weights, self.kind)[0]
        row[~self.alive] = np.inf
        row[sa] = np.inf
        D[sa, :] = row
        D[:, sa] = row

        stale = self.alive & ((self.rowarg == sa) | (self.rowarg == sb))
        stale[sa] = False
        idx = np.flatnonzero(stale)
        if idx.size:
            sub = D[idx]
            self.rowarg[idx] = sub.argmin(axis=1)
            self.rowmin[idx] = sub[np.arange(idx.size), self.rowarg[idx]]
        better = self.alive & ~stale & (row < self.rowmin)
        better[sa] = False
        self.rowmin[better] = row[better]
        self.rowarg[better] = sa
        self.rowarg[sa] = int(row.argmin())
        self.rowmin[sa] = row[self.rowarg[sa]]
        return MergeRecord(step, min(ida, idb), max(ida, idb), new_id, value)


def run_exact(inst: Instance) -> MergeTrace:
    """Exact HAC: always merge the closest pair, ties by smallest id pair."""
    return run_c_approx(inst, 1.0, Policy.MIN_PAIR)


def run_c_approx(inst: Instance, c: float = 1.0, policy=Policy.MIN_PAIR,
                 seed: int | None = None) -> MergeTrace:
    """Sequential HAC where each merge is within a factor ``c`` of the minimum.

    ``policy`` picks among eligible pairs: the minimum pair, the largest
    eligible value, or a uniformly random eligible pair (seeded).  Ties are
    broken by the smallest (a_id, b_id).  Eligible-pair policies scan the
    whole matrix every step, so they are meant for small instances.
    """
    if c < 1:
        raise ValueError("c must be at least 1")
    policy = Policy(policy)
    rng = np.random.default_rng(seed)
    st = _MatrixState(inst)
    trace = MergeTrace(inst.n)
    for step in range(inst.n - 1):
        if policy is Policy.MIN_PAIR:
            sa, sb = st.min_pair()
        else:
            bound = c * st.min_value()
            s, t = st.eligible_pairs(bound)
            ia, ib = st.slot_id[s], st.slot_id[t]
            lo, hi = np.minimum(ia, ib), np.maximum(ia, ib)
            if policy is Policy.MAX_WITHIN_C:
                vals = st.D[s, t]
                order = np.lexsort((hi, lo, -vals))
            else:
                order = np.lexsort((hi, lo))
                order = order[[int(rng.integers(order.size))]]
            sa, sb = int(s[order[0]]), int(t[order[0]])
        trace.append(st.merge(sa, sb, step))
    return trace


def current_min_linkage(inst: Instance, trace: MergeTrace, upto: int) -> float:
    """Minimum pairwise linkage among clusters alive after ``upto`` merges."""
    from .verify import replay_clusters

    clusters = replay_clusters(inst, trace, upto)
    cents = np.array([c.centroid for c in clusters])
    weights = np.array([c.weight for c in clusters])
    D = _full_matrix(cents, weights, inst.kind)
    return float(D.min())


def delta_objective(points: np.ndarray, weights: np.ndarray) -> float:
    """Weighted k-means cost sum_x w_x ||x - mu||^2 of one cluster."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    mu = (weights[:, None] * points).sum(axis=0) / weights.sum()
    return float((weights * ((points - mu) ** 2).sum(axis=1)).sum())


def direct_linkage_oracle(points_a, weights_a, points_b, weights_b, kind) -> float:
    """Linkage from raw member points.

    Centroid: distance between weighted means.  Ward's: increase of the
    weighted k-means objective, cost(A u B) - cost(A) - cost(B).
    """
    pa = np.atleast_2d(np.asarray(points_a, dtype=np.float64))
    pb = np.atleast_2d(np.asarray(points_b, dtype=np.float64))
    wa = np.asarray(weights_a, dtype=np.float64).reshape(-1)
    wb = np.asarray(weights_b, dtype=np.float64).reshape(-1)
    if LinkageKind.parse(kind) is LinkageKind.WARDS:
        both = np.vstack([pa, pb])
        wboth = np.concatenate([wa, wb])
        return delta_objective(both, wboth) - delta_objective(pa, wa) - delta_objective(pb, wb)
    mua = (wa[:, None] * pa).sum(axis=0) / wa.sum()
    mub = (wb[:, None] * pb).sum(axis=0) / wb.sum()
    return float(np.sqrt(((mua - mub) ** 2).sum()))
