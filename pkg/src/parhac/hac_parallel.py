"""Phase/round parallel (1+eps)-approximate HAC.

Phase t works with thresholds lower = m(1+eps)^t and upper = m(1+eps)^{t+1},
where m is the minimum pairwise linkage of the (duplicate-free) input, so no
rescaling of coordinates is needed.  At every round start all pairwise
linkages are at least ``lower``.  A cluster is active while its nearest
neighbour is closer than ``upper``.  Each round:

1. every active cluster A computes its bounce-back path against a frozen
   snapshot: merge with the nearest neighbour, then keep absorbing the
   nearest neighbour while that value is below ``lower``;
2. every path gets a shell, the active clusters within
   5 c^3 L^{1+log2 c} upper of A or of any path member (c is the linkage's
   approximate-triangle constant, L the longest path of the round);
3. a maximal independent set of the conflict graph (A ~ B when one lies in
   the other's shell) is chosen greedily by ascending id;
4. the selected paths are executed and appended to the trace in ascending
   owner order.

With ``check=True`` the engine re-executes every selected path against the
live state and raises :class:`NonInterferenceViolated` on any difference,
asserts the round invariant, checks that path members lie in the pool
radius 2 c L^{1+log2 c} upper, and on small instances checks that clusters
touched by different selected paths stay at least ``upper`` apart.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (Cluster, Instance, LinkageKind, MergeRecord, MergeTrace,
                   NonInterferenceViolated, ParhacError, PoolTooSmall, RunStats,
                   aspect_ratio, dendrogram_height, merge_clusters, merged_centroid,
                   premerge_duplicates)
from .linkage import LinkageParams, linkage, linkage_block
from .nn_index import NnIndex, make_index

log = logging.getLogger(__name__)


class RoundInvariantViolated(ParhacError):
    """A pairwise linkage below the phase's lower threshold at a round start."""


class SeparationViolated(ParhacError):
    """Clusters touched by two different selected paths came closer than upper."""


@dataclass
class PhaseState:
    t: int
    lower: float
    upper: float
    active: list[int] = field(default_factory=list)
    r: int = 0


@dataclass
class BounceBack:
    owner: int
    path: list[int]
    values: list[float]
    merged: list[Cluster] = field(default_factory=list)  # A_1..A_l, ids unassigned (-1)
    shell: set[int] = field(default_factory=set)

    @property
    def length(self) -> int:
        return len(self.path)


def path_radius(c_delta: float, L: int, upper: float) -> float:
    """Linkage radius around A containing every member of a path of length <= L."""
    return 2 * c_delta * L ** (1 + math.log2(c_delta)) * upper


def shell_radius(c_delta: float, L: int, upper: float) -> float:
    return 5 * c_delta ** 3 * L ** (1 + math.log2(c_delta)) * upper


# --------------------------------------------------------------------------
# single-cluster path routines


def locally_optimal_prefix(a: Cluster, index: NnIndex, budget: int,
                           lower: float | None = None, upper: float | None = None
                           ) -> BounceBack:
    """Greedy nearest-neighbour merge sequence of ``a`` against ``index``.

    Step i merges the current super-cluster with its exact nearest neighbour
    among the clusters not yet absorbed.  Stops after ``budget`` steps, or,
    when thresholds are given, as soon as the first value is not below
    ``upper`` or a later value is not below ``lower``.
    """
    bb = BounceBack(a.id, [], [])
    cur = Cluster(-1, a.centroid, a.weight)
    taken = {a.id}
    while len(bb.path) < budget:
        nb = index.nearest(cur, taken)
        if nb is None:
            break
        limit = upper if not bb.path else lower
        if limit is not None and not nb.value < limit:
            break
        b = index.get(nb.id)
        cur = merge_clusters(cur, b, -1)
        taken.add(nb.id)
        bb.path.append(nb.id)
        bb.values.append(nb.value)
        bb.merged.append(cur)
    return bb


def bounce_back(a: Cluster, phase: PhaseState, index: NnIndex, params: LinkageParams,
                check: bool = False, budget: int | None = None) -> BounceBack:
    """Bounce-back path of ``a`` computed from a linkage-ball candidate pool.

    The pool is the set of clusters within ``path_radius(c, L, upper)`` of
    ``a``, where L starts at 1 and grows with the path.  A pool answer is
    accepted only when it is certified: anything outside the pool is at
    linkage > R from ``a`` and hence, by the approximate triangle
    inequality, > R/c - d(a, A_i) from the current super-cluster A_i.
    Uncertified steps double L and restart.  With ``check=True`` each step
    is compared with an exact index query and a mismatch raises
    :class:`PoolTooSmall`.
    """
    c = params.c_delta
    budget = budget if budget is not None else len(index) + 1
    L = 1
    while True:
        R = path_radius(c, L, phase.upper)
        pool = {nb.id: index.get(nb.id) for nb in index.radius_query(a, R, [a.id])}
        bb = BounceBack(a.id, [], [])
        cur = Cluster(-1, a.centroid, a.weight)
        restart = False
        while len(bb.path) < budget:
            if len(bb.path) + 1 > L:
                L = len(bb.path) + 1
                restart = True
                break
            drift = 0.0 if not bb.path else linkage(a, cur, params)
            certified_below = R if not bb.path else R / c - drift
            best = None
            for cid, cl in pool.items():
                if cid in bb.path:
                    continue
                v = linkage(cur, cl, params)
                if best is None or (v, cid) < best:
                    best = (v, cid)
            limit = phase.upper if not bb.path else phase.lower
            if best is not None and best[0] <= certified_below * (1 - 1e-12):
                v, cid = best
            elif bb.path and limit <= certified_below * (1 - 1e-12) and \
                    (best is None or best[0] >= limit):
                break  # nothing inside or outside the pool is below lower
            elif len(pool) >= len(index) - 1:
                if best is None:
                    break
                v, cid = best  # the pool already holds every other cluster
            else:
                L *= 2
                restart = True
                break
            if check:
                exact = index.nearest(cur, [a.id, *bb.path])
                if exact is None or exact.id != cid or exact.value != v:
                    raise PoolTooSmall(f"cluster {a.id}: pool answer {cid} != exact {exact}")
            if not v < limit:
                break
            cur = merge_clusters(cur, pool[cid], -1)
            bb.path.append(cid)
            bb.values.append(v)
            bb.merged.append(cur)
        if not restart:
            return bb


# --------------------------------------------------------------------------
# shells and MIS


def shell_matrix(owner_ids: Sequence[int], bbs: dict[int, BounceBack],
                 lookup, active_ids: Sequence[int], radius: float, kind) -> np.ndarray:
    """Boolean matrix S with S[i, j] true iff active j is in owner i's shell.

    ``lookup(id)`` returns the snapshot cluster for an id.
    """
    members_c, members_w, starts = [], [], []
    for oid in owner_ids:
        starts.append(len(members_c))
        for cid in [oid, *bbs[oid].path]:
            cl = lookup(cid)
            members_c.append(cl.centroid)
            members_w.append(cl.weight)
    act = [lookup(cid) for cid in active_ids]
    ac = np.array([cl.centroid for cl in act])
    aw = np.array([cl.weight for cl in act])
    mc = np.array(members_c)
    mw = np.array(members_w)
    hit = np.empty((mc.shape[0], ac.shape[0]), dtype=bool)
    step = max(1, 2_000_000 // max(ac.shape[0], 1))
    for s in range(0, mc.shape[0], step):
        hit[s:s + step] = linkage_block(mc[s:s + step], mw[s:s + step], ac, aw, kind) <= radius
    return np.logical_or.reduceat(hit, np.array(starts), axis=0)


def build_shells_and_conflicts(active: Sequence[Cluster], bbs: dict[int, BounceBack],
                               snapshot: dict[int, Cluster], radius: float, kind
                               ) -> tuple[dict[int, set[int]], set[tuple[int, int]]]:
    """Shells and the conflict edge set {(A, B): A < B, B in shell(A) or A in shell(B)}."""
    ids = sorted(cl.id for cl in active)
    S = shell_matrix(ids, bbs, snapshot.__getitem__, ids, radius, kind)
    shells = {oid: {ids[j] for j in np.flatnonzero(S[i])} for i, oid in enumerate(ids)}
    adj = S | S.T
    edges = {(ids[i], ids[j]) for i, j in zip(*np.nonzero(np.triu(adj, 1)))}
    for oid in ids:
        bbs[oid].shell = shells[oid] | {oid} | set(bbs[oid].path)
    return shells, edges


def select_mis(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[int]:
    """Greedy maximal independent set in ascending id order."""
    nbrs: dict[int, set[int]] = {}
    for a, b in edges:
        nbrs.setdefault(a, set()).add(b)
        nbrs.setdefault(b, set()).add(a)
    chosen: list[int] = []
    blocked: set[int] = set()
    for v in sorted(nodes):
        if v not in blocked:
            chosen.append(v)
            blocked |= nbrs.get(v, set())
    return chosen


# --------------------------------------------------------------------------
# the engine


def _merge_rows(ca: np.ndarray, wa: np.ndarray, cb: np.ndarray, wb: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`merged_centroid`; same float operations per element."""
    w = wa + wb
    return (wa[:, None] * ca + wb[:, None] * cb) / w[:, None], w


class ParallelHAC:
    """One run of the phase/round algorithm over an instance.

    Cluster state lives in arrays indexed by cluster id (ids are allocated
    sequentially, so an id is its own slot).  Bounce-back paths are cached
    in padded per-owner arrays and reused across rounds of a phase while no
    newly created cluster could change them.

    Parameters
    ----------
    inst : Instance
    eps : float > 0
    threads : worker threads for the nearest-neighbour scans.  Output does
        not depend on it.
    check : enable the runtime assertions described in the module docstring.
    index : ``"brute"`` (vectorised scan, default) or ``"grid"``.
    separation_max_n : largest instance on which ``check`` also runs the
        pairwise separation assertion.
    """

    def __init__(self, inst: Instance, eps: float, threads: int = 1, check: bool = False,
                 index: str = "brute", separation_max_n: int = 500):
        if not eps > 0:
            raise ValueError("eps must be positive")
        if index not in ("brute", "grid"):
            raise ValueError(f"unknown index {index!r}")
        self.inst = inst
        self.eps = float(eps)
        self.threads = max(1, int(threads))
        self.check = check
        self.index_impl = index
        self.separation_max_n = separation_max_n
        self.params = LinkageParams.for_kind(inst.kind)
        self.kind = inst.kind
        self.index: NnIndex | None = None

    # -- thresholds ------------------------------------------------------
    def _thr(self, t: int) -> float:
        return self.base * (1.0 + self.eps) ** t

    def _phase_of(self, d: float) -> int:
        t = int(math.floor(math.log(d / self.base) / math.log1p(self.eps)))
        t = max(t, 0)
        while self._thr(t + 1) <= d:
            t += 1
        while t > 0 and self._thr(t) > d:
            t -= 1
        return t

    # -- state -------------------------------------------------------------
    def _init_state(self, clusters: list[Cluster]) -> None:
        cap, k = 2 * self.inst.n, self.inst.dim
        self.C = np.zeros((cap, k))
        self.W = np.zeros(cap)
        self.alive = np.zeros(cap, dtype=bool)
        for cl in clusters:
            self.C[cl.id] = cl.centroid
            self.W[cl.id] = cl.weight
            self.alive[cl.id] = True
        self.n_alive = len(clusters)
        self.nn_id = np.full(cap, -1, dtype=np.int64)
        self.nn_val = np.full(cap, np.inf)
        self._view_cache = None
        # path cache: owner -> (B_1..B_l, values, merged A_1..A_l)
        self.lcap = 4
        self.p_ok = np.zeros(cap, dtype=bool)
        self.p_len = np.zeros(cap, dtype=np.int64)
        self.p_ids = np.full((cap, self.lcap), -1, dtype=np.int64)
        self.p_val = np.full((cap, self.lcap), np.inf)
        self.p_c = np.zeros((cap, self.lcap, k))
        self.p_w = np.zeros((cap, self.lcap))

    def _grow(self, L: int) -> None:
        if L <= self.lcap:
            return
        extra = max(L, 2 * self.lcap) - self.lcap
        cap = self.p_ids.shape[0]
        self.p_ids = np.concatenate([self.p_ids, np.full((cap, extra), -1, dtype=np.int64)], 1)
        self.p_val = np.concatenate([self.p_val, np.full((cap, extra), np.inf)], 1)
        self.p_c = np.concatenate([self.p_c, np.zeros((cap, extra, self.inst.dim))], 1)
        self.p_w = np.concatenate([self.p_w, np.zeros((cap, extra))], 1)
        self.lcap += extra

    def _view(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._view_cache is None:
            ids = np.flatnonzero(self.alive)
            self._view_cache = (ids, self.C[ids], self.W[ids])
        return self._view_cache

    def _cluster(self, i: int) -> Cluster:
        return Cluster(int(i), self.C[i], self.W[i])

    def _nearest(self, qc: np.ndarray, qw: np.ndarray, excl: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest alive cluster of every query row.

        ``excl`` holds per-row ids to skip (padded with -1).  Ties go to the
        smallest id; rows with no candidate get id -1 and value inf.
        """
        q = qc.shape[0]
        out_id = np.full(q, -1, dtype=np.int64)
        out_val = np.full(q, np.inf)
        if q == 0:
            return out_id, out_val
        if self.index is not None:
            for i in range(q):
                nb = self.index.nearest(Cluster(-1, qc[i], qw[i]), [int(e) for e in excl[i] if e >= 0])
                if nb is not None:
                    out_id[i], out_val[i] = nb.id, nb.value
            return out_id, out_val
        ids, vc, vw = self._view()
        if ids.size == 0:
            return out_id, out_val
        step = max(1, 4_000_000 // ids.size)
        if self.threads > 1 and q >= 64:
            step = min(step, -(-q // self.threads))

        def work(s: int) -> None:
            sl = slice(s, s + step)
            block = linkage_block(qc[sl], qw[sl], vc, vw, self.kind)
            ex = excl[sl]
            pos = np.minimum(np.searchsorted(ids, ex), ids.size - 1)
            hit = (ex >= 0) & (ids[pos] == ex)
            block[np.nonzero(hit)[0], pos[hit]] = np.inf
            j = block.argmin(axis=1)
            v = block[np.arange(block.shape[0]), j]
            out_id[sl] = np.where(np.isfinite(v), ids[j], -1)
            out_val[sl] = v

        starts = range(0, q, step)
        if self.threads > 1 and len(starts) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                list(ex.map(work, starts))
        else:
            for s in starts:
                work(s)
        return out_id, out_val

    # -- run ---------------------------------------------------------------
    def run(self) -> tuple[MergeTrace, RunStats]:
        t0 = time.perf_counter()
        inst = self.inst
        pre, clusters = premerge_duplicates(inst)
        self.trace = MergeTrace(inst.n, list(pre))
        self.next_id = inst.n + len(pre)
        self.stats = RunStats()
        self.stats.aspect_ratio = aspect_ratio(inst) if len(clusters) > 1 else 1.0
        self._init_state(clusters)
        if len(clusters) > 1:
            ids = np.array([cl.id for cl in clusters], dtype=np.int64)
            self.nn_id[ids], self.nn_val[ids] = self._nearest(self.C[ids], self.W[ids], ids[:, None])
            self.base = float(self.nn_val[ids].min())
            self._phases()
        self.stats.height = dendrogram_height(self.trace)
        self.stats.wall_time = time.perf_counter() - t0
        return self.trace, self.stats

    def _phases(self) -> None:
        t = 0
        while self.n_alive > 1:
            ids = np.flatnonzero(self.alive)
            t = max(t, self._phase_of(float(self.nn_val[ids].min())))
            st = PhaseState(t, self._thr(t), self._thr(t + 1))
            if self.index_impl == "grid":
                cell = math.sqrt(2 * st.lower) if self.kind is LinkageKind.WARDS else st.lower
                self.index = make_index(self.kind, "grid", cell,
                                        [self._cluster(i) for i in ids], dim=self.inst.dim)
            active = ids[self.nn_val[ids] < st.upper]
            self.p_ok[:] = False
            while active.size:
                active = self._round(st, active)
                st.r += 1
            self.stats.num_phases += 1
            self.stats.phase_indices.append(t)
            self.stats.num_rounds_per_phase.append(st.r)
            log.debug("phase %d: %d rounds, %d clusters left", t, st.r, self.n_alive)
            t += 1

    # -- one round ---------------------------------------------------------
    def _paths(self, st: PhaseState, owners: np.ndarray) -> None:
        """Bounce-back paths of ``owners`` against the current snapshot, into the cache."""
        if owners.size == 0:
            return
        o = owners
        b = self.nn_id[o]
        cur_c, cur_w = _merge_rows(self.C[o], self.W[o], self.C[b], self.W[b])
        self.p_ids[o, 0] = b
        self.p_val[o, 0] = self.nn_val[o]
        self.p_c[o, 0] = cur_c
        self.p_w[o, 0] = cur_w
        self.p_len[o] = 1
        self.p_ok[o] = True
        going = np.arange(o.size)
        step = 1
        while going.size:
            g = o[going]
            excl = np.concatenate([g[:, None], self.p_ids[g, :step]], axis=1)
            nid, nval = self._nearest(cur_c[going], cur_w[going], excl)
            cont = nval < st.lower
            if not cont.any():
                break
            going, nid, nval = going[cont], nid[cont], nval[cont]
            g = o[going]
            self._grow(step + 1)
            c2, w2 = _merge_rows(cur_c[going], cur_w[going], self.C[nid], self.W[nid])
            cur_c[going] = c2
            cur_w[going] = w2
            self.p_ids[g, step] = nid
            self.p_val[g, step] = nval
            self.p_c[g, step] = c2
            self.p_w[g, step] = w2
            self.p_len[g] = step + 1
            step += 1

    def _members(self, owners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Owner and path ids of every owner, grouped by owner; plus owner positions."""
        L = int(self.p_len[owners].max())
        M = np.concatenate([owners[:, None], self.p_ids[owners, :L]], axis=1)
        valid = np.arange(L + 1)[None, :] <= self.p_len[owners][:, None]
        return M[valid], np.nonzero(valid)[0]

    def _select(self, active: np.ndarray, radius: float) -> list[int]:
        """Greedy MIS of the conflict graph, built only around chosen nodes.

        Scanning actives by ascending id, a node is taken unless an earlier
        chosen node conflicts with it; the conflicts of a chosen node are its
        own shell (row) plus every owner whose shell contains it (column).
        This yields exactly the greedy MIS of the full conflict graph.
        """
        if active.size == 1:
            return [int(active[0])]
        mem, owner = self._members(active)
        mc, mw = self.C[mem], self.W[mem]
        ac, aw = self.C[active], self.W[active]
        pos = np.arange(active.size)
        first = np.searchsorted(owner, pos)
        last = np.searchsorted(owner, pos, side="right")
        blocked = np.zeros(active.size, dtype=bool)
        chosen = []
        i = 0
        while i < active.size:
            free = np.flatnonzero(~blocked[i:])
            if free.size == 0:
                break
            i += int(free[0])
            chosen.append(int(active[i]))
            blocked[i] = True
            rows = slice(first[i], last[i])
            row = linkage_block(mc[rows], mw[rows], ac, aw, self.kind) <= radius
            blocked |= row.any(axis=0)
            col = linkage_block(mc, mw, ac[i:i + 1], aw[i:i + 1], self.kind)[:, 0] <= radius
            blocked[owner[col]] = True
            i += 1
        return chosen

    def _revalidate(self, st: PhaseState, nxt: np.ndarray, touched: np.ndarray,
                    finals: np.ndarray) -> None:
        """Drop cached paths that this round's merges could change.

        A cached path stays bit-identical to a recomputation iff none of its
        members was consumed, every step's nearest neighbour still wins
        against the new clusters (new ids are larger, so ties keep the old
        neighbour) and the stopping test still sees nothing below ``lower``.
        Removed clusters other than path members cannot change a nearest
        neighbour.  The first step is covered by the maintained nn arrays.
        """
        cached = nxt[self.p_ok[nxt]]
        if cached.size == 0:
            return
        lens = self.p_len[cached]
        L = int(lens.max())
        valid = np.arange(L)[None, :] < lens[:, None]
        pids = self.p_ids[cached, :L]
        bad = (np.isin(pids, touched) & valid).any(axis=1)
        bad |= self.nn_id[cached] != pids[:, 0]
        bad |= self.nn_val[cached] != self.p_val[cached, 0]
        if finals.size:
            nxtval = np.concatenate([self.p_val[cached, 1:L], np.full((cached.size, 1), st.lower)], 1)
            thr = np.where(np.arange(L)[None, :] == lens[:, None] - 1, st.lower, nxtval)
            rc = self.p_c[cached, :L][valid]
            rw = self.p_w[cached, :L][valid]
            low = linkage_block(rc, rw, self.C[finals], self.W[finals], self.kind).min(axis=1)
            rows = np.nonzero(valid)[0]
            bad[rows[low < thr[valid]]] = True
        self.p_ok[cached[bad]] = False

    def _round(self, st: PhaseState, active: np.ndarray) -> np.ndarray:
        if self.check:
            low = float(self.nn_val[self.alive].min())
            if low < st.lower * (1 - 1e-12):
                raise RoundInvariantViolated(
                    f"phase {st.t} round {st.r}: linkage {low} below lower {st.lower}")
        fresh = active[~self.p_ok[active]]
        self._paths(st, fresh)
        L = int(self.p_len[active].max())
        self.stats.max_bounce_back_len = max(self.stats.max_bounce_back_len, L)
        c = self.params.c_delta
        chosen = self._select(active, shell_radius(c, L, st.upper))
        chosen_arr = np.array(chosen, dtype=np.int64)
        touched, _ = self._members(chosen_arr)
        if np.unique(touched).size != touched.size:
            raise NonInterferenceViolated(
                f"phase {st.t} round {st.r}: paths of selected clusters overlap")

        if self.check:
            self._check_pool(st, fresh)
            self._check_paths(st, chosen)
            if self.inst.n <= self.separation_max_n:
                self._check_separation(st, chosen)

        # execute in canonical order: ascending owner id, path order
        finals = np.empty(len(chosen), dtype=np.int64)
        for k, a in enumerate(chosen):
            cur = a
            for j in range(int(self.p_len[a])):
                new = self.next_id
                self.next_id += 1
                self.C[new] = self.p_c[a, j]
                self.W[new] = self.p_w[a, j]
                self.trace.append(MergeRecord(len(self.trace), cur, int(self.p_ids[a, j]), new,
                                              float(self.p_val[a, j]), st.t, st.r))
                cur = new
            finals[k] = cur
        self.alive[touched] = False
        self.alive[finals] = True
        self.n_alive += finals.size - touched.size
        self._view_cache = None
        self.nn_id[touched] = -1
        self.nn_val[touched] = np.inf
        self.p_ok[touched] = False
        if self.index is not None:
            self.index.batch_delete(touched.tolist())
            self.index.batch_insert([self._cluster(i) for i in finals])
        self._update_nn(touched, finals)

        keep = active[~np.isin(active, touched)]
        cand = np.concatenate([keep, finals])
        nxt = np.sort(cand[self.nn_val[cand] < st.upper])
        self._revalidate(st, nxt, touched, finals)
        return nxt

    def _update_nn(self, dead: np.ndarray, finals: np.ndarray) -> None:
        ids = np.flatnonzero(self.alive)
        if ids.size < 2:
            self.nn_id[ids] = -1
            self.nn_val[ids] = np.inf
            return
        is_final = np.isin(ids, finals)
        lost = np.isin(self.nn_id[ids], dead)
        redo = ids[lost & ~is_final]
        others = ids[~lost & ~is_final]
        if finals.size and others.size:
            fc, fw = self.C[finals], self.W[finals]
            step = max(1, 4_000_000 // finals.size)
            for s in range(0, others.size, step):
                o = others[s:s + step]
                # columns are finals in ascending id order, so argmin picks the smallest id
                block = linkage_block(self.C[o], self.W[o], fc, fw, self.kind)
                j = block.argmin(axis=1)
                best = block[np.arange(o.size), j]
                better = best < self.nn_val[o]
                self.nn_id[o[better]] = finals[j[better]]
                self.nn_val[o[better]] = best[better]
        q = np.concatenate([redo, finals])
        self.nn_id[q], self.nn_val[q] = self._nearest(self.C[q], self.W[q], q[:, None])

    # -- runtime assertions ----------------------------------------------
    def _check_pool(self, st: PhaseState, owners: np.ndarray) -> None:
        c = self.params.c_delta
        for a in owners:
            n = int(self.p_len[a])
            R = path_radius(c, n, st.upper)
            path = self.p_ids[a, :n]
            d = linkage_block(self.C[a], self.W[a:a + 1], self.C[path], self.W[path], self.kind)[0]
            if np.any(d > R):
                raise PoolTooSmall(f"cluster {a}: path member at {d.max()} outside pool radius {R}")

    def _check_paths(self, st: PhaseState, chosen: list[int]) -> None:
        """Replay selected paths one owner at a time against the live state.

        Clusters created by earlier owners of the round compete with the
        snapshot; they win only when strictly closer, since their real ids
        exceed every snapshot id.
        """
        ids, vc, vw = self._view()
        gone = np.zeros(ids.size, dtype=bool)
        made_c: list[np.ndarray] = []
        made_w: list[float] = []
        for a in chosen:
            cur_c, cur_w = self.C[a], self.W[a]
            gone[np.searchsorted(ids, a)] = True
            path, vals = [], []
            while True:
                v = linkage_block(cur_c, np.array([cur_w]), vc, vw, self.kind)[0]
                v[gone] = np.inf
                j = int(v.argmin())
                best_id, best_v, oc, ow = int(ids[j]), float(v[j]), vc[j], vw[j]
                if made_c:
                    mv = linkage_block(cur_c, np.array([cur_w]), np.array(made_c),
                                       np.array(made_w), self.kind)[0]
                    m = int(mv.argmin())
                    if mv[m] < best_v:
                        best_id, best_v, oc, ow = -2 - m, float(mv[m]), made_c[m], made_w[m]
                limit = st.upper if not path else st.lower
                if not best_v < limit:
                    break
                if best_id >= 0:
                    gone[j] = True
                cur_c, cur_w = merged_centroid(cur_c, cur_w, oc, ow), cur_w + ow
                path.append(best_id)
                vals.append(best_v)
            n = int(self.p_len[a])
            want = (self.p_ids[a, :n].tolist(), self.p_val[a, :n].tolist())
            if (path, vals) != want:
                raise NonInterferenceViolated(
                    f"phase {st.t} round {st.r}: cluster {a} executed {path} {vals}, "
                    f"precomputed {want[0]} {want[1]}")
            made_c.append(cur_c)
            made_w.append(cur_w)

    def _check_separation(self, st: PhaseState, chosen: list[int]) -> None:
        if len(chosen) < 2:
            return
        cents, weights, owner = [], [], []
        for a in chosen:
            n = int(self.p_len[a])
            group = np.concatenate([[a], self.p_ids[a, :n]])
            cents += [self.C[group], self.p_c[a, :n]]
            weights += [self.W[group], self.p_w[a, :n]]
            owner += [a] * (2 * n + 1)
        C, W, O = np.concatenate(cents), np.concatenate(weights), np.array(owner)
        D = linkage_block(C, W, C, W, self.kind)
        D[O[:, None] == O[None, :]] = np.inf
        low = float(D.min())
        if low < st.upper * (1 - 1e-12):
            raise SeparationViolated(
                f"phase {st.t} round {st.r}: clusters of different paths at {low} < {st.upper}")


def run_parallel(inst: Instance, eps: float, threads: int = 1, check: bool = False,
                 index: str = "brute", separation_max_n: int = 500
                 ) -> tuple[MergeTrace, RunStats]:
    """(1+eps)-approximate HAC by phases and rounds; see the module docstring."""
    return ParallelHAC(inst, eps, threads, check, index, separation_max_n).run()
