"""Dynamic exact nearest-neighbour indices over alive clusters.

Three implementations share one contract:

* :class:`BruteForceIndex` scans every alive cluster with vectorised numpy.
  It is the correctness oracle and the engine's default, because a
  vectorised scan beats per-cell Python loops at the sizes this package
  targets.
* :class:`GridIndex` buckets centroids into a uniform grid and searches
  outward ring by ring (centroid linkage only).
* :class:`SizeBucketIndex` keeps one grid per weight range [2^i, 2^{i+1})
  and answers exact Ward's queries by collecting per-bucket candidate
  supersets and re-ranking them exactly.

Results are lists of ``Neighbor(id, value)`` sorted by value, ties broken by
ascending id.  The query cluster's own id is never reported.  Mutations
happen only through ``batch_insert`` / ``batch_delete``.
"""
from __future__ import annotations

import itertools
import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import Cluster, LinkageKind, WrongLinkage
from .linkage import linkage_block


class Neighbor(NamedTuple):
    id: int
    value: float


def _sorted_neighbors(ids: np.ndarray, vals: np.ndarray) -> list[Neighbor]:
    order = np.lexsort((ids, vals))
    return [Neighbor(int(ids[i]), float(vals[i])) for i in order]


class NnIndex:
    """Common interface; subclasses implement the storage."""

    kind: LinkageKind

    def batch_insert(self, clusters: Iterable[Cluster]) -> None:
        raise NotImplementedError

    def batch_delete(self, ids: Iterable[int]) -> None:
        raise NotImplementedError

    def knn(self, q: Cluster, m: int, exclude: Iterable[int] = ()) -> list[Neighbor]:
        raise NotImplementedError

    def radius_query(self, q: Cluster, R: float, exclude: Iterable[int] = ()) -> list[Neighbor]:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError

    def __contains__(self, cid: int) -> bool:
        raise NotImplementedError

    def get(self, cid: int) -> Cluster:
        raise NotImplementedError

    def ids(self) -> list[int]:
        raise NotImplementedError

    def nearest(self, q: Cluster, exclude: Iterable[int] = ()) -> Neighbor | None:
        res = self.knn(q, 1, exclude)
        return res[0] if res else None

    def nearest_many(self, queries: Sequence[Cluster],
                     excludes: Sequence[Iterable[int]] | None = None) -> list[Neighbor | None]:
        if excludes is None:
            excludes = [()] * len(queries)
        return [self.nearest(q, ex) for q, ex in zip(queries, excludes)]


class BruteForceIndex(NnIndex):
    def __init__(self, kind=LinkageKind.CENTROID, clusters: Iterable[Cluster] = ()):
        self.kind = LinkageKind.parse(kind)
        self._clusters: dict[int, Cluster] = {}
        self._view = None
        self.batch_insert(clusters)

    def batch_insert(self, clusters: Iterable[Cluster]) -> None:
        for c in clusters:
            self._clusters[c.id] = c
        self._view = None

    def batch_delete(self, ids: Iterable[int]) -> None:
        for i in ids:
            self._clusters.pop(int(i), None)
        self._view = None

    def __len__(self) -> int:
        return len(self._clusters)

    def __contains__(self, cid) -> bool:
        return int(cid) in self._clusters

    def get(self, cid: int) -> Cluster:
        return self._clusters[int(cid)]

    def ids(self) -> list[int]:
        return sorted(self._clusters)

    def view(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ids, centroids, weights) of alive clusters sorted by id."""
        if self._view is None:
            ids = np.array(sorted(self._clusters), dtype=np.int64)
            if ids.size:
                cents = np.array([self._clusters[i].centroid for i in ids])
                weights = np.array([self._clusters[i].weight for i in ids])
            else:
                cents = np.zeros((0, 1))
                weights = np.zeros(0)
            self._view = (ids, cents, weights)
        return self._view

    def _values(self, q: Cluster) -> tuple[np.ndarray, np.ndarray]:
        ids, cents, weights = self.view()
        if ids.size == 0:
            return ids, np.zeros(0)
        return ids, linkage_block(q.centroid, np.array([q.weight]), cents, weights, self.kind)[0]

    def _mask(self, ids: np.ndarray, q: Cluster, exclude) -> np.ndarray:
        ex = set(int(e) for e in exclude)
        ex.add(int(q.id))
        return ~np.isin(ids, np.fromiter(ex, dtype=np.int64, count=len(ex)))

    def knn(self, q: Cluster, m: int, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ids, vals = self._values(q)
        keep = self._mask(ids, q, exclude)
        ids, vals = ids[keep], vals[keep]
        if ids.size > m:
            cut = np.partition(vals, m - 1)[m - 1]
            sel = vals <= cut
            ids, vals = ids[sel], vals[sel]
        return _sorted_neighbors(ids, vals)[:m]

    def radius_query(self, q: Cluster, R: float, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ids, vals = self._values(q)
        keep = self._mask(ids, q, exclude) & (vals <= R)
        return _sorted_neighbors(ids[keep], vals[keep])

    def nearest_many(self, queries: Sequence[Cluster],
                     excludes: Sequence[Iterable[int]] | None = None) -> list[Neighbor | None]:
        ids, cents, weights = self.view()
        if not queries:
            return []
        if ids.size == 0:
            return [None] * len(queries)
        qc = np.array([q.centroid for q in queries])
        qw = np.array([q.weight for q in queries])
        vals = linkage_block(qc, qw, cents, weights, self.kind)
        for row, q in enumerate(queries):
            ex = [q.id] + ([] if excludes is None else list(excludes[row]))
            ex = np.array(ex, dtype=np.int64)
            pos = np.searchsorted(ids, ex)
            ok = pos < ids.size
            pos, ex = pos[ok], ex[ok]
            vals[row, pos[ids[pos] == ex]] = np.inf
        # argmin returns the first minimum, which is the smallest id
        best = np.argmin(vals, axis=1)
        out: list[Neighbor | None] = []
        for row, j in enumerate(best):
            v = vals[row, j]
            out.append(None if not np.isfinite(v) else Neighbor(int(ids[j]), float(v)))
        return out


# --------------------------------------------------------------------------
# uniform grid


_RING_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _ring_offsets(k: int, r: int) -> np.ndarray:
    """Integer offsets with Chebyshev norm exactly r."""
    key = (k, r)
    if key not in _RING_CACHE:
        if r == 0:
            offs = np.zeros((1, k), dtype=np.int64)
        else:
            rng = range(-r, r + 1)
            offs = np.array([o for o in itertools.product(rng, repeat=k)
                             if max(abs(x) for x in o) == r], dtype=np.int64)
        _RING_CACHE[key] = offs
    return _RING_CACHE[key]


class GridIndex(NnIndex):
    """Uniform grid over centroids with cell side ``cell``; centroid linkage."""

    def __init__(self, cell: float, kind=LinkageKind.CENTROID, clusters: Iterable[Cluster] = ()):
        if LinkageKind.parse(kind) is not LinkageKind.CENTROID:
            raise WrongLinkage("GridIndex measures centroid distance; use SizeBucketIndex for Ward's")
        if not cell > 0:
            raise ValueError("cell side must be positive")
        self.kind = LinkageKind.CENTROID
        self.cell = float(cell)
        self._clusters: dict[int, Cluster] = {}
        self._cell_of: dict[int, tuple] = {}
        self._cells: dict[tuple, set[int]] = {}
        self.batch_insert(clusters)

    def _key(self, centroid: np.ndarray) -> tuple:
        return tuple(int(v) for v in np.floor(centroid / self.cell))

    def batch_insert(self, clusters: Iterable[Cluster]) -> None:
        for c in clusters:
            if c.id in self._clusters:
                self.batch_delete([c.id])
            key = self._key(c.centroid)
            self._clusters[c.id] = c
            self._cell_of[c.id] = key
            self._cells.setdefault(key, set()).add(c.id)

    def batch_delete(self, ids: Iterable[int]) -> None:
        for i in ids:
            i = int(i)
            if i not in self._clusters:
                continue
            key = self._cell_of.pop(i)
            del self._clusters[i]
            bucket = self._cells[key]
            bucket.discard(i)
            if not bucket:
                del self._cells[key]

    def __len__(self) -> int:
        return len(self._clusters)

    def __contains__(self, cid) -> bool:
        return int(cid) in self._clusters

    def get(self, cid: int) -> Cluster:
        return self._clusters[int(cid)]

    def ids(self) -> list[int]:
        return sorted(self._clusters)

    def _evaluate(self, q: Cluster, cand: list[int]) -> tuple[np.ndarray, np.ndarray]:
        if not cand:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        ids = np.array(cand, dtype=np.int64)
        cents = np.array([self._clusters[i].centroid for i in cand])
        weights = np.array([self._clusters[i].weight for i in cand])
        return ids, linkage_block(q.centroid, np.array([q.weight]), cents, weights, self.kind)[0]

    def _collect(self, keys: Iterable[tuple], ex: set[int]) -> list[int]:
        out = []
        for key in keys:
            bucket = self._cells.get(key)
            if bucket:
                out.extend(i for i in bucket if i not in ex)
        return out

    def _all_cells_by_ring(self, qkey: tuple) -> list[tuple[int, tuple]]:
        keys = list(self._cells)
        if not keys:
            return []
        arr = np.array(keys, dtype=np.int64)
        ring = np.max(np.abs(arr - np.array(qkey, dtype=np.int64)), axis=1)
        return [(int(r), k) for r, k in zip(ring, keys)]

    def knn(self, q: Cluster, m: int, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ex = set(int(e) for e in exclude)
        ex.add(int(q.id))
        qkey = np.array(self._key(q.centroid), dtype=np.int64)
        k = qkey.shape[0]
        eligible = len(self._clusters) - sum(1 for e in ex if e in self._clusters)
        best_ids = np.zeros(0, dtype=np.int64)
        best_vals = np.zeros(0)
        n_cells = len(self._cells)
        r = 0
        while True:
            offs = _ring_offsets(k, r) if (2 * r + 1) ** k <= 4 * n_cells + 8 else None
            if offs is None:
                # the ring is larger than the occupied grid: scan what is left
                rest = [key for ring, key in self._all_cells_by_ring(tuple(qkey)) if ring >= r]
                cand = self._collect(rest, ex)
                ids, vals = self._evaluate(q, cand)
                best_ids = np.concatenate([best_ids, ids])
                best_vals = np.concatenate([best_vals, vals])
                break
            keys = [tuple(row) for row in (qkey + offs)]
            cand = self._collect(keys, ex)
            ids, vals = self._evaluate(q, cand)
            best_ids = np.concatenate([best_ids, ids])
            best_vals = np.concatenate([best_vals, vals])
            # everything outside rings 0..r is farther than r * cell
            if best_ids.size >= m:
                kth = np.partition(best_vals, m - 1)[m - 1]
                if kth <= r * self.cell:
                    break
            if best_ids.size >= eligible:
                break
            r += 1
        return _sorted_neighbors(best_ids, best_vals)[:m]

    def radius_query(self, q: Cluster, R: float, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ex = set(int(e) for e in exclude)
        ex.add(int(q.id))
        qkey = np.array(self._key(q.centroid), dtype=np.int64)
        k = qkey.shape[0]
        reach = int(math.ceil(R / self.cell)) + 1 if np.isfinite(R) else None
        if reach is None or (2 * reach + 1) ** k > 4 * len(self._cells) + 8:
            keys = [key for ring, key in self._all_cells_by_ring(tuple(qkey))
                    if reach is None or ring <= reach]
        else:
            keys = []
            for r in range(reach + 1):
                keys.extend(tuple(row) for row in (qkey + _ring_offsets(k, r)))
        ids, vals = self._evaluate(q, self._collect(keys, ex))
        keep = vals <= R
        return _sorted_neighbors(ids[keep], vals[keep])


# --------------------------------------------------------------------------
# Ward's: size buckets


def _bucket(weight: float) -> int:
    return int(weight).bit_length() - 1 if weight >= 1 else 0


def _harmonic(wa: float, wb: float) -> float:
    return wa * wb / (wa + wb)


class SizeBucketIndex(NnIndex):
    """Exact Ward's k-NN from per-size-bucket centroid grids.

    Bucket i holds clusters with weight in [2^i, 2^{i+1}).  Within a bucket
    the harmonic factor wq*w/(wq+w) is at least its value at w = 2^i, so a
    Ward's threshold T translates into the centroid radius sqrt(T / h_i);
    candidates inside those radii are re-ranked with the exact formula.
    """

    def __init__(self, cell: float, clusters: Iterable[Cluster] = (), inner: str = "grid"):
        self.kind = LinkageKind.WARDS
        self.cell = float(cell)
        self._inner = inner
        self._buckets: dict[int, NnIndex] = {}
        self._bucket_of: dict[int, int] = {}
        self._clusters: dict[int, Cluster] = {}
        self.batch_insert(clusters)

    def _new_inner(self) -> NnIndex:
        if self._inner == "grid":
            return GridIndex(self.cell)
        return BruteForceIndex(LinkageKind.CENTROID)

    def batch_insert(self, clusters: Iterable[Cluster]) -> None:
        for c in clusters:
            if c.id in self._clusters:
                self.batch_delete([c.id])
            b = _bucket(c.weight)
            self._buckets.setdefault(b, self._new_inner()).batch_insert([c])
            self._bucket_of[c.id] = b
            self._clusters[c.id] = c

    def batch_delete(self, ids: Iterable[int]) -> None:
        for i in ids:
            i = int(i)
            if i not in self._clusters:
                continue
            b = self._bucket_of.pop(i)
            del self._clusters[i]
            self._buckets[b].batch_delete([i])
            if len(self._buckets[b]) == 0:
                del self._buckets[b]

    def __len__(self) -> int:
        return len(self._clusters)

    def __contains__(self, cid) -> bool:
        return int(cid) in self._clusters

    def get(self, cid: int) -> Cluster:
        return self._clusters[int(cid)]

    def ids(self) -> list[int]:
        return sorted(self._clusters)

    def bucket_sizes(self) -> dict[int, int]:
        return {b: len(idx) for b, idx in sorted(self._buckets.items())}

    def _exact(self, q: Cluster, cand: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        cand = sorted(set(cand))
        if not cand:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        ids = np.array(cand, dtype=np.int64)
        cents = np.array([self._clusters[i].centroid for i in cand])
        weights = np.array([self._clusters[i].weight for i in cand])
        return ids, linkage_block(q.centroid, np.array([q.weight]), cents, weights,
                                  LinkageKind.WARDS)[0]

    def _within(self, q: Cluster, T: float, ex: set[int]) -> list[int]:
        out: list[int] = []
        for b, idx in self._buckets.items():
            h = _harmonic(q.weight, float(2 ** b))
            radius = math.sqrt(T / h) * (1 + 1e-9) if np.isfinite(T) else np.inf
            out.extend(nb.id for nb in idx.radius_query(q, radius, ex))
        return out

    def knn(self, q: Cluster, m: int, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ex = set(int(e) for e in exclude)
        ex.add(int(q.id))
        seeds: list[int] = []
        for idx in self._buckets.values():
            seeds.extend(nb.id for nb in idx.knn(q, m, ex))
        ids, vals = self._exact(q, seeds)
        if ids.size == 0:
            return []
        T = np.inf if ids.size < m else float(np.partition(vals, m - 1)[m - 1])
        ids, vals = self._exact(q, self._within(q, T, ex))
        return _sorted_neighbors(ids, vals)[:m]

    def radius_query(self, q: Cluster, R: float, exclude: Iterable[int] = ()) -> list[Neighbor]:
        ex = set(int(e) for e in exclude)
        ex.add(int(q.id))
        ids, vals = self._exact(q, self._within(q, R, ex))
        keep = vals <= R
        return _sorted_neighbors(ids[keep], vals[keep])

    def wards_exact_knn(self, q: Cluster, m: int, exclude: Iterable[int] = ()) -> list[Neighbor]:
        return self.knn(q, m, exclude)


GRID_MAX_DIM = 6


def make_index(kind, impl: str = "brute", cell: float = 1.0,
               clusters: Iterable[Cluster] = (), dim: int | None = None) -> NnIndex:
    """Build an index.  ``impl="grid"`` falls back to brute force above
    ``GRID_MAX_DIM`` dimensions, where rings hold too many cells."""
    kind = LinkageKind.parse(kind)
    if impl == "brute" or (impl == "grid" and dim is not None and dim > GRID_MAX_DIM):
        return BruteForceIndex(kind, clusters)
    if impl == "grid":
        if kind is LinkageKind.WARDS:
            return SizeBucketIndex(cell, clusters)
        return GridIndex(cell, kind, clusters)
    raise ValueError(f"unknown index implementation {impl!r}")
