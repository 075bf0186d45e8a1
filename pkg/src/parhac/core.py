"""Domain types shared by the clustering engines, oracles and diagnostics.

An :class:`Instance` is a weighted point set in R^k together with the linkage
it should be clustered under.  Clusters are summarised by (centroid, weight)
so every linkage value is an O(k) computation.  A run produces a
:class:`MergeTrace`, the ordered list of merges, from which the dendrogram and
its height follow.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


class LinkageKind(str, enum.Enum):
    CENTROID = "centroid"
    WARDS = "wards"

    @classmethod
    def parse(cls, value: "LinkageKind | str") -> "LinkageKind":
        if isinstance(value, LinkageKind):
            return value
        key = str(value).strip().lower()
        aliases = {"centroid": cls.CENTROID, "cen": cls.CENTROID,
                   "wards": cls.WARDS, "ward": cls.WARDS, "ward's": cls.WARDS}
        if key not in aliases:
            raise ValueError(f"unknown linkage {value!r}")
        return aliases[key]


# --------------------------------------------------------------------------
# errors


class ParhacError(Exception):
    """Base class for every error raised by this package."""


class DegenerateInstance(ParhacError):
    pass


class IncompleteTrace(ParhacError):
    pass


class WrongLinkage(ParhacError):
    pass


class MalformedTrace(ParhacError):
    pass


class MalformedInput(ParhacError):
    pass


class PoolTooSmall(ParhacError):
    """The exact nearest neighbour of a path cluster fell outside its pool."""


class NonInterferenceViolated(ParhacError):
    """A selected cluster did not merge along its precomputed path."""


class SkippedPreconditionFailed(ParhacError):
    pass


# --------------------------------------------------------------------------
# instances and clusters


@dataclass(frozen=True, eq=False)
class Instance:
    """Weighted point set.

    Parameters
    ----------
    coords : (n, k) array
    weights : (n,) array of positive weights.  Ward's linkage treats weights
        as cluster sizes, so they must be positive integers there.
    kind : linkage the instance is clustered under.
    """

    coords: np.ndarray
    weights: np.ndarray | None = None
    kind: LinkageKind = LinkageKind.CENTROID

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[1] < 1:
            raise MalformedInput("coords must be an (n, k) array with k >= 1")
        n = coords.shape[0]
        if self.weights is None:
            weights = np.ones(n)
        else:
            weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != n:
            raise MalformedInput("one weight per point is required")
        if n < 2:
            raise MalformedInput("an instance needs at least 2 points")
        if not np.all(np.isfinite(coords)):
            raise MalformedInput("coordinates must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise MalformedInput("weights must be finite and strictly positive")
        kind = LinkageKind.parse(self.kind)
        if kind is LinkageKind.WARDS and np.any(weights != np.round(weights)):
            raise MalformedInput("Ward's linkage needs integer weights")
        coords.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kind", kind)

    @classmethod
    def from_points(cls, points: Iterable, weights=None, kind="centroid") -> "Instance":
        return cls(np.asarray(list(points), dtype=np.float64), weights, LinkageKind.parse(kind))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def with_kind(self, kind) -> "Instance":
        return Instance(self.coords, self.weights, LinkageKind.parse(kind))

    def leaf(self, i: int) -> "Cluster":
        return Cluster(i, self.coords[i].copy(), float(self.weights[i]))


@dataclass
class Cluster:
    id: int
    centroid: np.ndarray
    weight: float
    alive: bool = True

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64).reshape(-1)
        self.weight = float(self.weight)


def merged_centroid(ca: np.ndarray, wa: float, cb: np.ndarray, wb: float) -> np.ndarray:
    """Weighted mean of two centroids.  Symmetric in its arguments bit for bit."""
    return (wa * ca + wb * cb) / (wa + wb)


def merge_clusters(a: Cluster, b: Cluster, new_id: int) -> Cluster:
    return Cluster(new_id, merged_centroid(a.centroid, a.weight, b.centroid, b.weight),
                   a.weight + b.weight)


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class MergeRecord:
    step: int
    a_id: int
    b_id: int
    new_id: int
    value: float
    phase: int | None = None
    round: int | None = None

    def to_dict(self) -> dict:
        return {"step": self.step, "a_id": self.a_id, "b_id": self.b_id,
                "new_id": self.new_id, "value": self.value,
                "phase": self.phase, "round": self.round}

    @classmethod
    def from_dict(cls, d: dict) -> "MergeRecord":
        try:
            rec = cls(int(d["step"]), int(d["a_id"]), int(d["b_id"]), int(d["new_id"]),
                      float(d["value"]),
                      None if d.get("phase") is None else int(d["phase"]),
                      None if d.get("round") is None else int(d["round"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedTrace(f"bad merge record {d!r}: {exc}") from None
        if rec.a_id == rec.b_id:
            raise MalformedTrace(f"step {rec.step} merges cluster {rec.a_id} with itself")
        if not rec.value >= 0:
            raise MalformedTrace(f"step {rec.step} has negative or NaN value")
        return rec


@dataclass
class MergeTrace:
    """Ordered merges over ``n_leaves`` input points (leaf ids 0..n-1)."""

    n_leaves: int
    records: list[MergeRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[MergeRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, rec: MergeRecord) -> None:
        self.records.append(rec)

    @property
    def complete(self) -> bool:
        return len(self.records) == self.n_leaves - 1

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records], dtype=np.float64)


@dataclass
class Dendrogram:
    n_leaves: int
    children: dict[int, tuple[int, int]]
    values: dict[int, float]
    root: int
    height: int

    @classmethod
    def from_trace(cls, trace: MergeTrace) -> "Dendrogram":
        if not trace.complete:
            raise IncompleteTrace(
                f"trace has {len(trace)} merges, expected {trace.n_leaves - 1}")
        depth = {i: 0 for i in range(trace.n_leaves)}
        children, values = {}, {}
        for rec in trace:
            if rec.a_id not in depth or rec.b_id not in depth:
                raise MalformedTrace(f"step {rec.step} references a dead or unknown id")
            if rec.new_id in depth or rec.new_id in children:
                raise MalformedTrace(f"step {rec.step} reuses id {rec.new_id}")
            depth[rec.new_id] = 1 + max(depth.pop(rec.a_id), depth.pop(rec.b_id))
            children[rec.new_id] = (rec.a_id, rec.b_id)
            values[rec.new_id] = rec.value
        (root, height), = depth.items()
        return cls(trace.n_leaves, children, values, root, height)

    def to_text(self) -> str:
        """Parenthesised tree, ``(left,right):value`` at every internal node."""
        out: list[str] = []
        # explicit stack: deep chains would overflow recursion
        stack: list[tuple[int, int]] = [(self.root, 0)]
        while stack:
            node, state = stack.pop()
            if node not in self.children:
                out.append(str(node))
                continue
            left, right = self.children[node]
            if state == 0:
                out.append("(")
                stack.append((node, 1))
                stack.append((left, 0))
            elif state == 1:
                out.append(",")
                stack.append((node, 2))
                stack.append((right, 0))
            else:
                out.append(f"):{self.values[node]!r}")
        return "".join(out)


def dendrogram_height(trace: MergeTrace) -> int:
    return Dendrogram.from_trace(trace).height


@dataclass
class RunStats:
    num_phases: int = 0
    num_rounds_per_phase: list[int] = field(default_factory=list)
    height: int = 0
    max_bounce_back_len: int = 0
    aspect_ratio: float = 1.0
    wall_time: float = 0.0
    phase_indices: list[int] = field(default_factory=list)

    def to_dict(self, include_time: bool = True) -> dict:
        d = {"num_phases": self.num_phases,
             "num_rounds_per_phase": list(self.num_rounds_per_phase),
             "phase_indices": list(self.phase_indices),
             "height": self.height,
             "max_bounce_back_len": self.max_bounce_back_len,
             "aspect_ratio": self.aspect_ratio}
        if include_time:
            d["wall_time"] = self.wall_time
        return d


# --------------------------------------------------------------------------
# instance-level quantities


def _min_max_singleton_linkage(inst: Instance) -> tuple[float, float]:
    from .linkage import linkage_block

    lo, hi = np.inf, 0.0
    n = inst.n
    step = max(1, 2_000_000 // max(n, 1))
    for s in range(0, n, step):
        block = linkage_block(inst.coords[s:s + step], inst.weights[s:s + step],
                              inst.coords, inst.weights, inst.kind)
        rows = np.arange(s, min(s + step, n))
        block[rows - s, rows] = np.nan
        # only pairs (i, j) with j > i are needed; mask the rest
        cols = np.arange(n)
        block[cols[None, :] <= rows[:, None]] = np.nan
        vals = block[~np.isnan(block)]
        if vals.size:
            hi = max(hi, float(vals.max()))
            pos = vals[vals > 0]
            if pos.size:
                lo = min(lo, float(pos.min()))
    return lo, hi


def min_max_singleton_linkage(inst: Instance) -> tuple[float, float]:
    """(min positive, max) pairwise linkage among the input points."""
    lo, hi = _min_max_singleton_linkage(inst)
    if not np.isfinite(lo) or hi <= 0:
        raise DegenerateInstance("all points coincide")
    return lo, hi


def aspect_ratio(inst: Instance) -> float:
    lo, hi = min_max_singleton_linkage(inst)
    return hi / lo


def duplicate_groups(coords: np.ndarray) -> list[list[int]]:
    """Groups (in input order) of points with identical coordinates, size >= 2."""
    _, inverse, counts = np.unique(coords, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    groups: dict[int, list[int]] = {}
    for i, g in enumerate(inverse):
        if counts[g] > 1:
            groups.setdefault(int(g), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def premerge_duplicates(inst: Instance, start_id: int | None = None
                        ) -> tuple[list[MergeRecord], list[Cluster]]:
    """Merge coincident points at value 0, in input order.

    Returns the zero-valued merge records and the surviving clusters sorted
    by id.  New ids are allocated from ``start_id`` (default ``n``).
    """
    next_id = inst.n if start_id is None else start_id
    clusters = {i: inst.leaf(i) for i in range(inst.n)}
    records: list[MergeRecord] = []
    for group in duplicate_groups(inst.coords):
        cur = clusters.pop(group[0])
        for j in group[1:]:
            other = clusters.pop(j)
            merged = Cluster(next_id, cur.centroid.copy(), cur.weight + other.weight)
            records.append(MergeRecord(len(records), cur.id, other.id, next_id, 0.0))
            cur = merged
            next_id += 1
        clusters[cur.id] = cur
    return records, [clusters[k] for k in sorted(clusters)]


def normalize_scale(inst: Instance) -> tuple[Instance, float]:
    """Rescale coordinates so the minimum pairwise linkage is exactly 1.

    Coincident points are first collapsed into one weighted point (their
    merges carry value 0 and precede every other merge).  The returned
    factor multiplies coordinates; linkage values scale by the factor for
    centroid linkage and by its square for Ward's.
    """
    from .linkage import linkage_block

    _, clusters = premerge_duplicates(inst)
    if len(clusters) < 2:
        raise DegenerateInstance("all points coincide")
    coords = np.array([c.centroid for c in clusters])
    weights = np.array([c.weight for c in clusters])
    m = np.inf
    step = max(1, 2_000_000 // len(clusters))
    for s in range(0, len(clusters), step):
        block = linkage_block(coords[s:s + step], weights[s:s + step], coords, weights, inst.kind)
        rows = np.arange(s, min(s + step, len(clusters)))
        block[rows - s, rows] = np.inf
        m = min(m, float(block.min()))
    if inst.kind is LinkageKind.WARDS:
        factor = 1.0 / np.sqrt(m)
    else:
        factor = 1.0 / m
    return Instance(coords * factor, weights, inst.kind), float(factor)

