"""Centroid and Ward's linkage on (centroid, weight) summaries.

Ward's linkage is always evaluated through its closed form
``wA*wB/(wA+wB) * ||muA - muB||^2``; the raw-point definition (increase of
the weighted k-means objective) is kept separately as an oracle in
:mod:`parhac.hac_seq`.

The ``check_*`` helpers evaluate the structural inequalities the parallel
algorithm relies on and return a :class:`PropertyReport` instead of asserting,
so callers pick the tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cluster, LinkageKind, WrongLinkage, merge_clusters

REL_TOL = 1e-9


@dataclass(frozen=True)
class LinkageParams:
    kind: LinkageKind
    c_delta: float
    alpha_note: str

    @classmethod
    def for_kind(cls, kind) -> "LinkageParams":
        kind = LinkageKind.parse(kind)
        if kind is LinkageKind.WARDS:
            return cls(kind, 4.0, "log_n")
        return cls(kind, 1.0, "constant")


def _kind(params) -> LinkageKind:
    if isinstance(params, LinkageParams):
        return params.kind
    return LinkageKind.parse(params)


def sq_dist(x: np.ndarray, y: np.ndarray) -> float:
    """Squared Euclidean distance, accumulated coordinate by coordinate.

    The accumulation order matches :func:`linkage_block` so scalar and
    vectorised evaluations agree bit for bit.
    """
    acc = 0.0
    for d in range(x.shape[0]):
        diff = float(x[d]) - float(y[d])
        acc += diff * diff
    return acc


def linkage_value(ca: np.ndarray, wa: float, cb: np.ndarray, wb: float, kind) -> float:
    sq = sq_dist(ca, cb)
    if _kind(kind) is LinkageKind.WARDS:
        return (wa * wb) / (wa + wb) * sq
    return float(np.sqrt(sq))


def linkage(a: Cluster, b: Cluster, params) -> float:
    return linkage_value(a.centroid, a.weight, b.centroid, b.weight, params)


def linkage_block(ca: np.ndarray, wa: np.ndarray, cb: np.ndarray, wb: np.ndarray,
                  kind) -> np.ndarray:
    """Matrix of linkage values between two sets of (centroid, weight) rows."""
    ca = np.asarray(ca, dtype=np.float64)
    cb = np.asarray(cb, dtype=np.float64)
    if ca.ndim == 1:
        ca = ca[None, :]
    acc = np.zeros((ca.shape[0], cb.shape[0]))
    for d in range(ca.shape[1]):
        diff = ca[:, d, None] - cb[None, :, d]
        acc += diff * diff
    if _kind(kind) is LinkageKind.WARDS:
        wa = np.asarray(wa, dtype=np.float64).reshape(-1, 1)
        wb = np.asarray(wb, dtype=np.float64).reshape(1, -1)
        return (wa * wb) / (wa + wb) * acc
    return np.sqrt(acc)


def linkage_row(c: np.ndarray, w: float, cb: np.ndarray, wb: np.ndarray, kind) -> np.ndarray:
    return linkage_block(c, np.array([w]), cb, wb, kind)[0]


def lance_williams_update(dAC: float, dBC: float, dAB: float,
                          wA: float, wB: float, wC: float, kind=LinkageKind.WARDS) -> float:
    """Ward's linkage of A u B to C from the three pairwise values."""
    if _kind(kind) is not LinkageKind.WARDS:
        raise WrongLinkage("the Lance-Williams form used here is Ward's only")
    total = wA + wB + wC
    return ((wA + wC) * dAC + (wB + wC) * dBC - wC * dAB) / total


# --------------------------------------------------------------------------
# property checks


@dataclass(frozen=True)
class PropertyReport:
    name: str
    lhs: float
    rhs: float
    holds: bool
    skipped: bool = False
    detail: str = ""


def _le(lhs: float, rhs: float, rel: float) -> bool:
    return lhs <= rhs + rel * max(abs(lhs), abs(rhs), 1e-300)


def check_weight_stability(a: Cluster, b: Cluster, params, rel: float = REL_TOL) -> PropertyReport:
    """d(A u B, A) <= wB/(wA+wB) * d(A, B); an equality for centroid linkage."""
    ab = merge_clusters(a, b, -1)
    lhs = linkage(ab, a, params)
    rhs = b.weight / (a.weight + b.weight) * linkage(a, b, params)
    if _kind(params) is LinkageKind.CENTROID:
        holds = abs(lhs - rhs) <= rel * max(abs(rhs), 1e-300) or abs(lhs - rhs) < 1e-300
        return PropertyReport("weight_stability", lhs, rhs, holds, detail="equality")
    return PropertyReport("weight_stability", lhs, rhs, _le(lhs, rhs, rel))


def check_average_reducibility(a: Cluster, b: Cluster, c: Cluster, params,
                               rel: float = REL_TOL) -> PropertyReport:
    """d(A u B, C) >= (d(A,C) + d(B,C))/2 - d(A,B)."""
    if _kind(params) is LinkageKind.WARDS and c.weight < a.weight + b.weight:
        return PropertyReport("average_reducibility", np.nan, np.nan, True, skipped=True,
                              detail="needs |C| >= |A| + |B|")
    ab = merge_clusters(a, b, -1)
    lhs = linkage(ab, c, params)
    rhs = (linkage(a, c, params) + linkage(b, c, params)) / 2 - linkage(a, b, params)
    return PropertyReport("average_reducibility", lhs, rhs, _le(rhs, lhs, rel))


def check_apx_triangle(a: Cluster, b: Cluster, c: Cluster, params,
                       rel: float = REL_TOL) -> PropertyReport:
    """d(A,C) <= c_delta * (d(A,B) + d(B,C)) when |B| >= min(|A|, |C|)."""
    p = params if isinstance(params, LinkageParams) else LinkageParams.for_kind(params)
    if b.weight < min(a.weight, c.weight):
        return PropertyReport("apx_triangle", np.nan, np.nan, True, skipped=True,
                              detail="needs |B| >= min(|A|, |C|)")
    lhs = linkage(a, c, p)
    rhs = p.c_delta * (linkage(a, b, p) + linkage(b, c, p))
    return PropertyReport("apx_triangle", lhs, rhs, _le(lhs, rhs, rel))


def check_wards_sandwich(a: Cluster, b: Cluster, rel: float = REL_TOL) -> PropertyReport:
    """min(w)/2 * delta^2 <= d_Ward <= min(w) * delta^2.

    ``lhs``/``rhs`` are the ratio d_Ward / (min(w) * delta^2) and its allowed
    range [1/2, 1] is checked.
    """
    sq = sq_dist(a.centroid, b.centroid)
    d = linkage_value(a.centroid, a.weight, b.centroid, b.weight, LinkageKind.WARDS)
    scale = min(a.weight, b.weight) * sq
    if scale == 0:
        return PropertyReport("wards_sandwich", 0.0, 0.0, d == 0.0)
    lower, upper = scale / 2, scale
    holds = _le(lower, d, rel) and _le(d, upper, rel)
    return PropertyReport("wards_sandwich", d / scale, 0.5, holds, detail="ratio in [1/2, 1]")


def check_weak_reducibility(a: Cluster, b: Cluster, c: Cluster, params=LinkageKind.WARDS,
                            rel: float = REL_TOL) -> PropertyReport:
    """If d(A,B) >= max(d(A,C), d(B,C)) then merging C into either of A, B
    leaves its linkage to the other at least as large as before."""
    dab, dac, dbc = linkage(a, b, params), linkage(a, c, params), linkage(b, c, params)
    if dab < max(dac, dbc):
        return PropertyReport("weak_reducibility", np.nan, np.nan, True, skipped=True,
                              detail="premise d(A,B) >= max(d(A,C), d(B,C)) unmet")
    ac = merge_clusters(a, c, -1)
    bc = merge_clusters(b, c, -1)
    l1, l2 = linkage(ac, b, params), linkage(bc, a, params)
    # report the tighter of the two margins
    if l1 - dbc <= l2 - dac:
        lhs, rhs = l1, dbc
    else:
        lhs, rhs = l2, dac
    holds = _le(dbc, l1, rel) and _le(dac, l2, rel)
    return PropertyReport("weak_reducibility", lhs, rhs, holds)
