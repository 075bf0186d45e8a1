"""Ground-truth replay verification and dendrogram-height diagnostics.

:func:`replay_verify` re-executes a trace against the instance with its own
linkage arithmetic and dense bookkeeping (it deliberately shares no code with
the engines) and checks every merge against the true current minimum.

:func:`phase_segment` and :func:`potential_monitor` follow one input point
x0 through a trace.  The trace is cut into phases in which merge values stay
within twice the running maximum, x0's cluster grows by less than half of
its size at the phase start, and whatever x0's cluster absorbs stays close to
the phase-start snapshot.  Within a phase the potential

    phi = sum over clusters A lighter than half the snapshot of
          2 ** (-d(snapshot, A) / (4 * running max))

never increases; the monitor evaluates it merge by merge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (Cluster, IncompleteTrace, Instance, LinkageKind, MalformedTrace,
                   MergeTrace, SkippedPreconditionFailed)

REL_TOL = 1e-9


# --------------------------------------------------------------------------
# private linkage arithmetic (kept separate from parhac.linkage on purpose)


def _values(c: np.ndarray, w: float, C: np.ndarray, W: np.ndarray, ward: bool) -> np.ndarray:
    sq = ((C - c[None, :]) ** 2).sum(axis=1)
    if ward:
        return sq * (w * W / (w + W))
    return np.sqrt(sq)


def _value(c1, w1, c2, w2, ward: bool) -> float:
    sq = float(((np.asarray(c1) - np.asarray(c2)) ** 2).sum())
    return sq * (w1 * w2 / (w1 + w2)) if ward else math.sqrt(sq)


def _mean(c1, w1, c2, w2) -> np.ndarray:
    return (np.asarray(c1) * w1 + np.asarray(c2) * w2) / (w1 + w2)


def replay_clusters(inst: Instance, trace: MergeTrace, upto: int | None = None) -> list[Cluster]:
    """Alive clusters after the first ``upto`` merges of ``trace``."""
    alive = {i: (inst.coords[i].copy(), float(inst.weights[i])) for i in range(inst.n)}
    used = set(alive)
    for rec in trace.records[:upto]:
        if rec.a_id not in alive or rec.b_id not in alive:
            raise MalformedTrace(f"step {rec.step} references a dead or unknown id")
        if rec.new_id in used:
            raise MalformedTrace(f"step {rec.step} reuses id {rec.new_id}")
        (ca, wa), (cb, wb) = alive.pop(rec.a_id), alive.pop(rec.b_id)
        alive[rec.new_id] = (_mean(ca, wa, cb, wb), wa + wb)
        used.add(rec.new_id)
    return [Cluster(i, c, w) for i, (c, w) in sorted(alive.items())]


# --------------------------------------------------------------------------
# replay verification


@dataclass
class Violation:
    step: int
    value: float
    actual: float
    current_min: float
    ratio: float
    reason: str

    def to_dict(self) -> dict:
        return dict(step=self.step, value=self.value, actual=self.actual,
                    current_min=self.current_min, ratio=self.ratio, reason=self.reason)


@dataclass
class VerifyReport:
    ok: bool
    c: float
    steps_checked: int
    first_violation: Violation | None = None
    max_ratio: float = 0.0

    def to_dict(self) -> dict:
        return {"ok": self.ok, "c": self.c, "steps_checked": self.steps_checked,
                "max_ratio": self.max_ratio,
                "first_violation": None if self.first_violation is None
                else self.first_violation.to_dict()}


def replay_verify(inst: Instance, trace: MergeTrace, c: float, rel: float = REL_TOL) -> VerifyReport:
    """Check that every merge is within a factor ``c`` of the current minimum.

    Keeps a dense matrix of pairwise values among alive clusters and each
    row's minimum, so the true minimum is known exactly at every step.  Also
    checks that each recorded value equals the actual linkage of the merged
    pair.
    """
    n = inst.n
    if trace.n_leaves != n:
        raise MalformedTrace(f"trace has {trace.n_leaves} leaves, instance has {n} points")
    if len(trace) != n - 1:
        raise IncompleteTrace(f"trace has {len(trace)} merges, expected {n - 1}")
    ward = inst.kind is LinkageKind.WARDS
    cents = inst.coords.copy()
    weights = inst.weights.astype(np.float64).copy()
    D = np.empty((n, n))
    for i in range(n):
        D[i] = _values(cents[i], weights[i], cents, weights, ward)
    np.fill_diagonal(D, np.inf)
    rowmin = D.min(axis=1)
    live = np.ones(n, dtype=bool)
    slot = {i: i for i in range(n)}
    used = set(slot)
    report = VerifyReport(True, c, 0)

    for rec in trace:
        if rec.a_id not in slot or rec.b_id not in slot:
            raise MalformedTrace(f"step {rec.step} references a dead or unknown id")
        if rec.new_id in used or rec.a_id == rec.b_id:
            raise MalformedTrace(f"step {rec.step} has a bad id {rec.new_id}")
        sa, sb = slot.pop(rec.a_id), slot.pop(rec.b_id)
        cur_min = float(rowmin.min())
        actual = float(D[sa, sb])
        bound = c * cur_min * (1 + rel)
        scale = max(abs(actual), abs(rec.value), cur_min)
        ratio = actual / cur_min if cur_min > 0 else (1.0 if actual == 0 else math.inf)
        report.max_ratio = max(report.max_ratio, ratio)
        reason = None
        if abs(rec.value - actual) > rel * scale:
            reason = "recorded value differs from the actual linkage"
        elif actual > bound or rec.value > bound:
            reason = f"merge exceeds {c} times the current minimum"
        report.steps_checked += 1
        if reason is not None:
            report.ok = False
            report.first_violation = Violation(rec.step, rec.value, actual, cur_min, ratio, reason)
            return report

        # rows whose minimum sat on column sa or sb must be rescanned
        stale = live & ((D[:, sa] <= rowmin) | (D[:, sb] <= rowmin))
        # new cluster takes slot sa
        cents[sa] = _mean(cents[sa], weights[sa], cents[sb], weights[sb])
        weights[sa] = weights[sa] + weights[sb]
        live[sb] = False
        stale[sa] = stale[sb] = False
        D[sb, :] = np.inf
        D[:, sb] = np.inf
        rowmin[sb] = np.inf
        row = _values(cents[sa], weights[sa], cents, weights, ward)
        row[~live] = np.inf
        row[sa] = np.inf
        D[sa, :] = row
        D[:, sa] = row
        idx = np.flatnonzero(stale)
        if idx.size:
            rowmin[idx] = D[idx].min(axis=1)
        rest = live & ~stale
        rowmin[rest] = np.minimum(rowmin[rest], row[rest])
        rowmin[sa] = row.min()
        slot[rec.new_id] = sa
        used.add(rec.new_id)
    return report


# --------------------------------------------------------------------------
# phases and potential for a tracked point


LARGE_MERGE = "LargeMerge"
LARGE_SIZE = "LargeSize"
LARGE_DRIFT = "LargeDrift"


def _c_delta(kind: LinkageKind) -> float:
    return 4.0 if kind is LinkageKind.WARDS else 1.0


@dataclass
class _Step:
    value: float            # actual linkage of the merged pair
    x_centroid: np.ndarray  # x0's cluster before the merge
    x_weight: float
    x_after_weight: float
    partner: tuple[np.ndarray, float] | None  # the cluster x0's cluster absorbs


@dataclass
class Phase:
    index: int
    start: int
    end: int
    delta_tilde: float
    x_tilde_centroid: np.ndarray
    x_tilde_weight: float
    broken_by: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"index": self.index, "start": self.start, "end": self.end,
                "delta_tilde": self.delta_tilde, "x_tilde_weight": self.x_tilde_weight,
                "x_tilde_centroid": [float(v) for v in self.x_tilde_centroid],
                "broken_by": list(self.broken_by)}


def _track(inst: Instance, trace: MergeTrace, x0: int) -> list[_Step]:
    if not 0 <= x0 < inst.n:
        raise ValueError(f"x0={x0} is not an input point")
    ward = inst.kind is LinkageKind.WARDS
    alive = {i: (inst.coords[i].copy(), float(inst.weights[i])) for i in range(inst.n)}
    xid = x0
    steps = []
    for rec in trace:
        if rec.a_id not in alive or rec.b_id not in alive or rec.new_id in alive:
            raise MalformedTrace(f"step {rec.step} references a dead or unknown id")
        (ca, wa), (cb, wb) = alive.pop(rec.a_id), alive.pop(rec.b_id)
        xc, xw = alive[xid] if xid in alive else ((ca, wa) if xid == rec.a_id else (cb, wb))
        merged = (_mean(ca, wa, cb, wb), wa + wb)
        partner = None
        if xid in (rec.a_id, rec.b_id):
            partner = (cb, wb) if xid == rec.a_id else (ca, wa)
            xid = rec.new_id
            after = merged[1]
        else:
            after = xw
        steps.append(_Step(_value(ca, wa, cb, wb, ward), np.asarray(xc), xw, after, partner))
        alive[rec.new_id] = merged
    return steps


def _broken(step: _Step, ph: Phase, kind: LinkageKind) -> list[str]:
    out = []
    if step.value > 2 * ph.delta_tilde:
        out.append(LARGE_MERGE)
    if not step.x_after_weight < 1.5 * ph.x_tilde_weight:
        out.append(LARGE_SIZE)
    if step.partner is not None:
        drift = _value(ph.x_tilde_centroid, ph.x_tilde_weight, step.partner[0], step.partner[1],
                       kind is LinkageKind.WARDS)
        if drift > 3 * _c_delta(kind) * ph.delta_tilde:
            out.append(LARGE_DRIFT)
    return out


def _segment(inst: Instance, steps: list[_Step]) -> list[Phase]:
    phases: list[Phase] = []
    running = 0.0
    i = 0
    while i < len(steps):
        start = i
        running = max(running, steps[start].value)
        ph = Phase(len(phases), start, start, running,
                   steps[start].x_centroid.copy(), steps[start].x_weight)
        reasons = _broken(steps[start], ph, inst.kind)
        if reasons:
            # the phase-start merge already breaks a condition: one-merge phase
            ph.broken_by = reasons
            i = start + 1
        else:
            i = start + 1
            while i < len(steps):
                reasons = _broken(steps[i], ph, inst.kind)
                if reasons:
                    ph.broken_by = reasons
                    break
                running = max(running, steps[i].value)
                i += 1
            ph.end = i - 1
        phases.append(ph)
    return phases


def phase_segment(inst: Instance, trace: MergeTrace, x0: int, c: float = 1.0) -> list[Phase]:
    """Cut ``trace`` into maximal phases for the tracked point ``x0``.

    Phase j starts at merge s_j with running maximum value
    delta~_j = max(delta_0..delta_{s_j}) and snapshot X~_j of x0's cluster,
    and extends while every merge i satisfies: delta_i <= 2 delta~_j,
    |X_{i+1}| < 1.5 |X~_j|, and, when x0's cluster absorbs B,
    d(X~_j, B) <= 3 c_delta delta~_j.  ``broken_by`` names the conditions the
    first merge after the phase violates.  ``c`` (the approximation factor
    of the trace) does not enter the definition; it is accepted so callers
    can pass one signature to every diagnostic.
    """
    del c
    return _segment(inst, _track(inst, trace, x0))


@dataclass
class PotentialRecord:
    step: int
    phase: int
    phi_before: float
    phi_after: float
    increased: bool
    x0_partner_val: float | None = None


@dataclass
class PotentialTrace:
    x0: int
    c: float
    phases: list[Phase]
    records: list[PotentialRecord]
    phi_start: list[float]
    increases: int
    max_rel_increase: float
    min_x0_partner_val: float | None
    x0_partner_floor: float

    def label_counts(self) -> dict[str, int]:
        counts = {LARGE_MERGE: 0, LARGE_SIZE: 0, LARGE_DRIFT: 0}
        for ph in self.phases:
            for lab in ph.broken_by:
                counts[lab] += 1
        return counts

    def to_dict(self) -> dict:
        return {"x0": self.x0, "c": self.c,
                "phases": [p.to_dict() for p in self.phases],
                "phi_start": self.phi_start,
                "phi": [[r.step, r.phase, r.phi_before, r.phi_after] for r in self.records],
                "increases": self.increases,
                "max_rel_increase": self.max_rel_increase,
                "min_x0_partner_val": self.min_x0_partner_val,
                "x0_partner_floor": self.x0_partner_floor,
                "label_counts": self.label_counts()}


def potential_monitor(inst: Instance, trace: MergeTrace, x0: int, c: float = 1.0,
                      rel: float = REL_TOL) -> PotentialTrace:
    """Evaluate the phase potential merge by merge and report increases."""
    ward = inst.kind is LinkageKind.WARDS
    steps = _track(inst, trace, x0)
    phases = _segment(inst, steps)
    phase_of = np.empty(len(steps), dtype=np.int64)
    for ph in phases:
        phase_of[ph.start:ph.end + 1] = ph.index

    alive = {i: (inst.coords[i].copy(), float(inst.weights[i])) for i in range(inst.n)}
    records: list[PotentialRecord] = []
    phi_start: list[float] = []
    increases, worst = 0, 0.0
    min_val = None
    floor = 2.0 ** (-3 * _c_delta(inst.kind) / 4)
    ph = None
    phi = 0.0

    def val(cent, w) -> float:
        if not w < ph.x_tilde_weight / 2:
            return 0.0
        d = _value(ph.x_tilde_centroid, ph.x_tilde_weight, cent, w, ward)
        return 2.0 ** (-d / (4 * ph.delta_tilde))

    for i, rec in enumerate(trace):
        if ph is None or phase_of[i] != ph.index:
            ph = phases[phase_of[i]]
            phi = math.fsum(val(cc, ww) for cc, ww in alive.values())
            phi_start.append(phi)
        (ca, wa), (cb, wb) = alive.pop(rec.a_id), alive.pop(rec.b_id)
        merged = (_mean(ca, wa, cb, wb), wa + wb)
        alive[rec.new_id] = merged
        before = phi
        phi = before - val(ca, wa) - val(cb, wb) + val(*merged)
        grew = phi > before + rel * max(before, 1e-300)
        if grew:
            increases += 1
        if before > 0:
            worst = max(worst, (phi - before) / before)
        pv = None
        if steps[i].partner is not None:
            # value of what x0's cluster absorbs, ignoring the size filter
            d = _value(ph.x_tilde_centroid, ph.x_tilde_weight, *steps[i].partner, ward)
            pv = 2.0 ** (-d / (4 * ph.delta_tilde))
            min_val = pv if min_val is None else min(min_val, pv)
        records.append(PotentialRecord(rec.step, ph.index, before, phi, grew, pv))
    return PotentialTrace(x0, c, phases, records, phi_start, increases, worst, min_val, floor)


# --------------------------------------------------------------------------
# packing


@dataclass
class PackingReport:
    count: int
    bound: float | None
    holds: bool | None
    bucket_counts: dict[int, int] | None = None


def packing_check(centroids, weights, r: float, R: float, center, kind=LinkageKind.CENTROID,
                  center_weight: float = 1.0) -> PackingReport:
    """Count clusters within linkage R of ``center`` given pairwise linkage >= r.

    For centroid linkage the count is compared with (3R/r)^k.  For Ward's
    the counts per weight bucket [2^i, 2^{i+1}) are reported without a bound.
    """
    kind = LinkageKind.parse(kind)
    ward = kind is LinkageKind.WARDS
    C = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    W = np.asarray(weights, dtype=np.float64).reshape(-1)
    for i in range(C.shape[0] - 1):
        row = _values(C[i], W[i], C[i + 1:], W[i + 1:], ward)
        if row.size and row.min() < r:
            raise SkippedPreconditionFailed(f"clusters closer than r={r}")
    vals = _values(np.asarray(center, dtype=np.float64), center_weight, C, W, ward)
    inside = vals <= R
    count = int(inside.sum())
    if ward:
        buckets: dict[int, int] = {}
        for w in W[inside]:
            b = int(w).bit_length() - 1
            buckets[b] = buckets.get(b, 0) + 1
        return PackingReport(count, None, None, dict(sorted(buckets.items())))
    bound = (3 * R / r) ** C.shape[1]
    return PackingReport(count, bound, count <= bound)
