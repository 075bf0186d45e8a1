"""Telephone-call admission reduced to weighted centroid HAC, in exact arithmetic.

A TCP instance is a list of calls (start, end) with strictly increasing
starts, a capacity kappa and a queried call t.  A call is serviced iff fewer
than kappa serviced calls are ongoing at its start.

The reduction lives in R^n, one axis per call.  A heavy centre C (weight W)
sits at the origin.  Call j contributes an inner start point S_j on the
positive j-axis and an inner finish point F_j on the negative j-axis, both of
weight 1 and roughly Delta from the origin, offset by tau times their event
number so that events are decided in time order.  Each inner point has a
heavy outer partner (R_j beyond S_j, L_j beyond F_j, weight W).  When an
inner point is decided it either joins C, dragging C's centroid slightly
along its axis, or joins its outer partner.  The outer distances r_j and l_j
are tuned so that S_j joins C exactly when the call is serviced, and F_j
joins C exactly when S_j did not.  Every number is an exact rational
(gmpy2.mpq); the two radicals are rationalised to ``digits`` significant
digits, far below the 1/n^7 relative margins the construction relies on.

Point ids: 0 is C; call j (1-based) owns ids 4(j-1)+1 .. 4(j-1)+4 for
S_j, R_j, F_j, L_j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpq

from .core import MalformedInput, MergeRecord, MergeTrace

S, R, F, L = 0, 1, 2, 3
_ROLE = "SRFL"

# Smallest call count at which 200 random differentials per n all pass,
# found by scripts/sweep_nmin.py (seed 0, confirmed on the next 3 values).
N_MIN = 6


# --------------------------------------------------------------------------
# TCP


@dataclass(frozen=True)
class TcpInstance:
    """Calls as (start, end) pairs, capacity ``kappa`` and 1-based query ``t``."""

    calls: tuple[tuple[int, int], ...]
    kappa: int
    t: int

    def __post_init__(self):
        calls = tuple((int(s), int(e)) for s, e in self.calls)
        object.__setattr__(self, "calls", calls)
        n = len(calls)
        if n < 1:
            raise MalformedInput("a TCP instance needs at least one call")
        if any(s >= e for s, e in calls):
            raise MalformedInput("every call must start before it ends")
        if any(calls[i][0] >= calls[i + 1][0] for i in range(n - 1)):
            raise MalformedInput("call starts must be strictly increasing")
        ends = [x for c in calls for x in c]
        if len(set(ends)) != len(ends):
            raise MalformedInput("all 2n event times must be distinct")
        if int(self.kappa) < 1:
            raise MalformedInput("kappa must be at least 1")
        if not 1 <= int(self.t) <= n:
            raise MalformedInput(f"t must be in [1, {n}]")
        object.__setattr__(self, "kappa", int(self.kappa))
        object.__setattr__(self, "t", int(self.t))

    @property
    def n(self) -> int:
        return len(self.calls)

    def events(self) -> list[tuple[int, int]]:
        """Events in time order as (role, call) with role S or F and 0-based call."""
        ev = [(s, S, j) for j, (s, _) in enumerate(self.calls)]
        ev += [(e, F, j) for j, (_, e) in enumerate(self.calls)]
        return [(role, j) for _, role, j in sorted(ev)]


def tcp_simulate(inst: TcpInstance) -> list[bool]:
    """Serviced flag per call."""
    serviced = [False] * inst.n
    ongoing = 0
    for role, j in inst.events():
        if role == S:
            if ongoing < inst.kappa:
                serviced[j] = True
                ongoing += 1
        elif serviced[j]:
            ongoing -= 1
    return serviced


def random_tcp(n: int, rng: np.random.Generator, kappa: int | None = None,
               t: int | None = None, kappa_range: tuple[int, int] = (1, 5)) -> TcpInstance:
    """Uniformly random interleaving of n calls over event times 1..2n."""
    labels = rng.permutation(np.repeat(np.arange(n), 2))
    first: dict[int, int] = {}
    times: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels.tolist()):
        first.setdefault(lab, len(first))
        times.setdefault(first[lab], []).append(pos + 1)
    calls = tuple((times[j][0], times[j][1]) for j in range(n))
    if kappa is None:
        kappa = int(rng.integers(kappa_range[0], kappa_range[1] + 1))
    if t is None:
        t = int(rng.integers(1, n + 1))
    return TcpInstance(calls, kappa, t)


def pad_tcp(inst: TcpInstance, n: int) -> TcpInstance:
    """Append disjoint calls after every existing event until there are n calls.

    The padding calls start after all original calls have ended, so they
    never change whether an original call is serviced.
    """
    if n < inst.n:
        raise ValueError("cannot pad to fewer calls")
    last = max(e for _, e in inst.calls)
    extra = tuple((last + 1 + 2 * i, last + 2 + 2 * i) for i in range(n - inst.n))
    return TcpInstance(inst.calls + extra, inst.kappa, inst.t)


# --------------------------------------------------------------------------
# reduction


def event_maps(inst: TcpInstance) -> dict[str, list[list[int]]]:
    """e, f, a per (call, role): event number (1-based), calls finished
    before, serviced calls ongoing immediately before.

    Each map is indexed ``m[role][call]`` with role 0 for S and 1 for F.
    ``a`` needs the simulation and is only used for consistency checks.
    """
    n = inst.n
    serviced = tcp_simulate(inst)
    e = [[0] * n, [0] * n]
    f = [[0] * n, [0] * n]
    a = [[0] * n, [0] * n]
    finished = ongoing = 0
    for num, (role, j) in enumerate(inst.events(), start=1):
        r = 0 if role == S else 1
        e[r][j], f[r][j], a[r][j] = num, finished, ongoing
        if role == S:
            ongoing += serviced[j]
        else:
            finished += 1
            ongoing -= serviced[j]
    return {"e": e, "f": f, "a": a}


def rational_sqrt(x: mpq, digits: int) -> mpq:
    """sqrt(x) rounded down to a rational with relative error below 10^-digits."""
    if x < 0:
        raise ValueError("negative radicand")
    if x == 0:
        return mpq(0)
    p, q = x.numerator, x.denominator
    # scale so the integer root carries at least `digits` significant digits
    shift = max(0, digits - (gmpy2.num_digits(p) - gmpy2.num_digits(q)) // 2 + 2)
    scale = gmpy2.mpz(10) ** shift
    root = gmpy2.isqrt(p * q * scale * scale)
    return mpq(root, q * scale)


@dataclass
class RationalPoint:
    coords: dict[int, mpq]  # sparse: axis -> coordinate
    weight: mpq


@dataclass
class ReductionOutput:
    n: int
    kappa: int
    t: int
    W: mpq
    Delta: mpq
    tau: mpq
    eps: mpq
    delta_l: mpq
    delta_u: mpq
    r: list[mpq]
    l: list[mpq]
    r_radicand: list[mpq]  # r_j = (1 + 2/n^7) * sqrt(r_radicand[j]) before rounding
    l_radicand: list[mpq]
    maps: dict[str, list[list[int]]]
    points: list[RationalPoint] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.n

    @staticmethod
    def point_id(call: int, role: int) -> int:
        """Id of role S/R/F/L of 0-based ``call``."""
        return 4 * call + 1 + role

    @staticmethod
    def label(pid: int) -> str:
        if pid == 0:
            return "C"
        call, role = divmod(pid - 1, 4)
        return f"{_ROLE[role]}{call + 1}"

    def float_coords(self) -> np.ndarray:
        X = np.zeros((len(self.points), self.n))
        for i, p in enumerate(self.points):
            for ax, v in p.coords.items():
                X[i, ax] = float(v)
        return X


def reduce_tcp(inst: TcpInstance, digits: int = 60) -> ReductionOutput:
    """Weighted rational point set in R^n whose exact centroid HAC answers ``inst``."""
    n = inst.n
    kappa = inst.kappa
    W = mpq(n) ** 3
    Delta = mpq(n) ** 5
    tau = mpq(1, n)
    eps = mpq(1, n ** 7)
    delta_l = Delta / (W + n)
    delta_u = (Delta + 2 * n * tau) / W
    grow = 1 + mpq(2, n ** 7)
    maps = event_maps(inst)
    e, f = maps["e"], maps["f"]
    out = ReductionOutput(n, kappa, inst.t, W, Delta, tau, eps, delta_l, delta_u,
                          [], [], [], [], maps)
    out.points.append(RationalPoint({}, W))
    for j in range(n):
        s_pos = Delta + tau * e[0][j]
        f_pos = Delta + tau * e[1][j]
        rr = (kappa - 1 + f[0][j]) * delta_u ** 2 + s_pos ** 2
        lr = (kappa + f[1][j]) * delta_u ** 2 + f_pos ** 2
        rj = grow * rational_sqrt(rr, digits)
        lj = grow * rational_sqrt(lr, digits)
        out.r_radicand.append(rr)
        out.l_radicand.append(lr)
        out.r.append(rj)
        out.l.append(lj)
        out.points += [RationalPoint({j: s_pos}, mpq(1)),
                       RationalPoint({j: s_pos + rj}, W),
                       RationalPoint({j: -f_pos}, mpq(1)),
                       RationalPoint({j: -(f_pos + lj)}, W)]
    return out


# --------------------------------------------------------------------------
# exact sequential centroid HAC


def _sqnorm(c: dict[int, mpq]) -> mpq:
    return sum((v * v for v in c.values()), mpq(0))


def _dot(a: dict[int, mpq], b: dict[int, mpq]) -> mpq:
    if len(a) > len(b):
        a, b = b, a
    return sum((v * b[k] for k, v in a.items() if k in b), mpq(0))


@dataclass
class ExactHacResult:
    trace: MergeTrace
    sq_values: list[mpq]  # exact squared merge values


def exact_hac_rational(points: Sequence[RationalPoint], eps: mpq | int = 0) -> ExactHacResult:
    """Exact centroid HAC over rational points.

    Squared centroid distances are compared exactly; ties go to the smallest
    (a_id, b_id).  An exact run is a valid (1+eps)-approximate run for any
    eps >= 0, so ``eps`` is only validated.  Float merge values in the trace
    are rounded square roots of the exact squared values.
    """
    if mpq(eps) < 0:
        raise ValueError("eps must be nonnegative")
    n = len(points)
    if n < 2:
        raise MalformedInput("need at least 2 points")
    cents = {i: dict(p.coords) for i, p in enumerate(points)}
    wts = {i: mpq(p.weight) for i, p in enumerate(points)}
    norms = {i: _sqnorm(cents[i]) for i in cents}

    def d2(i: int, j: int) -> mpq:
        return norms[i] + norms[j] - 2 * _dot(cents[i], cents[j])

    D: dict[int, dict[int, mpq]] = {i: {} for i in cents}
    for i in range(n):
        for j in range(i + 1, n):
            v = d2(i, j)
            D[i][j] = v
            D[j][i] = v

    def row_best(i: int) -> tuple[mpq, int]:
        return min((v, j) for j, v in D[i].items())

    best = {i: row_best(i) for i in D}
    trace = MergeTrace(n)
    sq_values: list[mpq] = []
    next_id = n
    for step in range(n - 1):
        v, a, b = min((bv, min(i, j), max(i, j)) for i, (bv, j) in best.items())
        new = next_id
        next_id += 1
        wa, wb = wts.pop(a), wts.pop(b)
        ca, cb = cents.pop(a), cents.pop(b)
        w = wa + wb
        c = {k: (wa * ca.get(k, 0) + wb * cb.get(k, 0)) / w for k in set(ca) | set(cb)}
        c = {k: x for k, x in c.items() if x != 0}
        cents[new], wts[new], norms[new] = c, w, _sqnorm(c)
        del norms[a], norms[b], D[a], D[b], best[a], best[b]
        D[new] = {}
        for i in D:
            if i == new:
                continue
            D[i].pop(a, None)
            D[i].pop(b, None)
            x = d2(i, new)
            D[i][new] = x
            D[new][i] = x
        for i in D:
            if i == new:
                continue
            if best[i][1] in (a, b):
                best[i] = row_best(i)
            elif D[i][new] < best[i][0]:
                best[i] = (D[i][new], new)
        if D[new]:
            best[new] = row_best(new)
        trace.append(MergeRecord(step, a, b, new, math.sqrt(float(v))))
        sq_values.append(v)
    return ExactHacResult(trace, sq_values)


# --------------------------------------------------------------------------
# differential test


@dataclass
class DifferentialReport:
    n: int
    kappa: int
    t: int
    tcp_answer: bool
    hac_answer: bool
    agree: bool
    serviced: list[bool]
    s_joined_c: list[bool]
    f_joined_c: list[bool]
    invariants: dict[str, bool]
    first_failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.agree and all(self.invariants.values())

    def to_dict(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "t": self.t,
                "tcp_answer": self.tcp_answer, "hac_answer": self.hac_answer,
                "agree": self.agree, "serviced": self.serviced,
                "s_joined_c": self.s_joined_c, "f_joined_c": self.f_joined_c,
                "invariants": self.invariants, "first_failure": self.first_failure}


def check_gadget_invariants(red: ReductionOutput, res: ExactHacResult
                            ) -> tuple[dict[str, bool], list[bool], list[bool], str | None]:
    """Walk the exact trace and check the gadget behaviour.

    - no_bad_merges: while any inner point is unmerged, every merge joins an
      unmerged inner point with C's cluster or with its own bare outer point;
    - f_iff_not_s: F_j joins C exactly when S_j does not;
    - drift_bounds: after every merge into C (while inner points remain),
      every axis C has moved along satisfies delta_l < |C_x| <= delta_u,
      every other axis is exactly 0, and each axis carries one inner point.
    Returns (flags, S_j joined C, F_j joined C, first failure message).
    """
    n = red.n
    owner = {i: i for i in range(len(red.points))}  # cluster id -> root gadget id of a bare point
    c_cluster = 0
    c_coords: dict[int, mpq] = {}
    c_weight = red.W
    axis_hits: dict[int, int] = {}
    inner_left = {red.point_id(j, role) for j in range(n) for role in (S, F)}
    bare = set(range(len(red.points)))
    s_in = [False] * n
    f_in = [False] * n
    decided_s = [False] * n
    decided_f = [False] * n
    flags = {"no_bad_merges": True, "f_iff_not_s": True, "drift_bounds": True}
    failure = None

    def fail(key: str, msg: str) -> None:
        nonlocal failure
        flags[key] = False
        if failure is None:
            failure = msg

    for rec in res.trace:
        a, b = rec.a_id, rec.b_id
        if inner_left:
            inner = [x for x in (a, b) if x in inner_left]
            if len(inner) != 1:
                fail("no_bad_merges", f"step {rec.step}: merge {a},{b} is not inner-vs-partner")
            else:
                e = inner[0]
                other = b if e == a else a
                call, role = divmod(e - 1, 4)
                partner = red.point_id(call, role + 1)
                if other == c_cluster:
                    joined_c = True
                elif other == partner and other in bare:
                    joined_c = False
                else:
                    fail("no_bad_merges", f"step {rec.step}: {red.label(e)} merged with "
                                          f"cluster {other}")
                    joined_c = False
                if role == S:
                    s_in[call], decided_s[call] = joined_c, True
                else:
                    f_in[call], decided_f[call] = joined_c, True
                inner_left.discard(e)
                if joined_c:
                    w_e = red.points[e].weight
                    pos = red.points[e].coords
                    new_w = c_weight + w_e
                    keys = set(c_coords) | set(pos)
                    c_coords = {k: (c_weight * c_coords.get(k, 0) + w_e * pos.get(k, 0)) / new_w
                                for k in keys}
                    c_weight = new_w
                    axis_hits[call] = axis_hits.get(call, 0) + 1
                    for ax, x in c_coords.items():
                        if axis_hits.get(ax, 0) == 0:
                            if x != 0:
                                fail("drift_bounds", f"step {rec.step}: C moved on axis {ax}")
                        elif axis_hits[ax] > 1:
                            fail("drift_bounds", f"step {rec.step}: two inner points on axis {ax}")
                        elif not (red.delta_l < abs(x) <= red.delta_u):
                            fail("drift_bounds", f"step {rec.step}: |C_{ax}| = {float(abs(x))} "
                                                 f"outside ({float(red.delta_l)}, "
                                                 f"{float(red.delta_u)}]")
        if c_cluster in (a, b):
            c_cluster = rec.new_id
        bare.discard(a)
        bare.discard(b)
    for j in range(n):
        if decided_s[j] and decided_f[j] and f_in[j] == s_in[j]:
            fail("f_iff_not_s", f"call {j + 1}: S joined C = {s_in[j]}, F joined C = {f_in[j]}")
    return flags, s_in, f_in, failure


def hardness_differential(inst: TcpInstance, digits: int = 60) -> DifferentialReport:
    """Answer ``inst`` by simulation and through the reduction, and compare.

    The HAC answer is whether S_t joins C's cluster (rather than R_t).  The
    flag ``all_calls_agree`` extends the comparison to every call.
    """
    serviced = tcp_simulate(inst)
    red = reduce_tcp(inst, digits)
    res = exact_hac_rational(red.points, red.eps)
    flags, s_in, f_in, failure = check_gadget_invariants(red, res)
    flags["all_calls_agree"] = s_in == serviced
    if not flags["all_calls_agree"] and failure is None:
        j = next(i for i in range(inst.n) if s_in[i] != serviced[i])
        failure = f"call {j + 1}: serviced {serviced[j]}, S joined C {s_in[j]}"
    tcp_answer = serviced[inst.t - 1]
    hac_answer = s_in[inst.t - 1]
    agree = tcp_answer == hac_answer
    if not agree and failure is None:
        failure = f"call {inst.t}: tcp says {tcp_answer}, hac says {hac_answer}"
    return DifferentialReport(inst.n, inst.kappa, inst.t, tcp_answer, hac_answer, agree,
                              serviced, s_in, f_in, flags, failure)


def format_rational_points(red: ReductionOutput) -> str:
    """Points file with exact rationals: ``w=<p/q>`` then n coordinates ``p/q``."""
    lines = []
    for p in red.points:
        row = [f"w={p.weight}"] + [str(p.coords.get(ax, mpq(0))) for ax in range(red.n)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
