"""Command-line entry points: run, verify, stats, reduce-tcp, gen.

Exit codes: 0 success, 1 verification failure or differential
disagreement, 2 malformed input or flags, 3 internal assertion raised by
``--check``.  The log level comes from the PARHAC_LOG environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import fileio
from .core import (IncompleteTrace, MalformedInput, MalformedTrace, NonInterferenceViolated,
                   PoolTooSmall, RunStats, aspect_ratio, dendrogram_height)
from .gen import (gen_chain, gen_nonmon_2approx, gen_nonmon_triangle, gen_sphere_center,
                  gen_uniform)
from .hac_parallel import RoundInvariantViolated, SeparationViolated, run_parallel
from .hac_seq import Policy, run_c_approx, run_exact
from .hardness import (N_MIN, TcpInstance, format_rational_points, hardness_differential,
                       pad_tcp, reduce_tcp)
from .verify import potential_monitor, replay_verify

log = logging.getLogger("parhac")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
INTERNAL = (NonInterferenceViolated, PoolTooSmall, RoundInvariantViolated, SeparationViolated)
BAD_INPUT = (MalformedInput, MalformedTrace, IncompleteTrace, ValueError)


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run(args) -> int:
    inst = fileio.read_points(args.points, args.linkage)
    if args.mode == "exact":
        if args.eps is not None:
            log.warning("--eps is ignored in exact mode")
        trace = run_exact(inst)
        stats = RunStats(height=dendrogram_height(trace), aspect_ratio=aspect_ratio(inst))
    elif args.mode == "capprox":
        eps = 0.1 if args.eps is None else args.eps
        trace = run_c_approx(inst, 1.0 + eps, Policy(args.policy), args.seed)
        stats = RunStats(height=dendrogram_height(trace), aspect_ratio=aspect_ratio(inst))
    else:
        eps = 0.1 if args.eps is None else args.eps
        trace, stats = run_parallel(inst, eps, threads=args.threads, check=args.check,
                                    index=args.index)
    if args.out_trace:
        fileio.write_trace(args.out_trace, trace)
    else:
        sys.stdout.write(fileio.format_trace(trace))
    if args.out_dendrogram:
        fileio.write_dendrogram(args.out_dendrogram, trace)
    if args.out_stats:
        _dump(stats.to_dict(include_time=args.timing), args.out_stats)
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = fileio.read_points(args.points, args.linkage)
    trace = fileio.read_trace(args.trace, inst.n)
    rep = replay_verify(inst, trace, args.c)
    if args.out_report:
        _dump(rep.to_dict(), args.out_report)
    if not rep.ok:
        v = rep.first_violation
        print(f"violation at step {v.step}: {v.reason} (value {v.value!r}, "
              f"current min {v.current_min!r})", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_stats(args) -> int:
    inst = fileio.read_points(args.points, args.linkage)
    trace = fileio.read_trace(args.trace, inst.n)
    if not 0 <= args.x0 < inst.n:
        raise MalformedInput(f"--x0 must be in [0, {inst.n})")
    pot = potential_monitor(inst, trace, args.x0, args.c)
    out = {"height": dendrogram_height(trace), "n": inst.n, "potential": pot.to_dict()}
    _dump(out, args.out)
    return EXIT_OK


def _read_calls(path) -> list[tuple[int, int]]:
    calls = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedInput(f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            s, e = (int(x) for x in line.split(","))
        except ValueError:
            raise MalformedInput(f"line {lineno}: expected 'start,end'") from None
        calls.append((s, e))
    return calls


def cmd_reduce_tcp(args) -> int:
    inst = TcpInstance(tuple(_read_calls(args.calls)), args.kappa, args.t)
    if args.pad:
        inst = pad_tcp(inst, args.pad)
    if inst.n < N_MIN:
        log.warning("%d calls is below n_min = %d; the reduction may misbehave "
                    "(use --pad)", inst.n, N_MIN)
    red = reduce_tcp(inst)
    if args.out_points:
        Path(args.out_points).write_text(format_rational_points(red))
    if not args.run_differential:
        return EXIT_OK
    rep = hardness_differential(inst)
    _dump(rep.to_dict(), args.out_report)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_gen(args) -> int:
    if args.family == "uniform":
        inst = gen_uniform(args.n, args.k, args.seed, args.linkage)
    elif args.family == "chain":
        inst = gen_chain(args.n, args.eps_gap, args.linkage)
    elif args.family == "sphere":
        inst = gen_sphere_center(args.k, args.weight_center, seed=args.seed, kind=args.linkage)
    elif args.family == "triangle":
        inst = gen_nonmon_triangle(args.linkage)
    else:
        inst = gen_nonmon_2approx(args.gamma, args.linkage)
    text = fileio.format_points(inst)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parhac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def linkage_flag(sp):
        sp.add_argument("--linkage", choices=["centroid", "wards"], default="centroid",
                        help="linkage function (default centroid)")

    r = sub.add_parser("run", help="cluster a points file")
    r.add_argument("points", help="points CSV: optional w=<weight>, then coordinates")
    linkage_flag(r)
    r.add_argument("--mode", choices=["exact", "capprox", "parallel"], default="parallel",
                   help="exact sequential, sequential (1+eps)-approximate, or the "
                        "phase/round engine (default)")
    r.add_argument("--eps", type=float, default=None,
                   help="approximation slack; default 0.1, ignored by exact mode")
    r.add_argument("--threads", type=int, default=1,
                   help="worker threads for the parallel engine; output does not depend on it")
    r.add_argument("--seed", type=int, default=0, help="seed for the capprox random policy")
    r.add_argument("--policy", choices=[p.value for p in Policy],
                   default=Policy.RANDOM_WITHIN_C.value, help="capprox pair choice")
    r.add_argument("--index", choices=["brute", "grid"], default="brute",
                   help="nearest-neighbour index of the parallel engine")
    r.add_argument("--check", action="store_true",
                   help="runtime assertions: round invariant, path non-interference, "
                        "pool radius and separation")
    r.add_argument("--out-trace", help="trace JSONL path (default stdout)")
    r.add_argument("--out-stats", help="stats JSON path")
    r.add_argument("--out-dendrogram", help="parenthesised dendrogram text path")
    r.add_argument("--timing", action="store_true",
                   help="include wall time in the stats file (makes it non-reproducible)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="replay a trace and check every merge is c-approximate")
    v.add_argument("points")
    v.add_argument("trace")
    linkage_flag(v)
    v.add_argument("--c", type=float, default=1.0, help="approximation factor (default 1)")
    v.add_argument("--out-report", help="JSON report path")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("stats", help="height, phase segmentation and potential of a trace")
    s.add_argument("points")
    s.add_argument("trace")
    linkage_flag(s)
    s.add_argument("--x0", type=int, default=0, help="tracked input point (default 0)")
    s.add_argument("--c", type=float, default=1.0, help="approximation factor of the trace")
    s.add_argument("--out", help="JSON output path (default stdout)")
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("reduce-tcp", help="compile a TCP instance to a weighted HAC instance")
    t.add_argument("calls", help="CSV with 'start,end' per line")
    t.add_argument("--kappa", type=int, required=True, help="capacity, at least 1")
    t.add_argument("--t", type=int, required=True, help="queried call, 1-based")
    t.add_argument("--pad", type=int, default=0,
                   help="append non-overlapping calls until there are this many")
    t.add_argument("--out-points", help="rational points file (p/q strings)")
    t.add_argument("--out-report", help="differential report JSON (default stdout)")
    t.add_argument("--run-differential", action="store_true",
                   help="also run exact HAC on the reduction and compare with simulation")
    t.set_defaults(func=cmd_reduce_tcp)

    g = sub.add_parser("gen", help="write a generated instance as points CSV")
    g.add_argument("family", choices=["uniform", "chain", "sphere", "triangle", "2approx"])
    linkage_flag(g)
    g.add_argument("--n", type=int, default=100, help="points (uniform, chain)")
    g.add_argument("--k", type=int, default=2, help="dimension (uniform, sphere)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--eps-gap", type=float, default=0.01, help="chain gap increment")
    g.add_argument("--gamma", type=float, default=0.1, help="2approx gadget parameter")
    g.add_argument("--weight-center", type=float, default=100.0, help="sphere centre weight")
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PARHAC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INTERNAL as exc:
        print(f"internal assertion: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except BAD_INPUT as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
