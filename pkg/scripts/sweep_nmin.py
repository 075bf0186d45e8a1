"""Find the smallest number of calls n at which the reduction behaves.

For n = start, start+1, ... run ``--trials`` random TCP instances (random
kappa in [1, 5], random t) through the exact differential and report how
many agree with simulation and keep every gadget invariant.  n_min is the
first n where all trials pass and the next ``--confirm`` values of n pass
as well.

    python scripts/sweep_nmin.py --start 2 --stop 40
"""
import argparse
import json
import time

import numpy as np

from parhac.hardness import hardness_differential, random_tcp


def sweep_one(n: int, trials: int, seed: int) -> tuple[int, list[dict]]:
    rng = np.random.default_rng([seed, n])
    bad = []
    for _ in range(trials):
        rep = hardness_differential(random_tcp(n, rng))
        if not rep.ok:
            bad.append({"kappa": rep.kappa, "t": rep.t, "failure": rep.first_failure})
    return trials - len(bad), bad


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--start", type=int, default=2)
    ap.add_argument("--stop", type=int, default=40)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--confirm", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n_min = None
    streak = 0
    rows = []
    for n in range(args.start, args.stop + 1):
        t0 = time.perf_counter()
        passed, bad = sweep_one(n, args.trials, args.seed)
        rows.append({"n": n, "passed": passed, "trials": args.trials,
                     "seconds": round(time.perf_counter() - t0, 2),
                     "example_failure": bad[0] if bad else None})
        print(json.dumps(rows[-1]), flush=True)
        if passed == args.trials:
            if streak == 0:
                candidate = n
            streak += 1
            if streak > args.confirm:
                n_min = candidate
                break
        else:
            streak = 0
    print(json.dumps({"n_min": n_min}))


if __name__ == "__main__":
    main()
