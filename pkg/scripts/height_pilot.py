"""Pilot runs that fix the frozen height threshold of the acceptance suite.

Runs exact centroid HAC on gen_uniform(n, k, seed) for several seeds and
prints each dendrogram height plus the threshold rule applied in
tests/test_acceptance.py: twice the largest pilot height.

    python scripts/height_pilot.py --n 4096 --k 2 --seeds 5
"""
import argparse
import json
import time

from parhac.core import dendrogram_height
from parhac.gen import gen_uniform
from parhac.hac_seq import run_exact


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    heights = []
    for seed in range(args.seeds):
        t0 = time.perf_counter()
        h = dendrogram_height(run_exact(gen_uniform(args.n, args.k, seed)))
        heights.append(h)
        print(json.dumps({"seed": seed, "height": h,
                          "seconds": round(time.perf_counter() - t0, 1)}), flush=True)
    print(json.dumps({"max_height": max(heights), "threshold": 2 * max(heights)}))


if __name__ == "__main__":
    main()
