"""Time the hot kernels with numba on and off.

Each configuration runs in a fresh interpreter because the backend is fixed
at import time by ``PHIQUAD_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--atoms 50] [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from phiquad import USING_NUMBA
from phiquad.divergences import catalog
from phiquad.empirical import EmpiricalDistribution
from phiquad.primal import primal_risk, primal_regret

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
X = EmpiricalDistribution.uniform(rng.normal(size=n))
out = {"numba": USING_NUMBA}
for spec in catalog(0.75, 0.7, 0.5, 2.0):
    primal_risk(spec, 0.5, X)  # compile or warm caches
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        primal_risk(spec, 0.5, X)
        primal_regret(spec, 0.5, X)
        best = min(best, time.perf_counter() - t0)
    out[spec.name] = best
print(json.dumps(out))
"""


def run(disable: bool, atoms: int, repeat: int) -> dict:
    env = dict(os.environ)
    env["PHIQUAD_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", _WORKER, str(atoms), str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--atoms", type=int, default=50)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    fast = run(False, args.atoms, args.repeat)
    slow = run(True, args.atoms, args.repeat)
    if not fast.pop("numba"):
        print("numba unavailable; both columns use the fallback")
    slow.pop("numba")
    print(f"primal risk + regret, {args.atoms} atoms, best of {args.repeat}")
    print(f"{'spec':36s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, t_fast in fast.items():
        t_slow = slow[name]
        print(f"{name:36s} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
