"""Compare the compiled and pure-Python geometry kernel backends.

Runs each kernel on identical randomized workloads in a subprocess per
backend (backend selection happens at import, so each measurement needs a
fresh interpreter) and prints the per-call timings and speedup.

Usage: python3 benchmarks/bench_kernels.py [--calls 200000]
"""
import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from probnav import kernels

calls = int(sys.argv[1])
rng = np.random.default_rng(0)
seg = rng.uniform(-5.0, 5.0, (calls, 6))
lo = rng.uniform(-5.0, 5.0, (calls, 3))
box = np.concatenate([lo, lo + rng.uniform(0.1, 2.0, (calls, 3))], axis=1)
sweep = rng.uniform(-5.0, 5.0, (calls, 12))
swept_lo = rng.uniform(-5.0, 5.0, (calls, 6))
swept_sz = rng.uniform(0.1, 2.0, (calls, 6))

results = {"backend": kernels.BACKEND}

begin = time.perf_counter()
hits = 0
for i in range(calls):
    s = seg[i]; b = box[i]
    hits += kernels.seg_aabb_intersects(s[0], s[1], s[2], s[3], s[4], s[5],
                                        b[0], b[1], b[2], b[3], b[4], b[5])
results["seg_aabb"] = (time.perf_counter() - begin) / calls
results["seg_aabb_hits"] = hits

begin = time.perf_counter()
hits = 0
for i in range(calls):
    r = swept_lo[i]; z = swept_sz[i]; m = sweep[i]
    hits += kernels.sweep_pair_intersects(
        (r[0], r[1], r[2]), (r[0] + z[0], r[1] + z[1], r[2] + z[2]),
        (m[0], m[1], m[2]), (m[3], m[4], m[5]),
        (r[3], r[4], r[5]), (r[3] + z[3], r[4] + z[4], r[5] + z[5]),
        (m[6], m[7], m[8]), (m[9], m[10], m[11]))
results["sweep_pair"] = (time.perf_counter() - begin) / calls
results["sweep_pair_hits"] = hits

print(json.dumps(results))
"""


def measure(calls: int, pure: bool) -> dict:
    env = dict(os.environ)
    if pure:
        env["PROBNAV_PURE"] = "1"
    else:
        env.pop("PROBNAV_PURE", None)
    out = subprocess.run([sys.executable, "-c", _WORKER, str(calls)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--calls", type=int, default=200_000)
    args = parser.parse_args()

    compiled = measure(args.calls, pure=False)
    pure = measure(args.calls, pure=True)
    if compiled["backend"] == pure["backend"]:
        print("warning: compiled backend unavailable, comparing pure to pure")
    for name in ("seg_aabb", "sweep_pair"):
        if compiled[f"{name}_hits"] != pure[f"{name}_hits"]:
            raise SystemExit(f"{name}: backends disagree on hit counts")
        c, p = compiled[name], pure[name]
        print(f"{name:12s} compiled {c * 1e6:8.3f} us/call   "
              f"pure {p * 1e6:8.3f} us/call   speedup {p / c:5.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
