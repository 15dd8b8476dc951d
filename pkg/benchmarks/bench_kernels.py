"""Compare the compiled simulation kernels with the interpreted fallback.

Each mode runs in its own interpreter because the fallback is chosen at
import time through ``CATALYST_DISABLE_NUMBA``. Results are checked to be
identical before timings are reported.

    python3 benchmarks/bench_kernels.py --trials 2000
"""
import argparse
import json
import math
import os
import subprocess
import sys
import time

CASES = [
    ("fixed", {"delta": 1}),
    ("counter", {}),
    ("zeta2", {}),
    ("parallel", {"workers": 64}),
    ("wide", {}),
    ("counter-cache", {"capacity": 4}),
]


def measure(trials, repeat):
    import numpy as np

    from catalyst._accel import USING_NUMBA
    from catalyst.profile import RuntimeDistribution
    from catalyst.sim import StrategySpec, simulate_batch

    law = RuntimeDistribution.from_mapping({1: 0.01, math.inf: 0.99})
    out = {"numba": USING_NUMBA, "cases": {}}
    for kind, kw in CASES:
        spec = StrategySpec(kind, **kw)
        simulate_batch(law, spec, cap=3000, trials=2, seed=0)  # compile outside the timer
        best = math.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            b = simulate_batch(law, spec, cap=3000, trials=trials, seed=1)
            best = min(best, time.perf_counter() - t0)
        out["cases"][spec.label] = {"seconds": best, "checksum": int(np.sum(b.time)) + int(np.sum(b.work))}
    return out


def run_mode(disable, trials, repeat):
    env = dict(os.environ)
    if disable:
        env["CATALYST_DISABLE_NUMBA"] = "1"
    else:
        env.pop("CATALYST_DISABLE_NUMBA", None)
    cmd = [sys.executable, __file__, "--child", "--trials", str(trials), "--repeat", str(repeat)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.child:
        print(json.dumps(measure(args.trials, args.repeat)))
        return 0

    fast = run_mode(False, args.trials, args.repeat)
    slow = run_mode(True, args.trials, args.repeat)
    if not fast["numba"]:
        print("numba is not importable; both columns use the fallback", file=sys.stderr)
    print(f"{'strategy':<20}{'numba s':>12}{'python s':>12}{'speedup':>10}  match")
    for label, f in fast["cases"].items():
        s = slow["cases"][label]
        same = "yes" if f["checksum"] == s["checksum"] else "NO"
        print(f"{label:<20}{f['seconds']:>12.4f}{s['seconds']:>12.4f}{s['seconds'] / f['seconds']:>10.1f}  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
