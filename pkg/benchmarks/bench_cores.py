#!/usr/bin/env python3
"""Benchmark the compiled stepping core against the pure-Python fallback.

Runs the bundled canonical scenario over a configurable horizon with each
available core and reports steps/second plus the speedup.  Telemetry from the
two cores is also compared on the frozen-adaptation variant, where
trajectories are insensitive to threshold chatter.
"""

import argparse
import dataclasses
import time

import numpy as np

from switchmrac.config import canonical_path, load_config
from switchmrac.engine import available_cores, run_scenario


def bench(scn, core, repeats):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run_scenario(scn, core=core)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-end", type=float, default=3.0, help="simulated horizon (s)")
    ap.add_argument("--h", type=float, default=1e-4, help="integrator step")
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args()

    scn, _ = load_config(canonical_path())
    scn = dataclasses.replace(scn, t_end=args.t_end, h=args.h)
    steps = int(round((args.t_end - 0.0) / args.h))
    cores = available_cores()
    print(f"canonical scenario, t_end={args.t_end}s, h={args.h:g} (~{steps} steps)")
    print(f"available cores: {', '.join(cores)}")

    timings = {}
    for core in cores:
        wall, res = bench(scn, core, args.repeats)
        timings[core] = wall
        print(
            f"  {core:9s} {wall:8.2f} s   {steps / wall:10.0f} steps/s   "
            f"({len(res.events)} detections, rho={res.rho:.2e})"
        )
    if "compiled" in timings and "python" in timings:
        print(f"speedup: {timings['python'] / timings['compiled']:.1f}x")

    # agreement check on a frozen-adaptation run (threshold-insensitive)
    if len(cores) == 2:
        frozen = dataclasses.replace(scn, rho=1e9, t_end=min(args.t_end, 1.0))
        runs = {core: run_scenario(frozen, core=core) for core in cores}
        a = runs["python"].telemetry.column("x")
        b = runs["compiled"].telemetry.column("x")
        print(f"frozen-run max |x| deviation between cores: {np.abs(a - b).max():.3e}")


if __name__ == "__main__":
    main()
