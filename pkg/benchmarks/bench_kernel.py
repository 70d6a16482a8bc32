"""Compare the numba and pure-numpy integrator backends.

Each backend runs in its own interpreter because the switch is read at
import time. Usage: python3 benchmarks/bench_kernel.py [--t 200] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from kickpend import BACKEND, Params, State, flow
from kickpend.averages import time_average
T, repeat = float(sys.argv[1]), int(sys.argv[2])
x0, params = State(0.3, 2.2), Params(k=0.0)
t0 = time.perf_counter()
flow(x0, 1.0, params)
warm = time.perf_counter() - t0
best_flow = best_avg = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    tr = flow(x0, T, params)
    best_flow = min(best_flow, time.perf_counter() - t0)
    t0 = time.perf_counter()
    time_average("hamiltonian", State(-1.0471975511965976, 0.7), T, params)
    best_avg = min(best_avg, time.perf_counter() - t0)
print(json.dumps({"backend": BACKEND, "warmup_s": warm, "flow_s": best_flow,
                  "time_average_s": best_avg, "events": len(tr.events)}))
"""


def run(pure: bool, T: float, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("KICKPEND_PURE_NUMPY", None)
    if pure:
        env["KICKPEND_PURE_NUMPY"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(T), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=float, default=200.0, help="integration horizon")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rows = [run(False, args.t, args.repeat), run(True, args.t, args.repeat)]
    print(f"{'backend':8s} {'warmup s':>10s} {'flow s':>10s} {'avg s':>10s} {'events':>7s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['warmup_s']:10.3f} {r['flow_s']:10.4f} {r['time_average_s']:10.4f} {r['events']:7d}")
    print(f"speedup (flow): {rows[1]['flow_s'] / rows[0]['flow_s']:.1f}x")


if __name__ == "__main__":
    main()
