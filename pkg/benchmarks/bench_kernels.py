"""Compare the numba kernels with their pure NumPy fallbacks.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

The script re-runs itself in two subprocesses, one with
``HAWKES_IMPACT_NUMBA=1`` and one with ``HAWKES_IMPACT_NUMBA=0`` (the flag is
read at import time), times each kernel, and checks that both paths return
the same numbers. The numba timings exclude compilation: every kernel is
called once before timing.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = ("ogata_exponential", "ogata_power_law", "compensator_power_law", "propagator_sum",
         "count_increments", "spectral_weight")


def _cases():
    import numpy as np
    from scipy.special import gamma

    from hawkes_impact import _kernels as K
    from hawkes_impact.simulation import make_rng

    events = np.sort(make_rng(5, 0).uniform(0.0, 2000.0, 4000))
    signs = np.where(make_rng(5, 1).random(events.size) < 0.5, -1.0, 1.0)
    zeta = 1.0 + np.exp(-np.arange(20001) * 0.1)
    samples = np.linspace(0.0, 2000.0, 2001)
    flow = np.sort(make_rng(5, 2).uniform(0.0, 1e6, 500_000))
    z = np.geomspace(1e-4, 1e3, 20_000)
    g = float(gamma(0.6))

    def spectral():
        return np.array([K.spectral_weight(x, 1, 0.99, 0.4, 1.0, g, 1.0) for x in z])

    return {
        "ogata_exponential": lambda: K.ogata_exponential(make_rng(1, 0), 1.0, 0.9, 1.0, 0.0, 2e4),
        "ogata_power_law": lambda: K.ogata_power_law(make_rng(1, 0), 1.0, 0.5, 0.4, 1.0, 0.0,
                                                     2e3, 1e-9),
        "compensator_power_law": lambda: K.compensator_increments_power_law(
            events, 1.0, 0.5, 0.4, 1.0),
        "propagator_sum": lambda: K.propagator_sum(samples, events, signs, zeta, 0.1),
        "count_increments": lambda: K.count_increments(flow, 0.0, 1.0, 999_990, 10.0),
        "spectral_weight": spectral,
    }


def _worker(repeat: int) -> dict:
    import numpy as np

    from hawkes_impact._accel import NUMBA_ENABLED

    out = {"numba": NUMBA_ENABLED, "cases": {}}
    for name, fn in _cases().items():
        res = fn()  # warm-up; triggers compilation on the numba path
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            res = fn()
            best = min(best, time.perf_counter() - t0)
        arr = np.ascontiguousarray(res, dtype=float)
        out["cases"][name] = {"seconds": best, "size": int(arr.size),
                              "checksum": float(arr.sum())}
    return out


def _run(flag: str, repeat: int) -> dict:
    env = dict(os.environ, HAWKES_IMPACT_NUMBA=flag)
    proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write the results to this file")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(_worker(args.repeat)))
        return 0
    fast, slow = _run("1", args.repeat), _run("0", args.repeat)
    if not fast["numba"]:
        print("numba is not available; both runs used the fallback", file=sys.stderr)
    rows = []
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  agree")
    for name in CASES:
        a, b = fast["cases"][name], slow["cases"][name]
        agree = a["size"] == b["size"] and abs(a["checksum"] - b["checksum"]) <= 1e-9 * max(
            1.0, abs(b["checksum"]))
        speed = b["seconds"] / a["seconds"] if a["seconds"] > 0 else float("inf")
        rows.append({"kernel": name, "numba_s": a["seconds"], "numpy_s": b["seconds"],
                     "speedup": speed, "agree": agree})
        print(f"{name:<24}{a['seconds']:>12.4f}{b['seconds']:>12.4f}{speed:>10.1f}  {agree}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
