"""Compiled vs pure-Python detector kernels.

Each mode runs in its own interpreter because the numba switch is read at
import time:

    python benchmarks/bench_kernels.py            # both modes, side by side
    python benchmarks/bench_kernels.py --child    # current mode only (JSON)

Timings exclude the first call, so compilation is not counted.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def child(n_adwin: int, repeat: int) -> dict:
    from driftlab import _accel, _kernels
    from driftlab.detectors import Adwin, Kswin

    rng = np.random.default_rng(0)
    stream = np.r_[rng.random(n_adwin // 2) < 0.2, rng.random(n_adwin - n_adwin // 2) < 0.8].astype(float)

    def adwin():
        det = Adwin(0.002)
        for v in stream:
            det.update(v)

    a = np.sort(rng.normal(size=5000))
    b = np.sort(rng.normal(0.1, 1.0, size=5000))

    def ks():
        for _ in range(20):
            _kernels.ks_merge(a, b)

    X = rng.random((3000, 10))
    X[1500:, 7] += 0.4

    def kswin():
        det = Kswin(0.002)
        for t, x in enumerate(X):
            det.update(x, t)

    return {
        "numba": _accel.HAVE_NUMBA,
        "adwin_update": _best(adwin, repeat),
        "ks_merge": _best(ks, repeat),
        "kswin_stream": _best(kswin, repeat),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--child", action="store_true")
    ap.add_argument("--n", type=int, default=20_000, help="ADWIN stream length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(child(args.n, args.repeat)))
        return

    results = {}
    for label, flag in (("numba", "0"), ("python", "1")):
        env = dict(os.environ, DRIFTLAB_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--n", str(args.n), "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(out.stdout)
    if not results["numba"]["numba"]:
        print("numba is not importable; both columns use the fallback")
    print(f"{'kernel':<14}{'numba s':>12}{'python s':>12}{'speedup':>10}")
    for k in ("adwin_update", "ks_merge", "kswin_stream"):
        fast, slow = results["numba"][k], results["python"][k]
        print(f"{k:<14}{fast:>12.4f}{slow:>12.4f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
