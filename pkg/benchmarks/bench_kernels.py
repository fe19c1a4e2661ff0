"""Compare the compiled and NumPy kernels, alone and inside a full run.

    python benchmarks/bench_kernels.py [--repeat N]

The full-run comparison starts a fresh interpreter per backend, using
COMPCBF_PURE_PYTHON=1 to force the fallback.
"""
import argparse
import itertools
import os
import subprocess
import sys
import timeit

import numpy as np

from compcbf import _kernels

RUN_SNIPPET = """
import time
from compcbf import _kernels
from compcbf.scenario import load_scenario
from compcbf.sim import run
cfg = load_scenario({name!r}).config
best = min((lambda t0: (run(cfg), time.perf_counter() - t0)[1])(time.perf_counter()) for _ in range({repeat}))
print(_kernels.BACKEND, best)
"""


def kernel_inputs(n=4, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-0.5, 0.5, (n, 2))
    vel = rng.uniform(-0.2, 0.2, (n, 2))
    pairs = list(itertools.combinations(range(n), 2))
    first = np.array([i for i, _ in pairs] * 2, dtype=np.intp)
    second = np.array([j for _, j in pairs] * 2, dtype=np.intp)
    kind = np.array([_kernels.SAFETY] * len(pairs) + [_kernels.CONNECTIVITY] * len(pairs), dtype=np.int_)
    proj = (rng.normal(size=2 * n), rng.normal(size=2 * n), -3.0, -np.ones(2 * n), np.ones(2 * n))
    return (pos, vel, first, second, kind, 1.0, 0.15, 0.6, 1e-12), proj


def time_call(fn, args, repeat):
    number = 2000
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scenario", default="exp2_safety_connectivity")
    args = ap.parse_args(argv)

    impls = _kernels.implementations()
    if "cython" not in impls:
        print("compiled kernels not built; only the NumPy fallback is available")
    pair_args, proj_args = kernel_inputs()
    print(f"{'kernel':<24}" + "".join(f"{name:>14}" for name in impls) + "     speed-up")
    for label, attr, a in (("pair_terms (12 atoms)", "pair_terms", pair_args),
                           ("halfspace-box project", "project_halfspace_box", proj_args)):
        times = {name: time_call(getattr(mod, attr), a, args.repeat) for name, mod in impls.items()}
        row = f"{label:<24}" + "".join(f"{t * 1e6:>11.2f} us" for t in times.values())
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:>9.1f}x"
        print(row)

    print(f"\nfull run of {args.scenario} (best of {args.repeat}):")
    results = {}
    for pure in ("1", "0"):
        env = dict(os.environ, COMPCBF_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(name=args.scenario, repeat=args.repeat)],
                             env=env, capture_output=True, text=True, check=True).stdout.split()
        results[out[0]] = float(out[1])
    for name, t in results.items():
        print(f"  {name:<8} {t:8.3f} s")
    if len(results) == 2:
        print(f"  speed-up {results['python'] / results['cython']:.2f}x")


if __name__ == "__main__":
    main()
