"""Time the compiled and pure-Python tail-probability kernels on the same inputs.

    python benchmarks/bench_kernel.py [--rows 2000] [--n 30] [--repeat 3]

The workload is a batch of null rejection probabilities for random diagonal
covariances under the two-group HC2 reduction, the inner loop of a size search.
"""

import argparse
import time

import numpy as np

from hetrobust import _kernel
from hetrobust.fixtures import two_group
from hetrobust.qform import reduction_matrix, rejection_probs, tail_probs
from hetrobust.statistics import make_spec


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--acc", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    p = two_group(args.n, max(1, args.n // 10))
    A = reduction_matrix(p, make_spec(p, "HC2"), 5.0)
    tau = np.random.default_rng(args.seed).exponential(size=(args.rows, args.n))
    tau /= tau.sum(axis=1, keepdims=True)

    backends = ["python"]
    if _kernel.integrate_rows_ext is not None:
        backends.insert(0, "compiled")
    else:
        print("compiled kernel not built; timing the fallback only")

    s = np.sqrt(tau)
    lams = np.linalg.eigvalsh(s[:, :, None] * A.A[None] * s[:, None, :])

    workloads = {
        "end-to-end": lambda name: rejection_probs(A, tau, acc=args.acc, backend=name),
        "kernel only": lambda name: tail_probs(lams, acc=args.acc, backend=name),
    }
    for label, run in workloads.items():
        print(f"[{label}] {args.rows} rows, n = {args.n}, acc = {args.acc:g}")
        results = {}
        for name in backends:
            secs, vals = best_time(lambda: run(name), args.repeat)
            results[name] = (secs, vals)
            print(f"  {name:>9}: {secs:8.3f} s ({1e6 * secs / args.rows:8.1f} us/row)")
        if len(results) == 2:
            diff = float(np.max(np.abs(results["compiled"][1] - results["python"][1])))
            print(f"  speedup {results['python'][0] / results['compiled'][0]:.2f}x, max |difference| {diff:.2e}")


if __name__ == "__main__":
    main()
