"""Compare the compiled and pure-Python kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--n 1000] [--repeat 5]

Each kernel is timed with :mod:`timeit` (best of ``--repeat``) on the same
inputs under both backends, and the outputs are checked for agreement.
"""
import argparse
import sys
import timeit

import numpy as np

from bcpingarch import process as pr
from bcpingarch._backend import available_backends


def _cases(n):
    p = pr.config_a()
    s, lam = pr.simulate(p, n, seed=1)
    theta = p.full_vector()
    y = np.ascontiguousarray(s.values, dtype=np.int64)
    l1, l2 = (float(v) for v in lam.values[0])
    return {
        "filter_path": lambda k: k.filter_path(theta, y, l1, l2),
        "loglik": lambda k: k.loglik(theta, y, l1, l2),
        "loglik_grad": lambda k: k.loglik_grad(theta, y, l1, l2)[1],
        "score_terms": lambda k: k.score_terms(theta, y, l1, l2),
        "sample_bcp": lambda k: k.sample_bcp(2.0, 3.0, 0.2, n,
                                             k.UniformStream(np.random.default_rng(0))),
        "simulate_path": lambda k: k.simulate_path(
            p.omega, p.a, p.b, p.phi, n, l1, l2,
            k.UniformStream(np.random.default_rng(0)))[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="series length")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the Python kernels only", file=sys.stderr)
    names = sorted(backends)
    print(f"n = {args.n}")
    print(f"{'kernel':<15}" + "".join(f"{b + ' [ms]':>15}" for b in names)
          + (f"{'speed-up':>11}{'max |diff|':>13}" if len(names) == 2 else ""))
    for label, call in _cases(args.n).items():
        times, outputs = {}, {}
        for b in names:
            k = backends[b]
            outputs[b] = np.asarray(call(k), dtype=np.float64)
            number = 1 if b == "python" else 20
            best = min(timeit.repeat(lambda: call(k), number=number, repeat=args.repeat))
            times[b] = 1e3 * best / number
        line = f"{label:<15}" + "".join(f"{times[b]:>15.3f}" for b in names)
        if len(names) == 2:
            diff = np.max(np.abs(outputs["cython"] - outputs["python"]))
            line += f"{times['python'] / times['cython']:>10.1f}x{diff:>13.2e}"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
