"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--tables 2000] [--j 3]
"""

import argparse
import time

import numpy as np

from lrorder import _fallback

try:
    from lrorder import _kernels
except ImportError:
    _kernels = None

LAMBDAS = np.array([-1.5, -1.0, -0.5, 0.0, 2 / 3, 1.0, 1.5, 2.0, 3.0])


def sample_tables(count, J, seed):
    rng = np.random.default_rng(seed)
    probs = np.full(J, 1.0 / J)
    return np.stack([np.stack([rng.multinomial(20, probs),
                               rng.multinomial(20, probs)])
                     for _ in range(count)])


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tables", type=int, default=2000)
    ap.add_argument("--j", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    tables = sample_tables(args.tables, args.j, args.seed)
    backends = [("python", _fallback)]
    if _kernels is not None:
        backends.append(("compiled", _kernels))
    else:
        print("compiled extension not built; timing the fallback only")

    results = {}
    for name, mod in backends:
        def run(mod=mod):
            return mod.analyze_batch(tables, LAMBDAS, 1e-5, 1e-8, 1e-8, 250)
        results[name] = run()
        secs = best_of(run, args.repeat)
        print(f"{name:>9}: {secs:8.4f} s for {args.tables} tables "
              f"({1e6 * secs / args.tables:8.1f} us/table)")
        results[name + "_time"] = secs

    if _kernels is not None:
        gap = max(np.max(np.abs(results["python"][i] - results["compiled"][i]))
                  for i in (0, 1))
        print(f"  speedup: {results['python_time'] / results['compiled_time']:.1f}x"
              f", max statistic difference {gap:.1e}")


if __name__ == "__main__":
    main()
