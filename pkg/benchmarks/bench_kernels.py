"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time of each backend and
the speedup. Exits with status 1 when the extension is not built.
"""

import argparse
import sys
import timeit

import numpy as np

import modeseek as ms
from modeseek import _fallback

try:
    from modeseek import _kernels
except ImportError:
    _kernels = None


def cases():
    ref = ms.reference_mixture()
    params = ref.params
    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.normal(size=(2000, 2)))
    sample = np.ascontiguousarray(ms.sample(ref, 5000, 1))
    idx = np.arange(len(sample), dtype=np.int64)
    x = np.array([0.1, 0.4])
    starts = rng.uniform([-2.0, -1.0], [2.0, 2.5], size=(20, 2))
    flow_args = (1e-9, 1e-9, 10.0, 1e-9, 300.0, 0.0, False, 1_000_000)

    def mix_point(k):
        return lambda: [k.mix_derivs(p, *params) for p in X[:200]]

    def mix_batch(k):
        return lambda: k.mix_derivs_batch(X, *params)

    def kde(k):
        return lambda: [k.kde_sums(x, sample, idx, 0.6, 3, order) for order in (0, 1, 2)]

    def flow(k):
        return lambda: [k.flow_mixture(s, *params, *flow_args) for s in starts]

    return [
        ("mix_derivs x200", mix_point),
        ("mix_derivs_batch 2000x2", mix_batch),
        ("kde_sums n=5000 orders 0-2", kde),
        ("flow_mixture 20 starts", flow),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; reinstall without MODESEEK_NO_EXT", file=sys.stderr)
        return 1
    print(f"{'kernel':<30}{'compiled s':>12}{'numpy s':>12}{'speedup':>10}")
    for name, make in cases():
        t_c = min(timeit.repeat(make(_kernels), number=1, repeat=args.repeat))
        t_f = min(timeit.repeat(make(_fallback), number=1, repeat=args.repeat))
        print(f"{name:<30}{t_c:>12.4f}{t_f:>12.4f}{t_f / t_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
