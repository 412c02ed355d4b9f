"""Time the compiled kernels against the NumPy fallback.

Runs the three hot paths (pivoted QR, blocked projection subtraction,
binary probe epochs) under both backends and prints one table.  The
deployment-scale projection case needs ~4.5 GB and is gated behind
--full.

Usage:
    python3 benchmarks/bench_backends.py [--repeats N] [--full]
"""

import argparse
import time

import numpy as np

from orthoaudit import _backend
from orthoaudit.glm import TrainConfig, fit_binary_probe
from orthoaudit.linalg import DEFAULT_TOL


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_qr(core, repeats, rng):
    x = np.column_stack([np.ones(200_000), rng.standard_normal((200_000, 4))])
    return best_of(lambda: core.qr_pivoted(x, DEFAULT_TOL), repeats)


def bench_projection(core, repeats, rng, n, d):
    x = np.column_stack([np.ones(n), rng.standard_normal((n, 4))])
    q1 = core.qr_pivoted(x, DEFAULT_TOL)[0]
    e = rng.standard_normal((n, d))
    out = np.empty_like(e)
    return best_of(lambda: core.subtract_projection(q1, e, out), repeats)


def bench_epochs(name, repeats, rng):
    e = rng.standard_normal((20_000, 256))
    y = rng.integers(0, 2, 20_000)
    cfg = TrainConfig(epochs=5, learning_rate=0.05, batch_size=256, seed=0)

    def run():
        previous = _backend.use(name)
        try:
            fit_binary_probe(e, y, cfg)
        finally:
            _backend._active = previous

    return best_of(run, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3, help="take the best of N runs")
    parser.add_argument("--full", action="store_true",
                        help="include the 200k x 1376 projection case (~4.5 GB)")
    args = parser.parse_args()

    backends = {"python": _backend._select("python")}
    try:
        backends["cython"] = _backend._select("cython")
    except ImportError:
        print("compiled extension not built; timing the NumPy fallback only\n")

    cases = [("qr_pivoted 200k x 5", lambda core, name: bench_qr(core, args.repeats, np.random.default_rng(0))),
             ("projection 50k x 512", lambda core, name: bench_projection(core, args.repeats, np.random.default_rng(1), 50_000, 512)),
             ("binary probe 20k x 256 x 5 epochs", lambda core, name: bench_epochs(name, args.repeats, np.random.default_rng(2)))]
    if args.full:
        cases.insert(2, ("projection 200k x 1376",
                         lambda core, name: bench_projection(core, args.repeats, np.random.default_rng(1), 200_000, 1_376)))

    width = max(len(label) for label, _ in cases)
    header = f"{'case':<{width}}  " + "".join(f"{n:>12}" for n in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, fn in cases:
        row = f"{label:<{width}}  "
        timings = {}
        for name, core in backends.items():
            timings[name] = fn(core, name)
            row += f"{timings[name] * 1e3:>10.1f}ms"
        if len(timings) == 2:
            row += f"{timings['python'] / timings['cython']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
