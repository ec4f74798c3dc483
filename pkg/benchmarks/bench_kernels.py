"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs under both backends; the table reports
the best wall time per call and the speedup of the compiled module. Outputs
are checked to agree before timing.
"""

import argparse
import timeit

import numpy as np

from stmn import _backend


def cases(rng):
    # a training batch: 50 clips, 16-d features, 5 classes, H = 9
    F = rng.normal(size=(50, 16))
    R = rng.normal(scale=0.1, size=(50, 16))
    labels = np.repeat(np.arange(5), 10).astype(np.int64)
    A = rng.normal(size=(9, 9))
    A = A @ A.T + np.eye(9)
    b = rng.normal(size=9)
    q, N = rng.normal(size=16), rng.normal(size=(9, 16))
    return {
        "sq_distances (50x16)": lambda k: k.sq_distances(F),
        "gauss_solve (9x9)": lambda k: k.gauss_solve(A, b),
        "lle_solve (H=9, d=16)": lambda k: k.lle_solve(q, N, 1e-3),
        "nearest_in_batch (H=9)": lambda k: k.nearest_in_batch(F[0], F, labels, 0, True, 9),
        "project_batch (50x16, H=9)": lambda k: k.project_batch(F, R, 1.0, labels, 9, 1e-3, True),
    }


def _check_same(a, b):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            _check_same(x, y)
    else:
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mods = {m.NAME: m for m in _backend.available()}
    if "cython" not in mods:
        print("compiled extension not built; only the numpy fallback is available")
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':<30}" + "".join(f"{n:>14}" for n in mods) + ("     speedup" if len(mods) > 1 else ""))
    for name, fn in table.items():
        results = [fn(m) for m in mods.values()]
        for r in results[1:]:
            _check_same(results[0], r)
        times = []
        for m in mods.values():
            t = timeit.Timer(lambda: fn(m))
            n, _ = t.autorange()
            times.append(min(t.repeat(args.repeat, n)) / n)
        line = f"{name:<30}" + "".join(f"{t * 1e6:>11.1f} us" for t in times)
        if len(times) > 1:
            line += f"   {times[0] / times[1]:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
