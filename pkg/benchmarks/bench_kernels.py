"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Times each kernel on both backends, then one training epoch of a degree-12
polynomial MACM with the active kernels swapped in.
"""
import argparse
import contextlib
import timeit

import numpy as np

from macm import _pykernels, kernels, models, training
from macm.data import Dataset, FeatureSpec

try:
    from macm import _ckernels
except ImportError:
    _ckernels = None

KERNEL_NAMES = ("horner", "power_sums", "exclusive_products", "design_matrix", "rank_auc")


def kernel_cases(n, rng):
    xs = rng.uniform(-1, 1, n)
    coeffs = rng.normal(size=13)
    w = rng.normal(size=n)
    F = rng.uniform(0.5, 1.5, (n, 9))
    X = rng.uniform(-1, 1, (n // 10, 3))
    terms = np.array(models.ergodic_terms([4, 4, 4]), dtype=np.int64)
    scores = rng.normal(size=n).round(2)
    labels = rng.integers(0, 2, n).astype(np.int64)
    return {
        "horner": lambda k: k.horner(coeffs, xs),
        "power_sums": lambda k: k.power_sums(12, xs, w),
        "exclusive_products": lambda k: k.exclusive_products(F),
        "design_matrix": lambda k: k.design_matrix(X, terms),
        "rank_auc": lambda k: k.rank_auc(scores, labels),
    }


@contextlib.contextmanager
def using(backend):
    saved = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(backend, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.append(("compiled", _ckernels))
    else:
        print("compiled extension not built; timing the numpy backend only")

    rng = np.random.default_rng(0)
    cases = kernel_cases(args.n, rng)
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for kname, case in cases.items():
        times = [best_of(lambda b=b: case(b), args.repeat) for _, b in backends]
        speedup = f"{times[0] / times[1]:>9.2f}x" if len(times) == 2 else ""
        print(f"{kname:<22}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times) + speedup)

    X = rng.uniform(-1, 1, (20_000, 8))
    y = np.prod(1 + 0.3 * X, axis=1) + X.sum(axis=1)
    ds = Dataset(X, y, [FeatureSpec(f"x{i}", raw_min=-1.0, raw_max=1.0) for i in range(8)], normalized=True)
    cfg = training.TrainConfig(epochs=1, batch_size=1024, learning_rate=0.005)
    times = []
    for _, b in backends:
        with using(b):
            model = models.ModelBlueprint("macm_poly").build(8, seed=0)
            times.append(best_of(lambda m=model: training.train(m, ds, cfg), args.repeat))
    speedup = f"{times[0] / times[1]:>9.2f}x" if len(times) == 2 else ""
    print(f"{'train epoch (20k x 8)':<22}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times) + speedup)


if __name__ == "__main__":
    main()
