"""Time the numba and numpy paths of each kernel in ``sail._accel``.

    python3 bench/bench_kernels.py [--repeat 5]

Both paths are called directly, so ``SAIL_NO_NUMBA`` does not matter here.
Outputs are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from sail import _accel


def cases(rng):
    n = 5000
    rewards = rng.normal(size=n)
    values = rng.normal(size=n + 1)
    dones = (rng.uniform(size=n) < 0.01).astype(np.float64)
    yield "gae (N=5000)", (_accel._gae_nb, _accel._gae_numpy), (rewards, values, dones, 0.995, 0.97)

    refs = rng.normal(size=(2000, 11))
    queries = rng.normal(size=(1000, 11))
    yield "knn (1000 x 2000, k=10)", (_accel._knn_nb, _accel._knn_numpy), (queries, refs, 10, False)
    yield "knn self (2000, k=10)", (_accel._knn_nb, _accel._knn_numpy), (refs, refs, 10, True)

    x = np.concatenate([rng.normal(0.2, 0.05, 5000), rng.normal(0.8, 0.05, 5000)])
    em = (x, np.array([0.5, 0.5]), np.array([0.1, 0.9]), np.array([0.01, 0.01]))
    yield "em step (n=10000)", (_accel._em_step_nb, _accel._em_step_numpy), em


def _same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(x), np.asarray(y), rtol=1e-9, atol=1e-12) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (fast, slow), a in cases(rng):
        if not _same(fast(*a), slow(*a)):  # also triggers compilation
            raise SystemExit(f"{name}: numba and numpy paths disagree")
        t_nb = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
