"""Time the numba and pure-numpy kernel backends on the hot paths.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the environment flag that selects
the runtime backend does not matter here.
"""
import argparse
import time

import numpy as np

from fourdvar import kernels
from fourdvar.models import ModelSpec


def _best_time(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    for spec, nsteps in ((ModelSpec("L63"), 1000), (ModelSpec("L96"), 1000)):
        rng = np.random.default_rng(0)
        x0 = rng.uniform(0.0, 1.0, spec.n)
        args = (spec.kind_code, spec.param_array, spec.scheme_code, spec.dt)
        yield f"{spec.kind} integrate {nsteps} steps", \
            lambda b, a=args, x=x0, k=nsteps: b.integrate(*a, x, k)
        states, _ = kernels.numpy_backend.integrate(*args, x0, 40)
        steps = np.arange(1, 41, dtype=np.int64)
        yield f"{spec.kind} tangent window N=40", \
            lambda b, a=args, s=states, st=steps: b.tangent_window(*a, s, st)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if kernels.numba_backend is None:
        print("numba is not installed; only the numpy backend can be timed")
    print(f"{'case':36s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases():
        t_np = _best_time(lambda: fn(kernels.numpy_backend), args.repeat)
        if kernels.numba_backend is None:
            print(f"{name:36s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>9s}")
            continue
        t_nb = _best_time(lambda: fn(kernels.numba_backend), args.repeat)
        print(f"{name:36s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
