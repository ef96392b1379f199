"""Compare the compiled and NumPy kernels on conditioning-sized batches.

Run with ``python benchmarks/bench_kernels.py [--batch 256] [--repeat 200]``.
Also times one full standard-model batch integration with each backend.
"""

import argparse
import math
import time

import numpy as np

from modalsse import kernels


def _time(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def kernel_cases(M, rng):
    x = rng.normal(0, 1, M)
    a = rng.normal(0, 1, M) + 1j * rng.normal(0, 1, M)
    W = rng.normal(0, 1, (M, 16)) + 1j * rng.normal(0, 1, (M, 16))
    psi = rng.normal(0, 1, (2, 16)) + 1j * rng.normal(0, 1, (2, 16))
    lop = np.array([[0, 0], [1, 0]], dtype=complex)
    return {
        "hermite_ratio_table": lambda k: k.hermite_ratio_table(x, 6),
        "coherent_ratio_table": lambda k: k.coherent_ratio_table(a, 3),
        "condition_contract": lambda k: k.condition_contract(W, psi, lop),
    }


def batch_integration(name, M):
    from modalsse.dynamics import RngStream, integrate_batch, make_layout
    from modalsse.propagator import IntegratorConfig, evolve_model
    from modalsse.verify import standard_model

    model = standard_model()
    grid = evolve_model(model, IntegratorConfig(1e-3, 1.0))
    out = {}
    for kind in ("position", "quadrature", "coherent"):
        layout = make_layout(kind, model.bath, model.basis)
        q0 = np.stack([RngStream(1, i).normal(math.sqrt(0.5), layout.n_coords) for i in range(M)])
        kernels.active = kernels.get(name)
        t0 = time.perf_counter()
        integrate_batch(grid, layout, model.bath, q0, model.system.lowering, record=[])
        out[kind] = time.perf_counter() - t0
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    names = kernels.available()
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.batch, rng)
    print(f"kernel timings, batch={args.batch} (microseconds per call)")
    print(f"{'kernel':24s}" + "".join(f"{n:>12s}" for n in names))
    for case, fn in cases.items():
        ts = [_time(lambda: fn(kernels.get(n)), args.repeat) * 1e6 for n in names]
        print(f"{case:24s}" + "".join(f"{t:12.1f}" for t in ts))
    print(f"\nstandard model, 1000 lattice steps, batch={args.batch} (seconds)")
    saved = kernels.active
    try:
        for n in names:
            res = batch_integration(n, args.batch)
            print(f"{n:10s}" + "".join(f"  {k}={v:.2f}" for k, v in res.items()))
    finally:
        kernels.active = saved


if __name__ == "__main__":
    main()
