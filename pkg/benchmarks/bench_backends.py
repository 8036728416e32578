"""Benchmark: compiled kernels vs the pure-numpy fallback.

Times the three hot paths (velocity convolution, upwind stepping through a
full solve, bounded-diffusion path sampling) on both backends and verifies
that the outputs agree bit for bit. Run as:

    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from snvsim._backend import compiled_module, fallback
from snvsim.noise import _stream_bitgen


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_step(impl, n_cells, n_eta, n_steps):
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.1, 0.9, n_cells)
    gamma = np.sort(rng.random(n_eta))[::-1].copy()
    gamma /= gamma.sum() * 1.01
    vfull = np.empty(n_cells + 1)
    out = np.empty(n_cells)

    def run():
        state = rho.copy()
        buf = out
        for _ in range(n_steps):
            vc = 1.0 - np.square(state)
            impl.convolve_velocity(vc, gamma, vfull)
            impl.step_upwind(state, vfull, 0.5, buf)
            state, buf = buf, state
        return state

    return run


def bench_jacobi(impl, m, r_t):
    def run():
        if hasattr(impl, "jacobi_paths"):
            bgs = [_stream_bitgen(1, k) for k in range(m)]
            impl.jacobi_paths(bgs, 0.5, 4.0, 1.0, 1e-3, r_t, 0.0, 10 ** 6)
        else:
            for k in range(m):
                impl.jacobi_path(_stream_bitgen(1, k), 0.5, 4.0, 1.0, 1e-3,
                                 r_t, 0.0, 10 ** 6)

    return run


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller workloads (used by the test suite)")
    args = parser.parse_args()

    compiled = compiled_module()
    if compiled is None:
        print("compiled kernels not built; nothing to compare")
        return

    if args.quick:
        cases = [
            ("solve loop (desk grid)", bench_step,
             dict(n_cells=300, n_eta=20, n_steps=50)),
            ("jacobi sampling (small)", bench_jacobi,
             dict(m=64, r_t=500)),
        ]
        repeats = 2
    else:
        cases = [
            ("solve loop (desk grid)", bench_step,
             dict(n_cells=300, n_eta=20, n_steps=2000)),
            ("solve loop (paper grid)", bench_step,
             dict(n_cells=2000, n_eta=66, n_steps=500)),
            ("jacobi sampling (1k paths)", bench_jacobi,
             dict(m=1024, r_t=2000)),
        ]
        repeats = 3

    print(f"{'kernel':<30}{'compiled':>12}{'fallback':>12}{'speedup':>10}")
    for name, factory, cfg in cases:
        t_c = timeit(factory(compiled, **cfg), repeats)
        t_f = timeit(factory(fallback, **cfg), repeats)
        print(f"{name:<30}{t_c * 1e3:>10.1f}ms{t_f * 1e3:>10.1f}ms"
              f"{t_f / t_c:>9.1f}x")

    # cross-check: identical states out of both solve loops
    cfg = cases[0][2]
    run_c = bench_step(compiled, **cfg)()
    run_f = bench_step(fallback, **cfg)()
    assert np.array_equal(run_c, run_f), "backends disagree"
    print("state arrays bit-identical across backends")


if __name__ == "__main__":
    main()
