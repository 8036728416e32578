"""Orchestration of i.i.d. realization batches.

Realization k draws its noise from the counter-based stream (master_seed, k),
so batches are reproducible bit for bit for any worker count and a batch of
size M' < M is exactly the first M' realizations of the larger batch.
Workers run on a thread pool; the compiled kernels release the GIL, so the
independent solves genuinely overlap.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .godunov import solve_snv
from .noise import NoiseKind, sample_jacobi, sample_white_noise

__all__ = ["McBatchSpec", "BatchError", "realization_noise", "run_batch",
           "batch_fields_at"]


class BatchError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        lines = ", ".join(f"realization {k}: {exc!r}"
                          for k, exc in failures[:5])
        super().__init__(f"{len(failures)} realization(s) failed: {lines}")


@dataclass(frozen=True)
class McBatchSpec:
    m: int
    master_seed: int
    grid: object
    noise_params: object
    weights: object
    vm: object
    rho0_values: np.ndarray
    output_times: tuple | None = None
    record_velocity: bool = False
    model: str = "snv"
    reuse_prefix: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one realization")
        if self.model != "snv":
            raise ValueError("batches drive the stochastic model only")


def realization_noise(spec, k):
    """Noise path of realization k on stream (master_seed, k)."""
    params = spec.noise_params
    if params.delta_r is None:
        params = params.with_delta_r(spec.grid.dt)
    r_t = int(np.floor(spec.grid.t_end / params.delta_r + 1e-9))
    if params.kind == NoiseKind.WHITE:
        return sample_white_noise(params, r_t, spec.master_seed, stream=k)
    return sample_jacobi(params, r_t, spec.master_seed, stream=k)


def _run_one(spec, k):
    noise = realization_noise(spec, k)
    return solve_snv(spec.rho0_values, noise, spec.weights, spec.vm,
                     spec.grid, tau=spec.noise_params.tau,
                     output_times=spec.output_times,
                     record_velocity=spec.record_velocity)


def run_batch(spec, threads=1):
    """All realizations, ordered by realization index."""
    results = [None] * spec.m
    failures = []
    if threads <= 1:
        for k in range(spec.m):
            try:
                results[k] = _run_one(spec, k)
            except Exception as exc:
                failures.append((k, exc))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_run_one, spec, k): k
                       for k in range(spec.m)}
            for fut, k in futures.items():
                try:
                    results[k] = fut.result()
                except Exception as exc:
                    failures.append((k, exc))
    if failures:
        failures.sort(key=lambda item: item[0])
        raise BatchError(failures)
    return results


def batch_fields_at(results, t):
    """Snapshots of every realization at one requested time, in order."""
    return [res.snapshot_at(t) for res in results]
