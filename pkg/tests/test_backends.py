"""The compiled kernels and the numpy fallback must agree bit for bit on
state arrays; ledger scalars may differ in the last bits (summation order)."""

import numpy as np
import pytest

import snvsim.godunov as godunov
from snvsim._backend import BACKEND, compiled_module, fallback
from snvsim.godunov import solve_snv
from snvsim.noise import _stream_bitgen, sample_jacobi

from conftest import TAU, jacobi_params, make_setup

compiled = compiled_module()
needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled kernels not built")


@needs_compiled
class TestKernelEquivalence:
    def test_convolution_bitwise(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 200))
            n_eta = int(rng.integers(1, min(n, 40)))
            vcell = rng.random(n)
            gamma = np.sort(rng.random(n_eta))[::-1].copy() * 0.2
            a = np.empty(n + 1)
            b = np.empty(n + 1)
            compiled.convolve_velocity(vcell, gamma, a)
            fallback.convolve_velocity(vcell, gamma, b)
            assert np.array_equal(a, b)

    def test_step_bitwise_and_ledger_close(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 200))
            rho = rng.random(n)
            vfull = rng.random(n + 1)
            lam = float(rng.random() * 0.5)
            a = np.empty(n)
            b = np.empty(n)
            ra = compiled.step_upwind(rho, vfull, lam, a)
            rb = fallback.step_upwind(rho, vfull, lam, b)
            assert np.array_equal(a, b)
            assert ra[0] == rb[0] and ra[1] == rb[1]
            for x, y in zip(ra[2:], rb[2:]):
                assert x == pytest.approx(y, abs=1e-12)

    def test_jacobi_path_bitwise(self):
        for stream in range(6):
            p1 = compiled.jacobi_path(_stream_bitgen(5, stream), TAU, 4.0,
                                      1.0, 1e-3, 800, 0.0, 10 ** 6)
            p2 = fallback.jacobi_path(_stream_bitgen(5, stream), TAU, 4.0,
                                      1.0, 1e-3, 800, 0.0, 10 ** 6)
            assert np.array_equal(p1, p2)

    def test_vectorized_ensemble_matches_scalar(self):
        bgs = [_stream_bitgen(6, k) for k in range(40)]
        block = fallback.jacobi_paths(bgs, TAU, 4.0, 1.0, 1e-3, 300, 0.0,
                                      10 ** 6)
        singles = np.stack([
            compiled.jacobi_path(_stream_bitgen(6, k), TAU, 4.0, 1.0, 1e-3,
                                 300, 0.0, 10 ** 6)
            for k in range(40)])
        assert np.array_equal(block, singles)

    def test_restarted_ensemble_matches_scalar(self, rng):
        x0s = rng.uniform(-TAU, TAU, size=16)
        bgs = [_stream_bitgen(7, k) for k in range(16)]
        block = fallback.jacobi_paths(bgs, TAU, 4.0, 1.0, 1e-3, 200, x0s,
                                      10 ** 6)
        singles = np.stack([
            compiled.jacobi_path(_stream_bitgen(7, k), TAU, 4.0, 1.0, 1e-3,
                                 200, float(x0s[k]), 10 ** 6)
            for k in range(16)])
        assert np.array_equal(block, singles)


@needs_compiled
class TestSolverEquivalence:
    def test_full_solve_states_bitwise(self, vm, monkeypatch):
        grid, w, rho0 = make_setup(vm, dx=1e-2, t_end=0.5, profile="high",
                                   x_min=-1.0, x_max=4.0)
        noise = sample_jacobi(jacobi_params(delta_r=grid.dt), grid.n_steps,
                              seed=12)
        with_compiled = solve_snv(rho0, noise, w, vm, grid, tau=TAU,
                                  output_times=(0.25, 0.5),
                                  record_velocity=True)
        monkeypatch.setattr(godunov, "convolve_velocity",
                            fallback.convolve_velocity)
        monkeypatch.setattr(godunov, "step_upwind", fallback.step_upwind)
        with_fallback = solve_snv(rho0, noise, w, vm, grid, tau=TAU,
                                  output_times=(0.25, 0.5),
                                  record_velocity=True)
        for a, b in zip(with_compiled.snapshots, with_fallback.snapshots):
            assert np.array_equal(a.values, b.values)
        assert np.array_equal(with_compiled.velocity_history,
                              with_fallback.velocity_history)
        np.testing.assert_allclose(with_compiled.mass_ledger.mass,
                                   with_fallback.mass_ledger.mass,
                                   atol=1e-12)


def test_selected_backend_is_reported():
    assert BACKEND in ("compiled", "fallback")
