import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from snvsim.core import (DensityField, Grid1D, Kernel, concave_kernel,
                         discretize_kernel, nonlocal_velocity,
                         quadratic_velocity_model, rho_high_profile,
                         rho_low_profile)

from conftest import TAU, cfl_dt, make_setup


class TestGrid:
    def test_build_rounds_cell_count(self):
        g = Grid1D.build(-0.5, 2.5, 1e-2, 1e-3, 1.0)
        assert g.n_cells == 300
        assert g.n_steps == 1000
        assert g.cell_centers()[0] == pytest.approx(-0.495)

    def test_inconsistent_extent_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            Grid1D(x_min=0.0, x_max=1.0, dx=0.3, n_cells=3, dt=0.1, t_end=1.0)

    def test_positive_steps_required(self):
        with pytest.raises(ValueError):
            Grid1D.build(0.0, 1.0, -0.1, 0.1, 1.0)
        with pytest.raises(ValueError):
            Grid1D.build(0.0, 1.0, 0.1, -0.1, 1.0)

    def test_time_index_snaps_to_nearest(self):
        g = Grid1D.build(0.0, 1.0, 0.1, 0.25, 1.0)
        assert g.time_index(0.0) == 0
        assert g.time_index(0.3) == 1
        assert g.time_index(0.4) == 2
        assert g.time_index(99.0) == g.n_steps


class TestKernelWeights:
    def test_single_cell_captures_total_mass(self):
        w = discretize_kernel(concave_kernel(0.2), 0.2)
        assert w.n_eta == 1
        assert w.gamma[0] == pytest.approx(1.0, abs=1e-14)

    def test_two_cells_partition_and_order(self):
        w = discretize_kernel(concave_kernel(0.2), 0.1)
        assert w.n_eta == 2
        assert w.gamma[0] + w.gamma[1] == pytest.approx(1.0, abs=1e-12)
        assert w.gamma[0] > w.gamma[1]

    def test_first_weight_matches_quadrature_oracle(self):
        # oracle: adaptive quadrature of the kernel over the first cell
        kern = concave_kernel(0.2)
        oracle, _ = quad(kern.w, 0.0, 0.1, epsabs=1e-15, epsrel=1e-13)
        w = discretize_kernel(kern, 0.1)
        assert oracle == pytest.approx(0.6875, abs=1e-12)
        assert w.gamma[0] == pytest.approx(oracle, abs=1e-12)

    def test_rejects_bad_dx(self):
        kern = concave_kernel(0.2)
        with pytest.raises(ValueError):
            discretize_kernel(kern, 0.25)
        with pytest.raises(ValueError):
            discretize_kernel(kern, 0.0)

    @pytest.mark.parametrize("dx", [1e-1, 1e-2, 1e-3])
    def test_weight_sum_converges_to_kernel_mass(self, dx):
        kern = concave_kernel(0.2)
        w = discretize_kernel(kern, dx)
        tail, _ = quad(kern.w, w.n_eta * dx, kern.eta, epsabs=1e-15,
                       epsrel=1e-13)
        assert abs(w.total() - 1.0) <= tail + 1e-12

    def test_quadrature_path_for_user_kernel(self):
        eta = 0.3
        c = np.pi / (2.0 * eta)
        kern = Kernel(eta=eta, w=lambda x: c * np.cos(np.pi * x / (2 * eta)),
                      w_at_0=c, lip_w=c * np.pi / (2 * eta))
        w = discretize_kernel(kern, 0.1)
        assert w.n_eta == 3
        # analytic cell integrals of the cosine bump
        expect = [np.sin(np.pi * (k + 1) / 6) - np.sin(np.pi * k / 6)
                  for k in range(3)]
        np.testing.assert_allclose(w.gamma, expect, atol=1e-12)

    def test_kernel_mass_validation(self):
        with pytest.raises(ValueError, match="mass"):
            Kernel(eta=0.2, w=lambda x: np.full_like(np.asarray(x, float),
                                                     2.0),
                   w_at_0=2.0, lip_w=0.0)


def brute_force_velocity(values, gamma, eps, vm, cells):
    """Direct convolution sum, no vectorization; the independent oracle."""
    n = len(values)
    out = {}
    for j in cells:
        acc = 0.0
        for k in range(len(gamma)):
            idx = min(j + k + 1, n - 1)
            acc += gamma[k] * max(0.0, float(vm.v(values[idx])) + eps)
        out[j] = acc
    return out


class TestNonlocalVelocity:
    def test_empty_road_moves_at_v_max(self, vm):
        w = discretize_kernel(concave_kernel(0.2), 1e-2)
        v = nonlocal_velocity(np.zeros(100), w, 0.0, vm)
        np.testing.assert_allclose(v, vm.v_max * w.total(), rtol=1e-14)

    def test_jammed_road_with_negative_noise_stalls(self, vm):
        w = discretize_kernel(concave_kernel(0.2), 1e-2)
        v = nonlocal_velocity(np.full(100, vm.rho_max), w, -TAU, vm)
        assert np.all(v == 0.0)

    def test_congestion_ahead_slows_traffic(self, vm):
        grid, w, rho0 = make_setup(vm, dx=1e-3)
        v = nonlocal_velocity(rho0, w, 0.0, vm)
        xc = grid.cell_centers()
        j0 = int(np.argmin(np.abs(xc - 0.0)))
        j3 = int(np.argmin(np.abs(xc - 0.3)))
        oracle = brute_force_velocity(rho0, w.gamma, 0.0, vm, [j0, j3])
        assert v[j0] == pytest.approx(oracle[j0], abs=1e-13)
        assert v[j3] == pytest.approx(oracle[j3], abs=1e-13)
        assert v[j0] > v[j3]

    @settings(max_examples=50, deadline=None)
    @given(data=st.data())
    def test_velocity_bounds_and_monotonicity(self, data, vm):
        n = data.draw(st.integers(min_value=5, max_value=60))
        vals = data.draw(st.lists(
            st.floats(min_value=0.0, max_value=1.0), min_size=n, max_size=n))
        eps = data.draw(st.floats(min_value=-TAU, max_value=TAU))
        w = discretize_kernel(concave_kernel(0.2), 0.05)
        rho = np.array(vals)
        v = nonlocal_velocity(rho, w, eps, vm)
        assert np.all(v >= 0.0)
        assert np.all(v <= vm.v_max + TAU + 1e-12)
        # uniform density shift can only slow traffic down
        shift = data.draw(st.floats(min_value=0.0, max_value=1.0))
        rho_hi = np.minimum(rho + shift, vm.rho_max)
        assert np.all(nonlocal_velocity(rho_hi, w, eps, vm) <= v + 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(a1=st.floats(min_value=-TAU, max_value=TAU),
           a2=st.floats(min_value=-TAU, max_value=TAU))
    def test_noise_lipschitz_split(self, a1, a2, vm):
        w = discretize_kernel(concave_kernel(0.2), 0.05)
        rho = np.linspace(0.0, 1.0, 40)
        v1 = nonlocal_velocity(rho, w, a1, vm)
        v2 = nonlocal_velocity(rho, w, a2, vm)
        assert np.max(np.abs(v1 - v2)) <= abs(a1 - a2) * w.total() + 1e-12


class TestProfilesAndFields:
    def test_cell_averages_preserve_mass(self, vm):
        for profile, lo, hi in [(rho_low_profile(), 1.0 / 3, 2.0 / 3),
                                (rho_high_profile(), 0.0, 2.0)]:
            grid = Grid1D.build(-1.0, 4.0, 0.0125, 1e-3, 1.0)
            avg = profile.cell_averages(grid)
            exact = 0.2 * (grid.x_max - grid.x_min) \
                + (profile.levels[1] - 0.2) * (hi - lo)
            assert float(np.sum(avg)) * grid.dx == pytest.approx(exact,
                                                                 abs=1e-12)

    def test_profile_pointwise(self):
        p = rho_low_profile()
        assert p(0.0) == 0.2
        assert p(0.5) == 0.5
        assert p(1.0) == 0.2

    def test_density_field_bounds_enforced(self, vm):
        grid = Grid1D.build(0.0, 1.0, 0.1, 0.01, 1.0)
        with pytest.raises(ValueError, match="violates"):
            DensityField(grid=grid, values=np.full(10, 1.5), time=0.0)
        with pytest.raises(ValueError, match="violates"):
            DensityField(grid=grid, values=np.full(10, -0.1), time=0.0)
        field = DensityField(grid=grid, values=np.full(10, 0.3), time=0.0)
        assert field.mass() == pytest.approx(0.3)
        with pytest.raises(ValueError):
            field.values[0] = 2.0  # frozen

    def test_velocity_model_validation(self):
        with pytest.raises(ValueError, match="non-increasing"):
            quadratic_velocity_model().__class__(
                v=lambda r: 1.0 + np.square(r), v_max=1.0, rho_max=1.0,
                lip_v=2.0)

    def test_cfl_dt_matches_formula(self, vm):
        w = discretize_kernel(concave_kernel(0.2), 1e-2)
        dt = cfl_dt(1e-2, w, vm, TAU)
        assert dt == pytest.approx(
            1e-2 / (w.gamma0 * 2.0 + 1.0 + 0.5), rel=1e-12)
