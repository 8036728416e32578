"""Grids, density fields, velocity models and discretized convolution kernels.

The transported quantity is a vehicle density rho in [0, rho_max] on a uniform
1D mesh. Its cell velocity is a kernel-weighted average of downstream cell
velocities,

    V_j = sum_{k=0}^{N_eta - 1} gamma_k * max(0, v(rho_{j+k+1}) + eps),

where gamma_k integrates a non-negative, non-increasing kernel over cell k of
its support [0, eta] and eps is a bounded velocity perturbation. All types
here are immutable after construction; the operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from ._backend import convolve_velocity

__all__ = [
    "Grid1D", "DensityField", "VelocityModel", "Kernel", "KernelWeights",
    "quadratic_velocity_model", "concave_kernel", "discretize_kernel",
    "nonlocal_velocity", "PiecewiseConstantProfile", "rho_low_profile",
    "rho_high_profile",
]

_INDEX_EPS = 1e-9  # guards floor/round index computations against FP dust


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid1D:
    """Uniform space-time mesh. Cell j covers [x_min + j dx, x_min + (j+1) dx]."""

    x_min: float
    x_max: float
    dx: float
    n_cells: int
    dt: float
    t_end: float

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")
        if self.n_cells < 1:
            raise ValueError("need at least one cell")
        span = self.x_max - self.x_min
        if abs(span - self.n_cells * self.dx) > 1e-8 * max(1.0, abs(span)):
            raise ValueError(
                f"n_cells={self.n_cells} inconsistent with extent "
                f"{span} and dx={self.dx}")

    @classmethod
    def build(cls, x_min, x_max, dx, dt, t_end):
        n = int(round((x_max - x_min) / dx))
        return cls(x_min=x_min, x_max=x_max, dx=dx, n_cells=n, dt=dt,
                   t_end=t_end)

    @property
    def lam(self):
        return self.dt / self.dx

    @property
    def n_steps(self):
        return int(np.floor(self.t_end / self.dt + _INDEX_EPS))

    def cell_centers(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def time_index(self, t):
        """Index of the grid time nearest to t (no temporal interpolation)."""
        n = int(round(t / self.dt))
        return min(max(n, 0), self.n_steps)


@dataclass(frozen=True)
class DensityField:
    """Cell-averaged density snapshot; values are bounds-checked and frozen."""

    grid: Grid1D
    values: np.ndarray
    time: float
    rho_max: float = 1.0

    def __post_init__(self):
        vals = _readonly(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n_cells,):
            raise ValueError("values length must equal grid.n_cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density contains non-finite entries")
        if vals.min() < 0.0 or vals.max() > self.rho_max:
            raise ValueError(
                f"density violates [0, {self.rho_max}]: "
                f"min={vals.min()}, max={vals.max()}")

    def mass(self):
        return float(np.sum(self.values)) * self.grid.dx

    def l1(self):
        return float(np.sum(np.abs(self.values))) * self.grid.dx

    def tv(self):
        return float(np.sum(np.abs(np.diff(self.values))))


@dataclass(frozen=True)
class VelocityModel:
    """Non-increasing base velocity v on [0, rho_max] with v(0) = v_max > 0.

    lip_v is an explicit bound on |v'|; the CFL bound and the stability
    constants rely on it, so it is carried rather than differenced.
    """

    v: Callable[[np.ndarray], np.ndarray]
    v_max: float
    rho_max: float
    lip_v: float

    def __post_init__(self):
        if self.v_max <= 0 or self.rho_max <= 0 or self.lip_v < 0:
            raise ValueError("v_max, rho_max must be positive, lip_v >= 0")
        probe = np.linspace(0.0, self.rho_max, 257)
        vp = np.asarray(self.v(probe), dtype=float)
        if abs(vp[0] - self.v_max) > 1e-12:
            raise ValueError("v(0) must equal v_max")
        if np.any(np.diff(vp) > 1e-12):
            raise ValueError("v must be non-increasing on [0, rho_max]")


def quadratic_velocity_model(rho_max=1.0):
    """Default model v(rho) = 1 - rho^2 with |v'| bounded by 2 rho_max."""
    return VelocityModel(v=lambda rho: 1.0 - np.square(rho), v_max=1.0,
                         rho_max=rho_max, lip_v=2.0 * rho_max)


@dataclass(frozen=True)
class Kernel:
    """Non-negative, non-increasing weight on [0, eta] with unit mass.

    cell_integral(a, b), when given, evaluates int_a^b w exactly and is used
    by discretize_kernel instead of adaptive quadrature.
    """

    eta: float
    w: Callable[[np.ndarray], np.ndarray]
    w_at_0: float
    lip_w: float
    cell_integral: Callable[[float, float], float] | None = None
    w0: float = field(init=False)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("look-ahead distance eta must be positive")
        mass, _ = quad(self.w, 0.0, self.eta, epsabs=1e-14, epsrel=1e-13,
                       limit=200)
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"kernel mass {mass} deviates from 1 by more "
                             "than 1e-12")
        probe = np.linspace(0.0, self.eta, 257)
        wp = np.asarray(self.w(probe), dtype=float)
        if wp.min() < -1e-14 or np.any(np.diff(wp) > 1e-12):
            raise ValueError("kernel must be non-negative and non-increasing")
        object.__setattr__(self, "w0", float(mass))


def concave_kernel(eta=0.2):
    """W(x) = 3/(2 eta^3) (eta^2 - x^2) on [0, eta]; W(0) = 3/(2 eta)."""
    c = 3.0 / (2.0 * eta ** 3)

    def w(x):
        return c * (eta ** 2 - np.square(x))

    def cell_integral(a, b):
        # antiderivative c (eta^2 x - x^3 / 3)
        return c * (eta ** 2 * (b - a) - (b ** 3 - a ** 3) / 3.0)

    return Kernel(eta=eta, w=w, w_at_0=c * eta ** 2, lip_w=c * 2.0 * eta,
                  cell_integral=cell_integral)


@dataclass(frozen=True)
class KernelWeights:
    """Cell integrals gamma_k of the kernel; the partial tail cell is dropped,
    so sum(gamma) < 1 slightly, which the scheme accepts unrenormalized."""

    gamma: np.ndarray
    n_eta: int
    dx: float
    eta: float

    def __post_init__(self):
        g = _readonly(self.gamma)
        object.__setattr__(self, "gamma", g)
        if g.shape != (self.n_eta,) or self.n_eta < 1:
            raise ValueError("gamma length must equal n_eta >= 1")
        if g.min() < 0.0:
            raise ValueError("kernel weights must be non-negative")
        if np.any(np.diff(g) > 1e-15):
            raise ValueError("kernel weights must be non-increasing")
        if g.sum() > 1.0 + 1e-10:
            raise ValueError("kernel weights exceed the kernel mass")

    @property
    def gamma0(self):
        return float(self.gamma[0])

    def total(self):
        return float(np.sum(self.gamma))


def discretize_kernel(kernel, dx):
    """gamma_k = int_{k dx}^{(k+1) dx} w for k < floor(eta / dx)."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    if dx > kernel.eta:
        raise ValueError(
            f"dx={dx} exceeds the look-ahead distance eta={kernel.eta}; "
            "the nonlocal window would be empty")
    n_eta = int(np.floor(kernel.eta / dx + _INDEX_EPS))
    if kernel.cell_integral is not None:
        gamma = np.array([kernel.cell_integral(k * dx, (k + 1) * dx)
                          for k in range(n_eta)])
    else:
        vals = []
        for k in range(n_eta):
            g, _ = quad(kernel.w, k * dx, (k + 1) * dx, epsabs=1e-15,
                        epsrel=1e-12, limit=200)
            vals.append(g)
        gamma = np.array(vals)
    # clip FP dust so the monotonicity invariant holds exactly
    gamma = np.maximum(gamma, 0.0)
    return KernelWeights(gamma=gamma, n_eta=n_eta, dx=dx, eta=kernel.eta)


def perturbed_cell_velocity(rho_values, eps_value, vm):
    """Cellwise max(0, v(rho) + eps)."""
    return np.maximum(0.0, np.asarray(vm.v(rho_values), dtype=np.float64)
                      + eps_value)


def nonlocal_velocity_full(vcell, weights):
    """Convolved velocities including the upstream ghost: out[j+1] is V_j,
    out[0] the inflow ghost velocity."""
    vcell = np.ascontiguousarray(vcell, dtype=np.float64)
    out = np.empty(vcell.shape[0] + 1)
    convolve_velocity(vcell, weights.gamma, out)
    return out


def nonlocal_velocity(rho, weights, eps_value, vm):
    """V_j = sum_k gamma_k max(0, v(rho_{j+k+1}) + eps) with constant
    extrapolation past the downstream boundary."""
    values = rho.values if isinstance(rho, DensityField) else np.asarray(rho)
    if abs(eps_value) > vm.v_max:
        raise ValueError("|eps_value| must not exceed v_max")
    vcell = perturbed_cell_velocity(values, eps_value, vm)
    return nonlocal_velocity_full(vcell, weights)[1:]


@dataclass(frozen=True)
class PiecewiseConstantProfile:
    """Piecewise-constant initial datum with constant tails.

    levels[i] holds on (edges[i-1], edges[i]); levels[0] and levels[-1] extend
    to -inf and +inf. Cell averages are exact (via the antiderivative).
    """

    edges: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        e = _readonly(self.edges)
        v = _readonly(self.levels)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "levels", v)
        if v.shape[0] != e.shape[0] + 1:
            raise ValueError("need len(levels) == len(edges) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")

    def __call__(self, x):
        idx = np.searchsorted(self.edges, x, side="right")
        return self.levels[idx]

    def cell_averages(self, grid):
        faces = grid.x_min + np.arange(grid.n_cells + 1) * grid.dx
        knots = np.concatenate([[faces[0] - 1.0], self.edges,
                                [faces[-1] + 1.0]])
        knots = np.clip(knots, faces[0] - 1.0, faces[-1] + 1.0)
        integral = np.concatenate(
            [[0.0], np.cumsum(self.levels * np.diff(knots))])
        prim = np.interp(faces, knots, integral)
        return np.diff(prim) / grid.dx


def rho_low_profile():
    """Light congestion: 0.5 on [1/3, 2/3], 0.2 elsewhere."""
    return PiecewiseConstantProfile(edges=np.array([1.0 / 3.0, 2.0 / 3.0]),
                                    levels=np.array([0.2, 0.5, 0.2]))


def rho_high_profile():
    """Heavy congestion: 0.9 on [0, 2], 0.2 elsewhere."""
    return PiecewiseConstantProfile(edges=np.array([0.0, 2.0]),
                                    levels=np.array([0.2, 0.9, 0.2]))
