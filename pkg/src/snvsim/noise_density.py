"""Propagation of the noise distribution on a Chebyshev grid and the
expected-velocity quadrature.

The distribution of the bounded diffusion is tracked on Chebyshev-Lobatto
nodes a_j in [-tau, tau] (clustered at the boundaries where the density
steepens) with midpoint cell widths as quadrature weights. One time step maps
the density through conditionally Gaussian proposals

    mu_i = a_i (1 - alpha dt),   var_i = sigma^2 (tau^2 - a_i^2) dt,

renormalized per source node so the mass rejected outside [-tau, tau] is
redistributed inside, mirroring the acceptance-rejection sampler. The
expected velocity is then the quadrature

    vbar(rho) = sum_j max(0, v(rho) + a_j) f_j w_j,

with a closed form replacing the quadrature for uniform white noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .noise import NoiseKind, _INDEX_EPS

__all__ = [
    "NoiseDensityGrid", "build_chebyshev_grid", "make_density_grid",
    "init_density", "propagate_density", "JacobiDensityEvolution",
    "expected_velocity", "expected_velocity_whitenoise_closed_form",
    "WhiteNoiseExpectedVelocity", "JacobiExpectedVelocity",
    "SequenceExpectedVelocity", "density_bin_masses",
]

MASS_TOL = 1e-10


@dataclass(frozen=True)
class NoiseDensityGrid:
    """Discrete density f_j >= 0 on nodes a_j with sum f_j w_j = 1."""

    tau: float
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        for name in ("nodes", "weights", "density"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.nodes.shape == self.weights.shape == self.density.shape):
            raise ValueError("nodes, weights and density must share a shape")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.nodes[0] < -self.tau or self.nodes[-1] > self.tau:
            raise ValueError("nodes must lie in [-tau, tau]")
        if self.weights.min() <= 0:
            raise ValueError("quadrature weights must be positive")
        if self.density.min() < 0:
            raise ValueError("density must be non-negative")
        if abs(self.mass() - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {self.mass()} deviates from 1")

    def mass(self):
        return float(np.sum(self.density * self.weights))

    def moment(self, p):
        return float(np.sum(self.nodes ** p * self.density * self.weights))

    def with_density(self, density, time_index):
        return NoiseDensityGrid(tau=self.tau, nodes=self.nodes,
                                weights=self.weights, density=density,
                                time_index=time_index)


def build_chebyshev_grid(tau, m):
    """Chebyshev-Lobatto nodes a_j = -tau cos(pi j / (m-1)) with midpoint
    cell widths (half cells at the ends). m must be odd so that a node sits
    exactly at 0, where the initial point mass lives."""
    if m < 3:
        raise ValueError("need at least 3 nodes")
    if m % 2 == 0:
        raise ValueError("m must be odd so that 0 is a node")
    j = np.arange(m)
    nodes = -tau * np.cos(np.pi * j / (m - 1))
    # enforce exact antisymmetry: midpoint node exactly 0, ends exactly +-tau
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = np.empty(m)
    weights[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    weights[0] = 0.5 * (nodes[1] - nodes[0])
    weights[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return nodes, weights


def init_density(grid):
    """Point mass at the zero node: f = 1/w there, 0 elsewhere."""
    j0 = int(np.flatnonzero(grid.nodes == 0.0)[0])
    density = np.zeros_like(grid.nodes)
    density[j0] = 1.0 / grid.weights[j0]
    return grid.with_density(density, time_index=0)


def make_density_grid(tau, m=601):
    nodes, weights = build_chebyshev_grid(tau, m)
    j0 = int(np.flatnonzero(nodes == 0.0)[0])
    density = np.zeros(m)
    density[j0] = 1.0 / weights[j0]
    return NoiseDensityGrid(tau=tau, nodes=nodes, weights=weights,
                            density=density, time_index=0)


@lru_cache(maxsize=16)
def _transition_matrix(tau, alpha, sigma, dt, m):
    """Column i maps source node a_i to targets: P[j, i] already carries the
    source weight w_i, so one step is f_{n+1} = P @ f_n."""
    nodes, weights = build_chebyshev_grid(tau, m)
    mu = nodes * (1.0 - alpha * dt)
    var = sigma ** 2 * (tau ** 2 - np.square(nodes)) * dt
    p = np.zeros((m, m))
    interior = var > 0.0
    vi = var[interior]
    diff = nodes[:, None] - mu[None, interior]
    phi = np.exp(-0.5 * np.square(diff) / vi[None, :])
    phi /= np.sqrt(2.0 * np.pi * vi)[None, :]
    z = weights @ phi
    p[:, interior] = phi / z[None, :] * weights[interior][None, :]
    # degenerate boundary sources (var = 0): point mass to the node nearest mu
    for i in np.flatnonzero(~interior):
        j = int(np.argmin(np.abs(nodes - mu[i])))
        p[j, i] = weights[i] / weights[j]
    return nodes, weights, p


def propagate_density(grid, params, dt):
    """One forward step of the discrete density recursion (mass preserving)."""
    if params.kind != NoiseKind.JACOBI:
        raise ValueError("density propagation is defined for Jacobi noise")
    nodes, _, p = _transition_matrix(grid.tau, params.alpha, params.sigma,
                                     float(dt), grid.nodes.shape[0])
    if not np.array_equal(nodes, grid.nodes):
        raise ValueError("grid nodes do not match the Chebyshev construction")
    density = p @ grid.density
    return grid.with_density(density, time_index=grid.time_index + 1)


class JacobiDensityEvolution:
    """Lazily advanced density recursion with random access by step index."""

    def __init__(self, params, delta_r, m=601):
        if params.kind != NoiseKind.JACOBI:
            raise ValueError("Jacobi parameters required")
        self.params = params
        self.delta_r = float(delta_r)
        self.m = int(m)
        self._grid0 = make_density_grid(params.tau, m)
        self._densities = [self._grid0.density]
        _, _, self._p = _transition_matrix(params.tau, params.alpha,
                                           params.sigma, self.delta_r, self.m)

    def density_at(self, k):
        while len(self._densities) <= k:
            self._densities.append(self._p @ self._densities[-1])
        return self._grid0.with_density(self._densities[k], time_index=k)

    def index_at(self, t):
        return int(np.floor(t / self.delta_r + _INDEX_EPS))


def expected_velocity(grid, rho, vm):
    """Quadrature sum_j max(0, v(rho) + a_j) f_j w_j."""
    rho_arr = np.asarray(rho, dtype=np.float64)
    v = np.asarray(vm.v(rho_arr), dtype=np.float64)
    fw = grid.density * grid.weights
    clipped = np.maximum(0.0, v[..., None] + grid.nodes)
    out = clipped @ fw
    return float(out) if np.isscalar(rho) or rho_arr.ndim == 0 else out


def expected_velocity_whitenoise_closed_form(rho, tau, vm):
    """Mean of max(0, v(rho) + U), U uniform on (-tau, tau):

        (1/(4 tau)) ((tau + v)^2 - max(0, v - tau)^2),

    evaluated piecewise so that the clipping-inactive branch returns v(rho)
    exactly (both branches are algebraically identical there)."""
    v = np.asarray(vm.v(np.asarray(rho, dtype=np.float64)), dtype=np.float64)
    active = np.square(tau + v) / (4.0 * tau)
    out = np.where(v >= tau, v, active)
    return float(out) if out.ndim == 0 else out


class WhiteNoiseExpectedVelocity:
    """Time-independent closed-form vbar for the EsNV flux."""

    kind = "white"

    def __init__(self, tau):
        self.tau = float(tau)

    def bind(self, grid, vm):
        self._vm = vm
        return self

    def vbar_cells(self, n, rho_values):
        return expected_velocity_whitenoise_closed_form(rho_values, self.tau,
                                                        self._vm)

    def describe(self):
        return {"kind": "white", "tau": self.tau}


class JacobiExpectedVelocity:
    """Per-step vbar from the propagated density, tabulated on a fine rho
    grid and linearly interpolated (avoids an O(m) quadrature per cell)."""

    kind = "jacobi"

    def __init__(self, params, delta_r=None, m=601, table_size=2048):
        self.params = params
        self.delta_r = delta_r
        self.m = int(m)
        self.table_size = int(table_size)

    def bind(self, grid, vm):
        delta_r = self.delta_r if self.delta_r is not None else grid.dt
        self._solver_dt = grid.dt
        self._evolution = JacobiDensityEvolution(
            self.params.with_delta_r(delta_r), delta_r, self.m)
        self._rho_grid = np.linspace(0.0, vm.rho_max, self.table_size)
        nodes = self._evolution._grid0.nodes
        v = np.asarray(vm.v(self._rho_grid), dtype=np.float64)
        self._clip = np.maximum(0.0, v[:, None] + nodes[None, :])
        self._cache = (-1, None)
        return self

    def vbar_cells(self, n, rho_values):
        k = self._evolution.index_at(n * self._solver_dt)
        if self._cache[0] != k:
            grid = self._evolution.density_at(k)
            table = self._clip @ (grid.density * grid.weights)
            self._cache = (k, table)
        return np.interp(rho_values, self._rho_grid, self._cache[1])

    def describe(self):
        return {"kind": "jacobi", "tau": self.params.tau,
                "alpha": self.params.alpha, "sigma": self.params.sigma,
                "delta_r": self._evolution.delta_r, "m_nodes": self.m,
                "vbar_table_size": self.table_size}


class SequenceExpectedVelocity:
    """vbar from an explicit per-step sequence of density snapshots."""

    kind = "sequence"

    def __init__(self, grids, table_size=2048):
        self.grids = list(grids)
        if not self.grids:
            raise ValueError("need at least one density snapshot")
        self.table_size = int(table_size)
        self.tau = float(self.grids[0].tau)

    def bind(self, grid, vm):
        self._vm = vm
        self._rho_grid = np.linspace(0.0, vm.rho_max, self.table_size)
        return self

    def vbar_cells(self, n, rho_values):
        if n >= len(self.grids):
            raise ValueError(f"no density snapshot for step {n}")
        table = expected_velocity(self.grids[n], self._rho_grid, self._vm)
        return np.interp(rho_values, self._rho_grid, table)

    def describe(self):
        return {"kind": "sequence", "n_snapshots": len(self.grids),
                "vbar_table_size": self.table_size}


def density_bin_masses(grid, edges):
    """Exact masses of the piecewise-constant density over [edges] bins.

    The density is f_j on the quadrature cell of node j: half cells
    [a_0, (a_0 + a_1)/2] and [(a_{M-2} + a_{M-1})/2, a_{M-1}] at the ends,
    midpoint intervals in between, with widths equal to the w_j."""
    faces = np.empty(grid.nodes.shape[0] + 1)
    faces[0] = grid.nodes[0]
    faces[1:-1] = 0.5 * (grid.nodes[1:] + grid.nodes[:-1])
    faces[-1] = grid.nodes[-1]
    cum = np.concatenate([[0.0], np.cumsum(grid.density * np.diff(faces))])
    at_edges = np.interp(edges, faces, cum)
    return np.diff(at_edges)
