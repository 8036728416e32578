"""Characteristic tracing and the Monte Carlo bias study in path space.

Particles follow dX/dt = V(t, X) through the solver's velocity fields via
explicit Euler steps at the solver time step, with V interpolated linearly
between cell centers and held piecewise constant in time over [t^n, t^{n+1}).
Averaging realized paths (rather than densities) sidesteps the shock smearing
of plain density averaging, and the distance between the averaged path and
the deterministic mean-model path is the scalar bias studied here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid1D
from .godunov import solve_esnv, solve_snv
from .noise import sample_jacobi
from .noise_density import JacobiExpectedVelocity

__all__ = [
    "CharacteristicPath", "trace_characteristic", "trace_characteristics",
    "mc_characteristic_average", "l1_bias", "BiasStudyConfig",
    "BiasStudyResult", "bias_study", "bias_aggregate",
    "paired_bootstrap_bias",
]


@dataclass(frozen=True)
class CharacteristicPath:
    """Traced particle path; positions are non-decreasing since V >= 0."""

    t0: float
    x0: float
    times: np.ndarray
    positions: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        x = np.ascontiguousarray(self.positions, dtype=np.float64)
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)
        if t.shape != x.shape:
            raise ValueError("times and positions must match")

    def at(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a recorded stamp")
        return float(self.positions[idx])


def trace_characteristics(result, t0, x0s):
    """Trace several particles through one solve; a path leaving the domain
    is terminated there and flagged as truncated."""
    grid = result.grid
    history = result.ensure_velocity_history()
    n0 = grid.time_index(t0)
    xs = np.asarray(x0s, dtype=np.float64).copy()
    if np.any(xs < grid.x_min) or np.any(xs > grid.x_max):
        raise ValueError("start positions must lie inside the grid")
    xc = grid.cell_centers()
    n_stamps = grid.n_steps - n0 + 1
    pos = np.full((n_stamps, xs.shape[0]), np.nan)
    pos[0] = xs
    alive = np.ones(xs.shape[0], dtype=bool)
    for i, n in enumerate(range(n0, grid.n_steps)):
        v = np.interp(xs, xc, history[n])
        xs = xs + grid.dt * v
        exited = xs > grid.x_max
        alive &= ~exited
        pos[i + 1, alive] = xs[alive]
        if not alive.any():
            break
    times = grid.times()[n0:]
    paths = []
    for p in range(xs.shape[0]):
        col = pos[:, p]
        valid = ~np.isnan(col)
        last = int(np.max(np.flatnonzero(valid))) + 1
        paths.append(CharacteristicPath(
            t0=float(times[0]), x0=float(pos[0, p]), times=times[:last],
            positions=col[:last], truncated=last < n_stamps))
    return paths


def trace_characteristic(result, t0, x0):
    return trace_characteristics(result, t0, [x0])[0]


def mc_characteristic_average(paths):
    """Pointwise mean path over realizations sharing (t0, x0) and stamps."""
    if not paths:
        raise ValueError("need at least one path")
    first = paths[0]
    for p in paths[1:]:
        if p.t0 != first.t0 or p.x0 != first.x0:
            raise ValueError("paths must share their start point")
        if not np.array_equal(p.times, first.times):
            raise ValueError("paths must share their time stamps")
        if p.truncated or first.truncated:
            raise ValueError("cannot average truncated paths")
    stack = np.stack([p.positions for p in paths])
    return CharacteristicPath(t0=first.t0, x0=first.x0, times=first.times,
                              positions=stack.mean(axis=0))


def l1_bias(avg, esnv_path, t_eval):
    """|averaged position - mean-model position| at a shared stamp."""
    if avg.t0 != esnv_path.t0 or avg.x0 != esnv_path.x0:
        raise ValueError("paths must share their start point")
    return abs(avg.at(t_eval) - esnv_path.at(t_eval))


@dataclass(frozen=True)
class BiasStudyConfig:
    """Full (M, dt) bias study for one look-ahead distance.

    Realizations are reused across the nested m_values (the batch for a
    smaller M is a prefix of the larger one) and across dt levels (noise is
    sampled once per realization on the finest grid and subsampled), so the
    observed trends are paired rather than independently noisy.
    """

    rho0_values: np.ndarray
    x_min: float
    x_max: float
    dx: float
    t_end: float
    weights: object
    vm: object
    noise_params: object
    m_values: tuple
    dt_values: tuple
    x0s: tuple
    t0: float = 0.0
    master_seed: int = 0
    density_nodes: int = 601


@dataclass
class BiasStudyResult:
    m_values: tuple
    dt_values: tuple
    start_points: tuple
    t_eval: float
    bias: np.ndarray              # (n_m, n_dt, n_points)
    terminals: np.ndarray         # (m_max, n_dt, n_points)
    esnv_terminals: np.ndarray    # (n_dt, n_points)
    meta: dict = field(default_factory=dict)


def bias_study(config):
    """Run the (M, dt) grid and collect terminal path positions.

    The bias entry for (M, dt, x0) is |mean_{k<M} X^(k)(T) - X_esnv(T)|.
    """
    m_values = tuple(sorted(config.m_values))
    dt_values = tuple(sorted(config.dt_values, reverse=True))
    m_max = m_values[-1]
    delta_r = min(dt_values)
    r_t = int(np.floor(config.t_end / delta_r + 1e-9))
    params = config.noise_params.with_delta_r(delta_r)
    x0s = np.asarray(config.x0s, dtype=np.float64)
    t_eval = None

    terminals = np.empty((m_max, len(dt_values), x0s.shape[0]))
    esnv_terminals = np.empty((len(dt_values), x0s.shape[0]))

    grids = [Grid1D.build(config.x_min, config.x_max, config.dx, dt,
                          config.t_end) for dt in dt_values]
    for j, grid in enumerate(grids):
        t_end_j = grid.n_steps * grid.dt
        t_eval = t_end_j if t_eval is None else min(t_eval, t_end_j)

    for j, grid in enumerate(grids):
        # the mean model propagates its noise density at the solver step;
        # the weak error of that recursion is part of the dt-dependence
        # under study, so it must not be hidden by a finer density grid
        ev = JacobiExpectedVelocity(params, delta_r=None,
                                    m=config.density_nodes)
        esnv = solve_esnv(config.rho0_values, ev, config.weights, config.vm,
                          grid, tau=params.tau, output_times=[],
                          record_velocity=True)
        epaths = trace_characteristics(esnv, config.t0, x0s)
        esnv_terminals[j] = [p.at(t_eval) for p in epaths]
        for k in range(m_max):
            noise = sample_jacobi(params, r_t, config.master_seed, stream=k)
            run = solve_snv(config.rho0_values, noise, config.weights,
                            config.vm, grid, tau=params.tau, output_times=[],
                            record_velocity=True)
            paths = trace_characteristics(run, config.t0, x0s)
            if any(p.truncated for p in paths):
                raise RuntimeError("a characteristic left the domain; "
                                   "enlarge [x_min, x_max]")
            terminals[k, j] = [p.at(t_eval) for p in paths]

    bias = np.empty((len(m_values), len(dt_values), x0s.shape[0]))
    for i, m in enumerate(m_values):
        bias[i] = np.abs(terminals[:m].mean(axis=0) - esnv_terminals)

    return BiasStudyResult(
        m_values=m_values, dt_values=dt_values,
        start_points=tuple(float(x) for x in x0s), t_eval=float(t_eval),
        bias=bias, terminals=terminals, esnv_terminals=esnv_terminals,
        meta={"master_seed": config.master_seed, "delta_r": delta_r,
              "eta": config.weights.eta, "dx": config.dx})


def bias_aggregate(result):
    """Bias averaged over start points, shape (n_m, n_dt)."""
    return result.bias.mean(axis=2)


def paired_bootstrap_bias(terminals, esnv_terminals, m_values, n_boot=2000,
                          seed=0):
    """Bootstrap the aggregated bias across realization resamples.

    terminals: (m_max, n_points) at one dt level. Each resample draws m_max
    realization indices with replacement; nested prefixes keep the M values
    paired within a resample. Returns (point_estimates, samples) where
    samples has shape (n_boot, n_m).
    """
    m_max = terminals.shape[0]
    m_values = tuple(sorted(m_values))
    gen = np.random.default_rng(seed)
    est = np.array([np.mean(np.abs(terminals[:m].mean(axis=0)
                                   - esnv_terminals)) for m in m_values])
    samples = np.empty((n_boot, len(m_values)))
    for b in range(n_boot):
        idx = gen.integers(0, m_max, size=m_max)
        res = terminals[idx]
        for i, m in enumerate(m_values):
            samples[b, i] = np.mean(np.abs(res[:m].mean(axis=0)
                                           - esnv_terminals))
    return est, samples


def paired_bootstrap_bias_dt(terminals, esnv_terminals, m, n_boot=2000,
                             seed=0):
    """Bootstrap the aggregated bias jointly over dt levels at fixed M.

    terminals: (m_max, n_dt, n_points); the same realization resample is
    applied to every level (the levels share their noise realizations), so
    level differences are compared at their paired resolution. Returns
    (point_estimates, samples) with samples of shape (n_boot, n_dt).
    """
    gen = np.random.default_rng(seed)
    est = np.mean(np.abs(terminals[:m].mean(axis=0) - esnv_terminals),
                  axis=1)
    n_dt = terminals.shape[1]
    samples = np.empty((n_boot, n_dt))
    for b in range(n_boot):
        idx = gen.integers(0, m, size=m)
        samples[b] = np.mean(np.abs(terminals[idx].mean(axis=0)
                                    - esnv_terminals), axis=1)
    return est, samples
