"""First-order upwind finite-volume solvers for the nonlocal velocity models.

One step of every scheme is

    rho_j^{n+1} = rho_j^n - lam (rho_j^n V_j^n - rho_{j-1}^n V_{j-1}^n),

with lam = dt/dx and V_j^n the discretized nonlocal velocity of cell j. The
schemes differ only in the cellwise speed fed to the convolution:

  * sNV:  max(0, v(rho) + eps^n) with eps^n read off a sampled noise path,
  * NV:   the same with eps identically zero,
  * EsNV: the expected velocity vbar(rho, t^n) under the noise distribution.

The time step is validated once against the deterministic CFL bound

    lam <= 1 / (gamma_0 |v'| rho_max + v_max + tau),

which is noise-independent, so ensembles share their time stamps. The domain
is truncated with constant-extrapolation ghost cells on both sides; this is
exact while the initial data stay constant near the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import BACKEND, convolve_velocity, step_upwind
from .core import DensityField, perturbed_cell_velocity
from .noise import evaluate_noise
from .noise_density import (JacobiExpectedVelocity, SequenceExpectedVelocity,
                            WhiteNoiseExpectedVelocity)

__all__ = [
    "CflError", "CflBound", "MassLedger", "SolveResult", "step_snv",
    "solve_snv", "solve_nv", "solve_esnv", "local_solution_operator",
]


class CflError(ValueError):
    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


@dataclass(frozen=True)
class CflBound:
    """Deterministic bound c_det = 1/(gamma_0 |v'| rho_max + v_max + tau)."""

    c_det: float
    lam: float

    @classmethod
    def for_problem(cls, grid, weights, vm, tau):
        c_det = 1.0 / (weights.gamma0 * vm.lip_v * vm.rho_max + vm.v_max
                       + tau)
        return cls(c_det=c_det, lam=grid.lam)

    @property
    def satisfied(self):
        return self.lam <= self.c_det * (1.0 + 1e-12)

    def require(self, dx):
        if not self.satisfied:
            raise CflError(
                f"lambda = dt/dx = {self.lam:.6g} exceeds the CFL bound "
                f"{self.c_det:.6g}; admissible dt <= {self.c_det * dx:.6g}",
                admissible_dt=self.c_det * dx)


@dataclass
class MassLedger:
    """Per-step boundary fluxes and total mass (mass[n] at time n dt)."""

    mass: np.ndarray
    f_in: np.ndarray
    f_out: np.ndarray

    def residuals(self, dt):
        """mass(t^{n+1}) - mass(t^n) - dt (F_in - F_out), per step."""
        return np.diff(self.mass) - dt * (self.f_in - self.f_out)


@dataclass
class SolveResult:
    model: str
    grid: object
    snapshots: list
    noise: object | None
    mass_ledger: MassLedger
    sup_l1: float
    sup_bv: float
    min_value: float
    max_value: float
    cfl: CflBound
    weights: object
    vm: object
    velocity_history: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def snapshot_at(self, t):
        idx = self.grid.time_index(t)
        for snap in self.snapshots:
            if self.grid.time_index(snap.time) == idx:
                return snap
        raise KeyError(f"no snapshot recorded at t={t}")

    def ensure_velocity_history(self):
        """Velocity fields per step, recomputing the run if not recorded."""
        if self.velocity_history is None:
            replay = self.meta.get("replay")
            if replay is None:
                raise ValueError("velocity history unavailable and the run "
                                 "cannot be replayed")
            self.velocity_history = replay().velocity_history
        return self.velocity_history


def _snap_indices(grid, output_times):
    if output_times is None:
        return sorted({0, grid.n_steps})
    return sorted({grid.time_index(t) for t in output_times})


def _evolve(rho0_values, grid, weights, vm, vel_fn, output_times,
            record_velocity, model, noise=None, n_steps=None, meta=None):
    """Shared time loop; vel_fn(n, rho) -> cellwise speeds at step n."""
    rho = np.array(rho0_values, dtype=np.float64)
    if rho.shape != (grid.n_cells,):
        raise ValueError("initial data length must equal grid.n_cells")
    n = grid.n_cells
    n_steps = grid.n_steps if n_steps is None else n_steps
    lam = grid.lam
    dx = grid.dx

    out = np.empty_like(rho)
    vfull = np.empty(n + 1)
    mass = np.empty(n_steps + 1)
    f_in = np.empty(n_steps)
    f_out = np.empty(n_steps)
    history = np.empty((n_steps, n)) if record_velocity else None

    snap_at = _snap_indices(grid, output_times)
    snapshots = []
    if snap_at and snap_at[0] == 0:
        snapshots.append(DensityField(grid=grid, values=rho.copy(), time=0.0,
                                      rho_max=vm.rho_max))
    mass[0] = float(np.sum(rho)) * dx
    sup_l1 = mass[0]
    sup_bv = float(np.sum(np.abs(np.diff(rho))))
    mn = float(rho.min())
    mx = float(rho.max())

    for step in range(n_steps):
        vc = np.ascontiguousarray(vel_fn(step, rho), dtype=np.float64)
        convolve_velocity(vc, weights.gamma, vfull)
        if record_velocity:
            history[step] = vfull[1:]
        f_in[step], f_out[step], total, bv, lo, hi = step_upwind(
            rho, vfull, lam, out)
        rho, out = out, rho
        mass[step + 1] = total * dx
        sup_l1 = max(sup_l1, mass[step + 1])
        sup_bv = max(sup_bv, bv)
        mn = min(mn, lo)
        mx = max(mx, hi)
        if (step + 1) in snap_at:
            snapshots.append(DensityField(grid=grid, values=rho.copy(),
                                          time=(step + 1) * grid.dt,
                                          rho_max=vm.rho_max))

    if mn < 0.0 or mx > vm.rho_max:
        raise RuntimeError(
            f"maximum principle violated: range [{mn}, {mx}] outside "
            f"[0, {vm.rho_max}]")
    cfl = CflBound.for_problem(grid, weights, vm,
                               (meta or {}).get("tau", 0.0))
    return SolveResult(model=model, grid=grid, snapshots=snapshots,
                       noise=noise,
                       mass_ledger=MassLedger(mass=mass, f_in=f_in,
                                              f_out=f_out),
                       sup_l1=sup_l1, sup_bv=sup_bv, min_value=mn,
                       max_value=mx, cfl=cfl, weights=weights, vm=vm,
                       velocity_history=history, meta=dict(meta or {}))


def _initial_values(rho0, grid):
    if isinstance(rho0, DensityField):
        if rho0.grid.n_cells != grid.n_cells:
            raise ValueError("initial field does not match the grid")
        return rho0.values
    return np.asarray(rho0, dtype=np.float64)


def _eps_per_step(noise, grid, n_steps):
    needed = (n_steps - 1) * grid.dt
    if noise.t_max < needed * (1.0 - 1e-12):
        raise ValueError(
            f"noise path covers [0, {noise.t_max}] but the run needs "
            f"eps(t) up to t={needed}")
    return np.array([evaluate_noise(noise, step * grid.dt)
                     for step in range(n_steps)])


def step_snv(rho, weights, eps_n, vm, lam):
    """One stochastic upwind step on a density snapshot."""
    c_det = 1.0 / (weights.gamma0 * vm.lip_v * vm.rho_max + vm.v_max
                   + abs(eps_n))
    if lam > c_det * (1.0 + 1e-12):
        raise CflError(f"lambda {lam} exceeds the CFL bound {c_det}",
                       admissible_dt=c_det * rho.grid.dx)
    vc = perturbed_cell_velocity(rho.values, eps_n, vm)
    vfull = np.empty(rho.values.shape[0] + 1)
    convolve_velocity(vc, weights.gamma, vfull)
    out = np.empty(rho.values.shape[0])
    step_upwind(rho.values, vfull, lam, out)
    return DensityField(grid=rho.grid, values=out,
                        time=rho.time + lam * rho.grid.dx,
                        rho_max=vm.rho_max)


def solve_snv(rho0, noise, weights, vm, grid, tau=None, output_times=None,
              record_velocity=False):
    """Evolve the stochastic model along one sampled noise path."""
    tau = float(np.max(np.abs(noise.values))) if tau is None else tau
    CflBound.for_problem(grid, weights, vm, tau).require(grid.dx)
    rho0_values = _initial_values(rho0, grid)
    eps = _eps_per_step(noise, grid, grid.n_steps)
    if np.max(np.abs(eps)) > vm.v_max:
        raise ValueError("noise exceeds v_max; assumption tau <= v_max broken")

    def vel(step, rho):
        return np.maximum(0.0, vm.v(rho) + eps[step])

    meta = {"tau": tau, "seed": getattr(noise, "seed", None),
            "backend": BACKEND,
            "replay": lambda: solve_snv(rho0_values, noise, weights, vm, grid,
                                        tau=tau, output_times=output_times,
                                        record_velocity=True)}
    return _evolve(rho0_values, grid, weights, vm, vel, output_times,
                   record_velocity, model="snv", noise=noise, meta=meta)


def solve_nv(rho0, weights, vm, grid, output_times=None,
             record_velocity=False):
    """Deterministic evolution; identical code path to solve_snv with a
    zero noise path, hence bit-identical results."""
    rho0_values = _initial_values(rho0, grid)
    CflBound.for_problem(grid, weights, vm, 0.0).require(grid.dx)
    zero = 0.0

    def vel(step, rho):
        return np.maximum(0.0, vm.v(rho) + zero)

    meta = {"tau": 0.0, "backend": BACKEND,
            "replay": lambda: solve_nv(rho0_values, weights, vm, grid,
                                       output_times=output_times,
                                       record_velocity=True)}
    return _evolve(rho0_values, grid, weights, vm, vel, output_times,
                   record_velocity, model="nv", meta=meta)


def _as_expected_velocity(density_evolution, tau):
    if isinstance(density_evolution, (WhiteNoiseExpectedVelocity,
                                      JacobiExpectedVelocity,
                                      SequenceExpectedVelocity)):
        return density_evolution
    if isinstance(density_evolution, str):
        if density_evolution == "white":
            if tau is None:
                raise ValueError("closed-form white noise needs tau")
            return WhiteNoiseExpectedVelocity(tau)
        raise ValueError(f"unknown expected-velocity tag "
                         f"{density_evolution!r}")
    return SequenceExpectedVelocity(density_evolution)


def solve_esnv(rho0, density_evolution, weights, vm, grid, tau=None,
               output_times=None, record_velocity=False):
    """Deterministic mean-value proxy: the stochastic speed is replaced by
    the expected velocity under the propagated noise distribution.

    density_evolution may be the tag "white" (closed form, needs tau), a
    WhiteNoise/Jacobi expected-velocity object, or an explicit sequence of
    per-step NoiseDensityGrid snapshots.
    """
    ev = _as_expected_velocity(density_evolution, tau)
    if tau is None:
        tau = getattr(ev, "tau", None)
        if tau is None:
            tau = getattr(getattr(ev, "params", None), "tau", 0.0)
    CflBound.for_problem(grid, weights, vm, tau).require(grid.dx)
    rho0_values = _initial_values(rho0, grid)
    ev = ev.bind(grid, vm)

    def vel(step, rho):
        return ev.vbar_cells(step, rho)

    meta = {"tau": tau, "expected_velocity": ev.describe(),
            "backend": BACKEND,
            "replay": lambda: solve_esnv(rho0_values, ev, weights, vm, grid,
                                         tau=tau, output_times=output_times,
                                         record_velocity=True)}
    return _evolve(rho0_values, grid, weights, vm, vel, output_times,
                   record_velocity, model="esnv", meta=meta)


def local_solution_operator(xi0, a, t, weights, vm, grid, output_times=None,
                            record_velocity=False):
    """Evolution under a frozen noise value a for a duration t (a multiple
    of grid.dt); this is the building block the piecewise-constant noise
    model composes between its switching times."""
    if abs(a) > vm.v_max:
        raise ValueError("|a| must not exceed v_max")
    n_steps = int(round(t / grid.dt))
    if abs(n_steps * grid.dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"duration {t} is not a multiple of dt={grid.dt}")
    CflBound.for_problem(grid, weights, vm, abs(a)).require(grid.dx)
    rho0_values = _initial_values(xi0, grid)
    start = xi0.time if isinstance(xi0, DensityField) else 0.0

    def vel(step, rho):
        return np.maximum(0.0, vm.v(rho) + a)

    result = _evolve(rho0_values, grid, weights, vm, vel,
                     output_times if output_times is not None else [t],
                     record_velocity, model="snv", n_steps=n_steps,
                     meta={"tau": abs(a), "constant_noise": a})
    final = result.snapshots[-1]
    return DensityField(grid=grid, values=final.values, time=start + t,
                        rho_max=vm.rho_max)
