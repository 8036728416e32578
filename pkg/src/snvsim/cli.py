"""Batch experiment runner: declarative configs in, CSV + manifests out.

Every run is fully determined by (effective config, master seed); the merged
config is written into the manifest so any artifact can be regenerated from
it. Flags override config-file values, which override the built-in desk-scale
defaults (dx=1e-2, M=200, T=1).
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from ._backend import BACKEND
from . import io as sio
from .analysis import check_stability, ensemble_stats
from .characteristics import (BiasStudyConfig, bias_study,
                              mc_characteristic_average,
                              trace_characteristics)
from .core import (Grid1D, concave_kernel, discretize_kernel,
                   quadratic_velocity_model, rho_high_profile,
                   rho_low_profile)
from .godunov import CflError, solve_esnv, solve_nv, solve_snv
from .montecarlo import McBatchSpec, batch_fields_at, run_batch
from .noise import (NoiseKind, NoiseParams, constant_path, piecewise_path,
                    sample_jacobi, sample_white_noise)
from .noise_density import (JacobiDensityEvolution, JacobiExpectedVelocity,
                            WhiteNoiseExpectedVelocity)

_DOMAIN_DEFAULTS = {"rho_low": (-0.5, 2.5), "rho_high": (-1.0, 6.0)}


@dataclass
class ExperimentConfig:
    model: str = "nv"
    initial: str = "rho_low"
    eta: float = 0.2
    tau: float = 0.5
    noise: str = "white"
    alpha: float = 4.0
    sigma: float = 1.0
    delta_r: float | None = None
    dx: float = 1e-2
    dt: float | None = None
    x_min: float | None = None
    x_max: float | None = None
    t_end: float = 1.0
    times: tuple = ()
    m: int = 200
    m_nodes: int = 601
    table_size: int = 2048
    realization: int = 0

    @classmethod
    def merged(cls, file_values, overrides):
        cfg = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        for source in (file_values, overrides):
            for key, value in source.items():
                if value is None:
                    continue
                if key not in known:
                    raise ValueError(f"unknown config key {key!r}")
                setattr(cfg, key, tuple(value) if key == "times" else value)
        return cfg

    def effective(self):
        d = dataclasses.asdict(self)
        d["times"] = list(self.times)
        return d


class Problem:
    """Everything derived from a config: grid, kernel weights, model."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.vm = quadratic_velocity_model()
        self.kernel = concave_kernel(cfg.eta)
        self.weights = discretize_kernel(self.kernel, cfg.dx)
        if cfg.initial == "rho_low":
            profile = rho_low_profile()
        elif cfg.initial == "rho_high":
            profile = rho_high_profile()
        else:
            profile = None
        x_min, x_max = _DOMAIN_DEFAULTS.get(cfg.initial, (-1.0, 4.0))
        x_min = cfg.x_min if cfg.x_min is not None else x_min
        x_max = cfg.x_max if cfg.x_max is not None else x_max
        c_det = 1.0 / (self.weights.gamma0 * self.vm.lip_v * self.vm.rho_max
                       + self.vm.v_max + cfg.tau)
        self.c_det = c_det
        dt = cfg.dt if cfg.dt is not None else c_det * cfg.dx
        self.grid = Grid1D.build(x_min, x_max, cfg.dx, dt, cfg.t_end)
        if self.grid.lam > c_det * (1.0 + 1e-12):
            raise CflError(
                f"dt={dt} violates the CFL bound; admissible dt <= "
                f"{c_det * cfg.dx:.9g}", admissible_dt=c_det * cfg.dx)
        if profile is not None:
            self.rho0 = profile.cell_averages(self.grid)
        else:
            self.rho0 = _initial_from_file(cfg.initial, self.grid)
        self.noise_params = NoiseParams(
            tau=cfg.tau,
            kind=NoiseKind(cfg.noise),
            alpha=cfg.alpha if cfg.noise == "jacobi" else None,
            sigma=cfg.sigma if cfg.noise == "jacobi" else None,
            delta_r=cfg.delta_r if cfg.delta_r is not None else dt)
        self.output_times = cfg.times if cfg.times else (cfg.t_end,)

    def expected_velocity(self):
        if self.noise_params.kind == NoiseKind.WHITE:
            return WhiteNoiseExpectedVelocity(self.cfg.tau)
        return JacobiExpectedVelocity(self.noise_params,
                                      delta_r=self.noise_params.delta_r,
                                      m=self.cfg.m_nodes,
                                      table_size=self.cfg.table_size)

    def sample_noise(self, seed, stream):
        r_t = int(np.floor(self.grid.t_end / self.noise_params.delta_r
                           + 1e-9))
        if self.noise_params.kind == NoiseKind.WHITE:
            return sample_white_noise(self.noise_params, r_t, seed, stream)
        return sample_jacobi(self.noise_params, r_t, seed, stream)

    def manifest(self, seed, extra=None):
        payload = {
            "config": self.cfg.effective(),
            "master_seed": seed,
            "backend": BACKEND,
            "version": __version__,
            "cfl": {"c_det": self.c_det, "lambda": self.grid.lam,
                    "dt": self.grid.dt},
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max,
                     "dx": self.grid.dx, "n_cells": self.grid.n_cells,
                     "n_steps": self.grid.n_steps},
        }
        if extra:
            payload.update(extra)
        return payload


def _initial_from_file(path, grid):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    values = data[:, -1] if data.ndim == 2 else data
    if values.shape[0] != grid.n_cells:
        raise ValueError(
            f"initial file has {values.shape[0]} cells, grid needs "
            f"{grid.n_cells}")
    return values


def _fail(code, err_id, message, **extra):
    sys.stderr.write(sio.error_json(err_id, message, **extra) + "\n")
    sys.exit(code)


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _problem_or_fail(file_values, overrides):
    try:
        cfg = ExperimentConfig.merged(file_values, overrides)
        return Problem(cfg)
    except CflError as exc:
        _fail(2, "cfl_violation", str(exc), admissible_dt=exc.admissible_dt)
    except (ValueError, OSError) as exc:
        _fail(2, "invalid_config", str(exc))


def _common_options(fn):
    fn = click.option("--config", type=click.Path(exists=True),
                      default=None, help="JSON config file")(fn)
    fn = click.option("--out", default=None,
                      help="output directory (env SNVSIM_OUTDIR)")(fn)
    fn = click.option("--seed", type=int, default=0,
                      help="master seed")(fn)
    fn = click.option("--threads", type=int, default=1,
                      help="worker threads (never changes results)")(fn)
    return fn


def _outdir(out):
    base = out or os.environ.get("SNVSIM_OUTDIR") or "snvsim_out"
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _guarded(fn):
    """Map parameter errors to exit code 2 with a machine-readable report."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CflError as exc:
            _fail(2, "cfl_violation", str(exc),
                  admissible_dt=exc.admissible_dt)
        except ValueError as exc:
            _fail(2, "invalid_config", str(exc))

    return wrapper


_MODEL_OPTIONS = [
    ("--model", {"type": click.Choice(["nv", "snv", "esnv"]),
                 "default": None}),
    ("--initial", {"default": None,
                   "help": "rho_low | rho_high | CSV file"}),
    ("--noise", {"type": click.Choice(["white", "jacobi"]),
                 "default": None}),
    ("--alpha", {"type": float, "default": None}),
    ("--sigma", {"type": float, "default": None}),
    ("--tau", {"type": float, "default": None}),
    ("--eta", {"type": float, "default": None}),
    ("--dx", {"type": float, "default": None}),
    ("--dt", {"type": float, "default": None}),
    ("--delta-r", {"type": float, "default": None}),
    ("--x-min", {"type": float, "default": None}),
    ("--x-max", {"type": float, "default": None}),
    ("--t-end", {"type": float, "default": None}),
    ("--times", {"default": None, "help": "comma-separated output times"}),
    ("--m", {"type": int, "default": None, "help": "realization count"}),
    ("--m-nodes", {"type": int, "default": None}),
    ("--realization", {"type": int, "default": None,
                       "help": "noise stream index for single solves"}),
]


def _model_options(fn):
    for name, kwargs in reversed(_MODEL_OPTIONS):
        fn = click.option(name, **kwargs)(fn)
    return fn


def _overrides(kwargs):
    over = dict(kwargs)
    times = over.pop("times", None)
    if isinstance(times, str):
        over["times"] = tuple(float(t) for t in times.split(","))
    elif times is not None:
        over["times"] = tuple(times)
    return over


@click.group()
def main():
    """Simulation runner for nonlocal traffic flow under bounded noise."""


@main.command()
@_common_options
@_model_options
@_guarded
def solve(config, out, seed, threads, **kwargs):
    """One run of the chosen model; snapshots to CSV plus a manifest."""
    problem = _problem_or_fail(_load_config(config), _overrides(kwargs))
    outdir = _outdir(out)
    cfg = problem.cfg
    try:
        if cfg.model == "nv":
            result = solve_nv(problem.rho0, problem.weights, problem.vm,
                              problem.grid, output_times=problem.output_times)
        elif cfg.model == "snv":
            noise = problem.sample_noise(seed, cfg.realization)
            result = solve_snv(problem.rho0, noise, problem.weights,
                               problem.vm, problem.grid, tau=cfg.tau,
                               output_times=problem.output_times)
            sio.write_noise_csv(noise, outdir / "noise.csv")
        else:
            result = solve_esnv(problem.rho0, problem.expected_velocity(),
                                problem.weights, problem.vm, problem.grid,
                                tau=cfg.tau,
                                output_times=problem.output_times)
    except (CflError, ValueError) as exc:
        _fail(2 if isinstance(exc, CflError) else 1, "run_failed", str(exc))
    sio.write_snapshots_csv(result, outdir / "snapshots.csv")
    xc = result.grid.cell_centers()
    for snap in result.snapshots:
        sio.write_csv(outdir / f"snapshot_t{fmt_time(snap.time)}.csv",
                      ["x_j", "rho"], zip(xc, snap.values))
    extra = {"model": cfg.model, "mass_drift": float(
        result.mass_ledger.mass[-1] - result.mass_ledger.mass[0])}
    if result.model == "esnv":
        extra["expected_velocity"] = result.meta.get("expected_velocity")
    sio.write_manifest(outdir / "manifest.json",
                       problem.manifest(seed, extra))
    click.echo(f"wrote {outdir / 'snapshots.csv'}")


@main.command()
@_common_options
@_model_options
@_guarded
def mc(config, out, seed, threads, **kwargs):
    """Monte Carlo batch of the stochastic model with ensemble statistics."""
    over = _overrides(kwargs)
    over["model"] = "snv"
    problem = _problem_or_fail(_load_config(config), over)
    outdir = _outdir(out)
    cfg = problem.cfg
    spec = McBatchSpec(m=cfg.m, master_seed=seed, grid=problem.grid,
                       noise_params=problem.noise_params,
                       weights=problem.weights, vm=problem.vm,
                       rho0_values=problem.rho0,
                       output_times=problem.output_times)
    results = run_batch(spec, threads=threads)
    esnv = solve_esnv(problem.rho0, problem.expected_velocity(),
                      problem.weights, problem.vm, problem.grid, tau=cfg.tau,
                      output_times=problem.output_times)
    for t in problem.output_times:
        stats = ensemble_stats(batch_fields_at(results, t))
        tag = fmt_time(t)
        sio.write_ensemble_csv(stats, outdir / f"ensemble_t{tag}.csv",
                               esnv_values=esnv.snapshot_at(t).values)
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "m": cfg.m,
        "realization_seeds": [[seed, k] for k in range(cfg.m)]}))
    click.echo(f"wrote ensembles for {len(problem.output_times)} time(s) "
               f"to {outdir}")


def fmt_time(t):
    return format(float(t), ".6g").replace(".", "p").replace("-", "m")


@main.command()
@_common_options
@_model_options
@click.option("--x0s", default=None, help="comma-separated start positions")
@click.option("--t0", type=float, default=0.0)
@_guarded
def characteristics(config, out, seed, threads, x0s, t0, **kwargs):
    """Trace particle paths: sampled realizations, their average and the
    mean-model path, from shared start points."""
    over = _overrides(kwargs)
    over["model"] = "snv"
    problem = _problem_or_fail(_load_config(config), over)
    outdir = _outdir(out)
    cfg = problem.cfg
    if x0s:
        starts = [float(x) for x in x0s.split(",")]
    else:
        span = problem.grid.x_max - problem.grid.x_min
        starts = list(np.linspace(problem.grid.x_min + 0.1 * span,
                                  problem.grid.x_max - 0.5 * span, 8))
    all_paths = []
    for k in range(cfg.m):
        noise = problem.sample_noise(seed, k)
        run = solve_snv(problem.rho0, noise, problem.weights, problem.vm,
                        problem.grid, tau=cfg.tau, output_times=[],
                        record_velocity=True)
        all_paths.append(trace_characteristics(run, t0, starts))
    esnv = solve_esnv(problem.rho0, problem.expected_velocity(),
                      problem.weights, problem.vm, problem.grid, tau=cfg.tau,
                      output_times=[], record_velocity=True)
    esnv_paths = trace_characteristics(esnv, t0, starts)
    flat = [p for paths in all_paths for p in paths]
    labels = [f"snv{k}_x{i}" for k, paths in enumerate(all_paths)
              for i, _ in enumerate(paths)]
    sio.write_paths_csv(flat, outdir / "paths_snv.csv", labels=labels)
    sio.write_paths_csv(esnv_paths, outdir / "paths_esnv.csv",
                        labels=[f"esnv_x{i}"
                                for i in range(len(esnv_paths))])
    if cfg.m >= 2:
        avgs = [mc_characteristic_average([paths[i] for paths in all_paths])
                for i in range(len(starts))]
        sio.write_paths_csv(avgs, outdir / "paths_average.csv",
                            labels=[f"avg_x{i}" for i in range(len(starts))])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "x0s": starts, "t0": t0, "m": cfg.m}))
    click.echo(f"wrote characteristic bundles to {outdir}")


@main.command()
@_common_options
@_model_options
@click.option("--m-values", default="50,200,800")
@click.option("--dt-factors", default="1,2,4",
              help="dt = c_det*dx/factor per level")
@click.option("--etas", default="0.2,0.02")
@click.option("--x0s", default="-0.4,0.1,0.6,1.1,1.6")
@click.option("--t0", type=float, default=0.0)
@_guarded
def bias(config, out, seed, threads, m_values, dt_factors, etas, x0s, t0,
         **kwargs):
    """Path-space bias of the mean model over an (M, dt) grid, per eta."""
    over = _overrides(kwargs)
    if over.get("initial") is None:
        over["initial"] = "rho_high"
    over["noise"] = "jacobi"
    over["model"] = "snv"
    if over.get("x_max") is None:
        over["x_max"] = 4.0
    problem = _problem_or_fail(_load_config(config), over)
    outdir = _outdir(out)
    cfg = problem.cfg
    m_vals = tuple(int(v) for v in m_values.split(","))
    factors = tuple(float(v) for v in dt_factors.split(","))
    eta_list = tuple(float(v) for v in etas.split(","))
    starts = tuple(float(v) for v in x0s.split(","))

    vm = problem.vm
    weights_by_eta = {eta: discretize_kernel(concave_kernel(eta), cfg.dx)
                      for eta in eta_list}
    c_min = min(1.0 / (w.gamma0 * vm.lip_v * vm.rho_max + vm.v_max + cfg.tau)
                for w in weights_by_eta.values())
    dt_values = tuple(c_min * cfg.dx / f for f in factors)
    results = {}
    for eta in eta_list:
        study = BiasStudyConfig(
            rho0_values=problem.rho0, x_min=problem.grid.x_min,
            x_max=problem.grid.x_max, dx=cfg.dx, t_end=cfg.t_end,
            weights=weights_by_eta[eta], vm=vm,
            noise_params=NoiseParams(tau=cfg.tau, kind=NoiseKind.JACOBI,
                                     alpha=cfg.alpha, sigma=cfg.sigma),
            m_values=m_vals, dt_values=dt_values, x0s=starts, t0=t0,
            master_seed=seed, density_nodes=cfg.m_nodes)
        res = bias_study(study)
        results[eta] = res
        sio.write_bias_csv(res, outdir / f"bias_eta{fmt_time(eta)}.csv")
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "m_values": list(m_vals), "dt_values": list(dt_values),
        "etas": list(eta_list), "x0s": list(starts), "t0": t0}))
    click.echo(f"wrote bias studies for etas {eta_list} to {outdir}")


@main.command("fokker-planck")
@_common_options
@_model_options
@_guarded
def fokker_planck(config, out, seed, threads, **kwargs):
    """Propagate the noise density and emit snapshots plus moments."""
    over = _overrides(kwargs)
    over["noise"] = "jacobi"
    over.setdefault("delta_r", over.get("delta_r") or 1e-3)
    problem = _problem_or_fail(_load_config(config), over)
    outdir = _outdir(out)
    cfg = problem.cfg
    delta_r = problem.noise_params.delta_r
    evo = JacobiDensityEvolution(problem.noise_params, delta_r,
                                 m=cfg.m_nodes)
    times = problem.output_times
    moments = []
    for t in times:
        k = evo.index_at(t)
        grid = evo.density_at(k)
        sio.write_density_csv(grid, outdir / f"density_t{fmt_time(t)}.csv")
        moments.append((t, grid.mass(), grid.moment(1), grid.moment(2)))
    sio.write_csv(outdir / "moments.csv",
                  ["t", "mass", "mean", "second_moment"], moments)
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "m_nodes": cfg.m_nodes, "delta_r": delta_r,
        "density_times": list(times)}))
    click.echo(f"wrote {len(times)} density snapshot(s) to {outdir}")


@main.command()
@_common_options
@_model_options
@click.option("--deltas", default="0.025,0.05,0.1")
@click.option("--pairs", type=int, default=10,
              help="additional random piecewise path pairs")
@_guarded
def stability(config, out, seed, threads, deltas, pairs, **kwargs):
    """Stability-estimate audit over constant and random noise path pairs."""
    over = _overrides(kwargs)
    over["model"] = "snv"
    problem = _problem_or_fail(_load_config(config), over)
    outdir = _outdir(out)
    cfg = problem.cfg
    delta_list = [float(d) for d in deltas.split(",")]
    grid = problem.grid
    rows = []
    reports = []

    def run_pair(label, path1, path2):
        run1 = solve_snv(problem.rho0, path1, problem.weights, problem.vm,
                         grid, tau=cfg.tau)
        run2 = solve_snv(problem.rho0, path2, problem.weights, problem.vm,
                         grid, tau=cfg.tau)
        rep = check_stability(run1, run2, path1, path2, problem.vm,
                              problem.kernel)
        reports.append(rep)
        rows.append((label, rep.l1_distance, rep.bound, rep.noise_l1,
                     int(rep.satisfied)))

    t_end = grid.t_end
    for d in delta_list:
        run_pair(f"const_{d}", constant_path(0.0, t_end, grid.dt),
                 constant_path(d, t_end, grid.dt))
    gen = np.random.default_rng(seed)
    r_t = int(np.floor(t_end / grid.dt + 1e-9))
    for p in range(pairs):
        vals1 = cfg.tau * (2.0 * gen.random(r_t + 1) - 1.0)
        vals2 = cfg.tau * (2.0 * gen.random(r_t + 1) - 1.0)
        run_pair(f"random_{p}", piecewise_path(vals1, grid.dt),
                 piecewise_path(vals2, grid.dt))
    sio.write_csv(outdir / "stability.csv",
                  ["pair", "l1_distance", "bound", "noise_l1", "satisfied"],
                  rows)
    sio.write_manifest(outdir / "reports.json",
                       {label: rep.to_dict()
                        for (label, *_), rep in zip(rows, reports)})
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "deltas": delta_list, "random_pairs": pairs,
        "all_satisfied": all(r.satisfied for r in reports)}))
    if not all(r.satisfied for r in reports):
        _fail(1, "stability_violated",
              "an L1 distance exceeded its stability bound")
    click.echo(f"wrote stability audit ({len(rows)} pairs) to {outdir}")


@main.command()
@_common_options
@click.argument("figure_id", type=click.Choice(
    ["fig2_1", "fig2_2", "fig3_1", "fig3_2", "fig3_3", "fig3_4"]))
@click.option("--scale", type=click.Choice(["desk", "paper"]),
              default="desk")
def figures(config, out, seed, threads, figure_id, scale):
    """Regenerate one figure's data (plot-ready CSV + gnuplot script)."""
    outdir = _outdir(out) / figure_id
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        _FIGURES[figure_id](_load_config(config), outdir, seed, threads,
                            scale)
    except CflError as exc:
        _fail(2, "cfl_violation", str(exc), admissible_dt=exc.admissible_dt)
    click.echo(f"wrote {figure_id} data to {outdir}")


def _fig_problem(file_values, scale, **defaults):
    # figure-specific defaults, then the user's config file on top
    base = dict(defaults)
    if scale == "paper":
        base.update(base.pop("paper", {}))
    else:
        base.pop("paper", None)
    return _problem_or_fail(base, file_values)


def _fig2_1(file_values, outdir, seed, threads, scale):
    paper = {"dx": 3e-3, "t_end": 2.0}
    problem = _fig_problem(file_values, scale, initial="rho_high",
                           noise="jacobi", model="snv", alpha=4.0, sigma=1.0,
                           tau=0.5, t_end=1.0, m=15, paper=paper)
    cfg = problem.cfg
    starts = list(np.linspace(-0.5, 2.0, 8))
    flat, labels = [], []
    for k in range(cfg.m):
        noise = problem.sample_noise(seed, k)
        run = solve_snv(problem.rho0, noise, problem.weights, problem.vm,
                        problem.grid, tau=cfg.tau, output_times=[],
                        record_velocity=True)
        for i, p in enumerate(trace_characteristics(run, 0.0, starts)):
            flat.append(p)
            labels.append(f"snv{k}_x{i}")
    esnv = solve_esnv(problem.rho0, problem.expected_velocity(),
                      problem.weights, problem.vm, problem.grid, tau=cfg.tau,
                      output_times=[], record_velocity=True)
    epaths = trace_characteristics(esnv, 0.0, starts)
    sio.write_paths_csv(flat, outdir / "paths_snv.csv", labels=labels)
    sio.write_paths_csv(epaths, outdir / "paths_esnv.csv",
                        labels=[f"esnv_x{i}" for i in range(len(epaths))])
    sio.write_gnuplot(outdir / "plot.gp", "characteristics: sampled vs mean "
                      "model", "paths_*.csv",
                      ["'paths_snv.csv' using 3:2 with dots lc 'grey' "
                       "title 'sNV'",
                       "'paths_esnv.csv' using 3:2 with lines lc 'green' "
                       "title 'EsNV'"])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "figure": "fig2_1", "scale": scale, "x0s": starts}))


def _fig2_2(file_values, outdir, seed, threads, scale):
    problem = _fig_problem(file_values, scale, noise="jacobi", alpha=4.0,
                           sigma=1.0, tau=0.5, delta_r=1e-3, t_end=2.0,
                           times=(0.01, 0.05, 0.2, 1.0, 2.0))
    cfg = problem.cfg
    evo = JacobiDensityEvolution(problem.noise_params,
                                 problem.noise_params.delta_r,
                                 m=cfg.m_nodes)
    names = []
    for t in problem.output_times:
        grid = evo.density_at(evo.index_at(t))
        name = f"density_t{fmt_time(t)}.csv"
        sio.write_density_csv(grid, outdir / name)
        names.append(name)
    sio.write_gnuplot(outdir / "plot.gp", "noise density evolution",
                      ",".join(names),
                      [f"'{name}' using 1:3 with lines title '{name}'"
                       for name in names])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "figure": "fig2_2", "scale": scale, "m_nodes": cfg.m_nodes}))


def _mc_panel(problem, seed, threads, outdir, tag):
    cfg = problem.cfg
    t = cfg.t_end
    spec = McBatchSpec(m=cfg.m, master_seed=seed, grid=problem.grid,
                       noise_params=problem.noise_params,
                       weights=problem.weights, vm=problem.vm,
                       rho0_values=problem.rho0, output_times=(t,))
    results = run_batch(spec, threads=threads)
    fields = batch_fields_at(results, t)
    stats = ensemble_stats(fields)
    esnv = solve_esnv(problem.rho0, problem.expected_velocity(),
                      problem.weights, problem.vm, problem.grid,
                      tau=cfg.tau, output_times=(t,))
    sio.write_ensemble_csv(stats, outdir / f"{tag}.csv",
                           esnv_values=esnv.snapshot_at(t).values)
    sample = fields[:10]
    xc = problem.grid.cell_centers()
    rows = ((k, x, v) for k, f in enumerate(sample)
            for x, v in zip(xc, f.values))
    sio.write_csv(outdir / f"{tag}_samples.csv", ["realization", "x", "rho"],
                  rows)
    return stats, esnv, fields


def _fig3_1(file_values, outdir, seed, threads, scale):
    paper = {"dx": 1e-3, "m": 2000}
    for tag, noise in (("white", "white"), ("jacobi", "jacobi")):
        problem = _fig_problem(file_values, scale, initial="rho_low",
                               model="snv", noise=noise, alpha=4.0,
                               sigma=1.0, tau=0.5, t_end=1.0, paper=paper)
        _mc_panel(problem, seed, threads, outdir, tag)
    sio.write_gnuplot(outdir / "plot.gp", "ensembles: white vs jacobi noise",
                      "white.csv,jacobi.csv",
                      ["'white.csv' using 1:2 with lines title 'mean (WN)'",
                       "'white.csv' using 1:6 with lines title 'EsNV (WN)'",
                       "'jacobi.csv' using 1:2 with lines title 'mean (JP)'",
                       "'jacobi.csv' using 1:6 with lines title "
                       "'EsNV (JP)'"])
    sio.write_manifest(outdir / "manifest.json", {"figure": "fig3_1",
                                                  "scale": scale,
                                                  "master_seed": seed,
                                                  "backend": BACKEND})


def _fig3_2(file_values, outdir, seed, threads, scale):
    paper = {"dx": 3e-3, "m": 2000}
    problem = _fig_problem(file_values, scale, initial="rho_high",
                           model="snv", noise="jacobi", alpha=4.0, sigma=1.0,
                           tau=0.5, t_end=2.0, paper=paper)
    cfg = problem.cfg
    _, esnv, fields = _mc_panel(problem, seed, threads, outdir, "ensemble")
    stack = np.stack([f.values for f in fields])
    nested = [max(cfg.m // 4, 2), max(cfg.m // 2, 2), cfg.m]
    xc = problem.grid.cell_centers()
    cols = [xc] + [stack[:m].mean(axis=0) for m in nested]
    cols.append(esnv.snapshot_at(cfg.t_end).values)
    header = (["x"] + [f"mean_M{m}" for m in nested] + ["esnv"])
    sio.write_csv(outdir / "nested_means.csv", header, zip(*cols))
    sio.write_gnuplot(outdir / "plot.gp", "ensemble and nested means",
                      "ensemble.csv,nested_means.csv",
                      ["'ensemble.csv' using 1:2 with lines title 'mean'",
                       "'ensemble.csv' using 1:6 with lines title 'EsNV'"])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "figure": "fig3_2", "scale": scale, "nested_m": nested}))


def _fig3_3(file_values, outdir, seed, threads, scale):
    paper = {"dx": 3e-3, "m": 2000}
    problem = _fig_problem(file_values, scale, initial="rho_high",
                           model="snv", noise="jacobi", alpha=4.0, sigma=1.0,
                           tau=0.5, t_end=2.0, m=200, paper=paper)
    cfg = problem.cfg
    starts = [-0.4, 0.1, 0.6, 1.1, 1.6]
    per_start = [[] for _ in starts]
    for k in range(cfg.m):
        noise = problem.sample_noise(seed, k)
        run = solve_snv(problem.rho0, noise, problem.weights, problem.vm,
                        problem.grid, tau=cfg.tau, output_times=[],
                        record_velocity=True)
        for i, p in enumerate(trace_characteristics(run, 0.0, starts)):
            per_start[i].append(p)
    avgs = [mc_characteristic_average(paths) for paths in per_start]
    esnv = solve_esnv(problem.rho0, problem.expected_velocity(),
                      problem.weights, problem.vm, problem.grid, tau=cfg.tau,
                      output_times=[], record_velocity=True)
    epaths = trace_characteristics(esnv, 0.0, starts)
    sio.write_paths_csv(avgs, outdir / "paths_average.csv",
                        labels=[f"avg_x{i}" for i in range(len(starts))])
    sio.write_paths_csv(epaths, outdir / "paths_esnv.csv",
                        labels=[f"esnv_x{i}" for i in range(len(starts))])
    sio.write_gnuplot(outdir / "plot.gp", "average vs mean-model paths",
                      "paths_average.csv,paths_esnv.csv",
                      ["'paths_average.csv' using 3:2 with lines "
                       "title 'MC average'",
                       "'paths_esnv.csv' using 3:2 with lines dt 2 "
                       "title 'EsNV'"])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "figure": "fig3_3", "scale": scale, "x0s": starts, "m": cfg.m}))


def _fig3_4(file_values, outdir, seed, threads, scale):
    paper = {"dx": 3e-3, "t_end": 2.0, "m": 2000}
    problem = _fig_problem(file_values, scale, initial="rho_high",
                           model="snv", noise="jacobi", alpha=4.0, sigma=1.0,
                           tau=0.5, t_end=1.0, x_max=4.0, m=800, paper=paper)
    cfg = problem.cfg
    m_vals = tuple(sorted({max(1, cfg.m // 16), max(2, cfg.m // 4), cfg.m}))
    vm = problem.vm
    etas = (0.2, 0.02)
    weights_by_eta = {eta: discretize_kernel(concave_kernel(eta), cfg.dx)
                      for eta in etas}
    c_min = min(1.0 / (w.gamma0 * vm.lip_v * vm.rho_max + vm.v_max + cfg.tau)
                for w in weights_by_eta.values())
    dt_values = tuple(c_min * cfg.dx / f for f in (1.0, 2.0, 4.0))
    for eta in etas:
        study = BiasStudyConfig(
            rho0_values=problem.rho0, x_min=problem.grid.x_min,
            x_max=problem.grid.x_max, dx=cfg.dx, t_end=cfg.t_end,
            weights=weights_by_eta[eta], vm=vm,
            noise_params=NoiseParams(tau=cfg.tau, kind=NoiseKind.JACOBI,
                                     alpha=cfg.alpha, sigma=cfg.sigma),
            m_values=m_vals, dt_values=dt_values,
            x0s=(-0.4, 0.1, 0.6, 1.1, 1.6), master_seed=seed,
            density_nodes=cfg.m_nodes)
        sio.write_bias_csv(bias_study(study),
                           outdir / f"bias_eta{fmt_time(eta)}.csv")
    sio.write_gnuplot(outdir / "plot.gp", "path-space bias over (M, dt)",
                      "bias_eta*.csv",
                      ["'bias_eta0p2.csv' using 2:5 title 'eta=0.2'",
                       "'bias_eta0p02.csv' using 2:5 title 'eta=0.02'"])
    sio.write_manifest(outdir / "manifest.json", problem.manifest(seed, {
        "figure": "fig3_4", "scale": scale, "m_values": list(m_vals),
        "dt_values": list(dt_values), "etas": list(etas)}))


_FIGURES = {"fig2_1": _fig2_1, "fig2_2": _fig2_2, "fig3_1": _fig3_1,
            "fig3_2": _fig3_2, "fig3_3": _fig3_3, "fig3_4": _fig3_4}


if __name__ == "__main__":
    main()
