"""Command-line entry point: run experiments, fit kernels, check noise
statistics, and produce deterministic oracle references.

All stochastic output is fully determined by --seed (and the config); the
worker count never changes results, only wall time.
"""

from __future__ import annotations

import os
import sys
import time

import click
import numpy as np

from .config import ConfigError, load_config
from .ensemble import EnsembleConfig, EnsembleError, run_ensemble
from .engine import available_backends, default_backend
from .kernels import (MemoryKernel, eval_exp_kernel, fit_exp_sum, load_kernel,
                      load_samples_csv, save_kernel)
from .noise import empirical_correlation, sample_noise_paths
from .oracles import (CutoffConvergenceError, PseudomodeConfig,
                      pseudomode_reference)
from .output import (write_density_csv, write_manifold_csv, write_meta,
                     write_noise_csv, write_survival_csv, write_trajectory_csv,
                     write_xdensity_csv)


@click.group()
def main():
    """Non-Markovian quantum state diffusion simulation engine."""


def _common_overrides(preset, method, n, seed, dt, rel_tol, t_final,
                      epsilon, variant):
    return {"preset": preset, "method": method, "n_traj": n, "seed": seed,
            "dt": dt, "rel_tol": rel_tol, "t_final": t_final,
            "epsilon": epsilon, "variant": variant}


run_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="YAML experiment config."),
    click.option("--preset", default=None,
                 help="Preset id or alias (iia, iiib, iva, ...)."),
    click.option("--method", type=click.Choice(["linear", "nonlinear"]),
                 default=None),
    click.option("--n", "n_traj", type=int, default=None,
                 help="Number of trajectories."),
    click.option("--seed", type=int, default=None, help="Master seed."),
    click.option("--dt", type=float, default=None, help="Fixed step size."),
    click.option("--tol", "rel_tol", type=float, default=None,
                 help="Adaptive relative tolerance."),
    click.option("--t-final", type=float, default=None),
    click.option("--epsilon", type=float, default=None,
                 help="Double-well quartic coefficient."),
    click.option("--variant", type=click.Choice(["band", "gap"]), default=None,
                 help="Band-gap placement of the atomic frequency."),
    click.option("--out-dir", type=click.Path(), default="out"),
]


def _with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return deco


@main.command("run")
@_with_options(run_options)
@click.option("--workers", type=int, default=1,
              help="Worker processes; does not affect results.")
def cmd_run(config_path, preset, method, n_traj, seed, dt, rel_tol, t_final,
            epsilon, variant, out_dir, workers):
    """Run a trajectory ensemble and write density.csv (+ extras) and meta.json."""
    try:
        setup = load_config(config_path, _common_overrides(
            preset, method, n_traj, seed, dt, rel_tol, t_final, epsilon, variant))
    except ConfigError as exc:
        raise click.ClickException(f"config error: {exc}")

    cfg = EnsembleConfig(
        n_traj=setup.n_traj, grid=setup.grid, master_seed=setup.seed,
        method=setup.method, integrator=setup.integrator,
        record_indices=setup.outputs.record_trajectories)
    t0 = time.perf_counter()
    try:
        res = run_ensemble(setup.model, setup.psi0, cfg, workers=workers)
    except EnsembleError as exc:
        raise click.ClickException(f"ensemble failed: {exc}")
    wall = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    cols = write_density_csv(os.path.join(out_dir, "density.csv"),
                             setup.grid, res.density.mean,
                             setup.outputs.density_elements)
    if setup.outputs.position_grid is not None:
        write_xdensity_csv(os.path.join(out_dir, "xdensity.csv"),
                           setup.grid, res.density.mean, setup.outputs.position_grid)
    if setup.outputs.survival:
        write_survival_csv(os.path.join(out_dir, "survival.csv"), res.survival)
    if res.records:
        tdir = os.path.join(out_dir, "trajectories")
        os.makedirs(tdir, exist_ok=True)
        for rec in res.records:
            write_trajectory_csv(os.path.join(tdir, f"{rec.index}.csv"), rec)
        if setup.outputs.manifold:
            write_manifold_csv(os.path.join(out_dir, "manifold.csv"),
                               setup.grid, res.records, setup.outputs.manifold)
    write_meta(out_dir, source="ensemble", setup=setup, extra={
        "n_valid": res.density.n_valid,
        "n_failed": res.n_failed,
        "failed_indices": res.failed_indices,
        "wall_time_s": wall,
        "backend": res.backend,
        "workers": workers,
        "density_elements": [list(c) for c in cols],
        "diagnostics": res.diagnostics,
    })
    click.echo(f"{setup.label}: {setup.method}, {res.density.n_valid} valid "
               f"trajectories ({res.n_failed} failed), wall {wall:.1f}s, "
               f"backend {res.backend}")
    click.echo(f"wrote {out_dir}/density.csv and meta.json "
               f"(config hash {setup.config_hash})")


@main.command("fit-kernel")
@click.option("--samples", "samples_path", type=click.Path(exists=True),
              required=True, help="CSV with header dt,re,im.")
@click.option("--terms", "m", type=int, required=True,
              help="Number of terms (or pairs with --pair-base).")
@click.option("--init", "init_path", type=click.Path(exists=True), required=True,
              help="Kernel text file seeding the fit; with --pair-base its "
                   "frequency column holds the pair offsets.")
@click.option("--pair-base", type=float, default=None,
              help="Fit paired terms at base +/- offset sharing A and decay.")
@click.option("--out", "out_path", type=click.Path(), default="kernel.txt")
def cmd_fit_kernel(samples_path, m, init_path, pair_base, out_path):
    """Damped least-squares fit of a sum-of-exponentials kernel to samples."""
    try:
        samples = load_samples_csv(samples_path)
        init = load_kernel(init_path)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    pairing = None
    if pair_base is not None:
        offsets = list(init.freqs()[:m])
        pairing = (pair_base, offsets)
    try:
        res = fit_exp_sum(samples, m, init, frequency_pairing=pairing)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    save_kernel(res.kernel, out_path)
    if not res.converged:
        with open(out_path, "a") as fh:
            fh.write("# unconverged: best parameters so far\n")
    click.echo(f"fit {'pairs' if pairing else 'terms'}={m} -> {res.kernel.n_terms} "
               f"terms, relative rms residual {res.rel_rms:.3e}"
               f"{'' if res.converged else ' (UNCONVERGED)'}")
    click.echo(f"wrote {out_path}")
    if not res.converged:
        sys.exit(4)


@main.command("noise-check")
@click.option("--kernel", "kernel_path", type=click.Path(exists=True), required=True)
@click.option("--n", "n_paths", type=int, default=10000)
@click.option("--t-final", type=float, default=5.0)
@click.option("--n-points", type=int, default=26)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), default="noise.csv")
def cmd_noise_check(kernel_path, n_paths, t_final, n_points, seed, out_path):
    """Compare the empirical noise correlation against its target kernel."""
    try:
        kern = load_kernel(kernel_path)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    grid = np.linspace(0.0, t_final, n_points)
    paths = sample_noise_paths(kern, n_paths, grid, master_seed=seed)
    if n_paths >= 2:
        corr, se = empirical_correlation(paths, grid)
        usable = True
    else:
        corr = (paths.conj() * paths[:, :1]).mean(axis=0)
        se = np.full(grid.size, np.nan)
        usable = False
        click.echo("warning: a single path gives no error estimate; "
                   "stderr column is unusable", err=True)
    target = eval_exp_kernel(kern, grid)
    write_noise_csv(out_path, grid, corr, se, target, usable=usable)
    if usable:
        cov = np.mean(np.abs(corr - target) <= 4 * se)
        click.echo(f"{n_paths} paths; |corr - kernel| within 4*SE at "
                   f"{100 * cov:.0f}% of {grid.size} grid points")
    click.echo(f"wrote {out_path}")


@main.command("oracle")
@_with_options(run_options)
@click.option("--cutoff", type=int, default=6, help="Per-mode Fock cutoff.")
@click.option("--refine/--no-refine", default=True,
              help="Certify convergence by incrementing cutoffs.")
def cmd_oracle(config_path, preset, method, n_traj, seed, dt, rel_tol, t_final,
               epsilon, variant, out_dir, cutoff, refine):
    """Deterministic pseudomode reference in the density.csv schema.

    Supports sum-of-exponentials kernels (every kernel this engine
    represents); one damped bosonic mode is attached per kernel term.
    """
    try:
        setup = load_config(config_path, _common_overrides(
            preset, method, n_traj, seed, dt, rel_tol, t_final, epsilon, variant))
    except ConfigError as exc:
        raise click.ClickException(f"config error: {exc}")
    pcfg = PseudomodeConfig(fock_cutoff=cutoff, check_convergence=refine)
    t0 = time.perf_counter()
    try:
        rho = pseudomode_reference(setup.model, setup.psi0, setup.grid, pcfg)
    except CutoffConvergenceError as exc:
        raise click.ClickException(str(exc))
    except ValueError as exc:
        raise click.ClickException(f"unsupported model for the oracle: {exc}")
    wall = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    cols = write_density_csv(os.path.join(out_dir, "density.csv"),
                             setup.grid, rho, setup.outputs.density_elements)
    if setup.outputs.position_grid is not None:
        write_xdensity_csv(os.path.join(out_dir, "xdensity.csv"),
                           setup.grid, rho, setup.outputs.position_grid)
    write_meta(out_dir, source="oracle", setup=setup, extra={
        "wall_time_s": wall,
        "fock_cutoff": cutoff,
        "convergence_checked": refine,
        "density_elements": [list(c) for c in cols],
    })
    click.echo(f"{setup.label}: oracle on {setup.grid.size} grid points, "
               f"wall {wall:.1f}s")
    click.echo(f"wrote {out_dir}/density.csv and meta.json")


if __name__ == "__main__":
    main()
