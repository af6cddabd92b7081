"""Analysis-ready output files for runs and oracles.

All floats are written with repr(), the shortest decimal that round-trips
to the same binary value, so determinism is byte-testable and re-parsing a
CSV reproduces the computed numbers exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import __version__
from .operators import position_density

SCHEMA_VERSION = 1


def _fmt(x) -> str:
    return repr(float(x))


def density_columns(dim: int, elements) -> list[tuple[int, int]]:
    if elements == "all":
        return [(i, j) for i in range(dim) for j in range(dim)]
    return list(elements)


def write_density_csv(path, times, rho, elements="all") -> list[tuple[int, int]]:
    """density.csv: t, then re_rho_i_j, im_rho_i_j per requested element.

    Indices are zero-based row/column labels of the density matrix.
    """
    cols = density_columns(rho.shape[1], elements)
    header = ["t"]
    for i, j in cols:
        header += [f"re_rho_{i}_{j}", f"im_rho_{i}_{j}"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(times):
            row = [_fmt(t)]
            for i, j in cols:
                row += [_fmt(rho[k, i, j].real), _fmt(rho[k, i, j].imag)]
            fh.write(",".join(row) + "\n")
    return cols


def read_density_csv(path):
    """Inverse of write_density_csv; returns (times, columns, values)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        cols = []
        for name in header[1::2]:
            _, _, i, j = name.split("_")
            cols.append((int(i), int(j)))
        times, rows = [], []
        for line in fh:
            vals = [float(x) for x in line.strip().split(",")]
            times.append(vals[0])
            rows.append([complex(re, im) for re, im in zip(vals[1::2], vals[2::2])])
    return np.array(times), cols, np.array(rows)


def write_xdensity_csv(path, times, rho, x_grid) -> None:
    """xdensity.csv: long-format t, x, density for <x|rho_t|x>."""
    with open(path, "w") as fh:
        fh.write("t,x,density\n")
        for k, t in enumerate(times):
            dens = position_density(rho[k], x_grid)
            for x, p in zip(x_grid, dens):
                fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(p)}\n")


def write_trajectory_csv(path, record) -> None:
    """trajectories/<k>.csv: t, re_psi_i, im_psi_i columns and the norm."""
    d = record.psis.shape[1]
    header = ["t"]
    for i in range(d):
        header += [f"re_psi_{i}", f"im_psi_{i}"]
    header.append("norm")
    norms = record.norms()
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(record.times):
            row = [_fmt(t)]
            for i in range(d):
                row += [_fmt(record.psis[k, i].real), _fmt(record.psis[k, i].imag)]
            row.append(_fmt(norms[k]))
            fh.write(",".join(row) + "\n")


def write_survival_csv(path, survival) -> None:
    with open(path, "w") as fh:
        fh.write("t,second_moment,second_se,fourth_moment,fourth_se,variance\n")
        for k, t in enumerate(survival.times):
            fh.write(",".join(_fmt(v) for v in (
                t, survival.second[k], survival.second_se[k],
                survival.fourth[k], survival.fourth_se[k],
                survival.variance[k])) + "\n")


def write_manifold_csv(path, times, records, manifold) -> None:
    """Per-recorded-trajectory manifold population series, wide format."""
    header = ["t"] + [f"traj_{r.index}" for r in records]
    pops = [r.manifold_population(manifold) for r in records]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(times):
            fh.write(",".join([_fmt(t)] + [_fmt(p[k]) for p in pops]) + "\n")


def write_noise_csv(path, grid, corr, stderr, target, usable=True) -> None:
    """noise-check output: t, re_corr, im_corr, stderr plus kernel columns."""
    with open(path, "w") as fh:
        fh.write("t,re_corr,im_corr,stderr,re_kernel,im_kernel\n")
        for k, t in enumerate(grid):
            se = stderr[k] if usable else float("nan")
            fh.write(",".join(_fmt(v) for v in (
                t, corr[k].real, corr[k].imag, se,
                target[k].real, target[k].imag)) + "\n")


def write_meta(out_dir, *, source, setup=None, config_hash=None, extra=None) -> None:
    meta = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "source": source,
        "csv_schemas": {
            "density.csv": "t, then re_rho_i_j, im_rho_i_j per element; "
                           "zero-based indices",
            "xdensity.csv": "t, x, density (long format)",
            "trajectories/<k>.csv": "t, re_psi_i, im_psi_i per component, norm",
            "survival.csv": "t, moments of |<psi0|psi_t>|^2 with standard errors",
            "noise.csv": "t, re_corr, im_corr, stderr, re_kernel, im_kernel",
        },
    }
    if setup is not None:
        meta.update({
            "label": setup.label,
            "method": setup.method,
            "n_traj": setup.n_traj,
            "seed": setup.seed,
            "config_hash": config_hash or setup.config_hash,
        })
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
