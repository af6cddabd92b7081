"""Experiment configuration: YAML schema, validation, CLI overrides, and a
semantic hash for reproducibility metadata.

A config either names a preset (with optional preset_params) or spells out
the model explicitly; matrices are written as rows of [re, im] pairs and
kernels either inline as term maps or by reference to a kernel text file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .integrator import IntegratorConfig
from .kernels import ExpTerm, MemoryKernel, load_kernel
from .model import Channel, SubsystemModel
from .presets import PRESET_IDS, PresetRun, preset_run

#: short names used by the command line for the worked examples
PRESET_ALIASES = {
    "iia": ("dephasing", {}),
    "iiia": ("dephasing", {}),
    "iib": ("dissipative_spin", {}),
    "iiib": ("dissipative_spin", {}),
    "iic": ("damped_oscillator", {"initial_levels": (0, 1)}),
    "iiic": ("damped_oscillator", {"initial_levels": (1, 2)}),
    "iva": ("double_well", {}),
    "ivb": ("bandgap_atom", {}),
    "ivc": ("three_level_ion", {}),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


@dataclass
class OutputSpec:
    density_elements: object = "all"     # "all" or list of [i, j]
    position_grid: np.ndarray | None = None
    manifold: tuple = ()
    record_trajectories: tuple = ()
    survival: bool = True


@dataclass
class RunSetup:
    """Fully resolved experiment, ready to hand to the ensemble runner."""

    model: SubsystemModel
    psi0: np.ndarray
    method: str
    n_traj: int
    seed: int
    grid: np.ndarray
    integrator: IntegratorConfig
    outputs: OutputSpec
    label: str
    semantic: dict = field(repr=False, default_factory=dict)

    @property
    def config_hash(self) -> str:
        return semantic_hash(self.semantic)


def semantic_hash(semantic: dict) -> str:
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_matrix(rows, what: str) -> np.ndarray:
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected rows of [re, im] pairs") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{what}: expected a square matrix of [re, im] pairs, "
                          f"got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _parse_vector(rows, what: str) -> np.ndarray:
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected a list of [re, im] pairs") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"{what}: expected a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _parse_kernel(spec, what: str) -> MemoryKernel:
    if isinstance(spec, str):
        try:
            return load_kernel(spec)
        except OSError as exc:
            raise ConfigError(f"{what}: cannot read kernel file {spec!r}: {exc}") from None
    if isinstance(spec, list):
        try:
            return MemoryKernel(tuple(
                ExpTerm(float(t["amplitude"]), float(t["decay"]),
                        float(t.get("freq", 0.0))) for t in spec))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{what}: bad inline kernel ({exc})") from None
    raise ConfigError(f"{what}: kernel must be a file path or a list of terms")


def _parse_grid(spec, default_t_final: float) -> np.ndarray:
    spec = spec or {}
    if "times" in spec:
        grid = np.asarray(spec["times"], dtype=float)
    else:
        t_final = float(spec.get("t_final", default_t_final))
        n_points = int(spec.get("n_points", 101))
        if t_final <= 0 or n_points < 2:
            raise ConfigError("grid: need t_final > 0 and n_points >= 2")
        grid = np.linspace(0.0, t_final, n_points)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid: times must start at 0 and increase strictly")
    return grid


def _parse_outputs(spec) -> OutputSpec:
    spec = spec or {}
    out = OutputSpec()
    elems = spec.get("density_elements", "all")
    if elems != "all":
        try:
            out.density_elements = [(int(i), int(j)) for i, j in elems]
        except (TypeError, ValueError):
            raise ConfigError("outputs.density_elements: expected 'all' or "
                              "a list of [i, j] pairs") from None
    if "position_grid" in spec:
        g = spec["position_grid"]
        try:
            out.position_grid = np.linspace(float(g["min"]), float(g["max"]),
                                            int(g.get("n_points", 101)))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("outputs.position_grid: expected {min, max, n_points}") from None
    out.manifold = tuple(int(i) for i in spec.get("manifold", ()))
    out.record_trajectories = tuple(int(i) for i in spec.get("record_trajectories", ()))
    out.survival = bool(spec.get("survival", True))
    return out


def resolve_preset(name: str, params: dict | None = None) -> PresetRun:
    params = dict(params or {})
    if name in PRESET_ALIASES:
        base, defaults = PRESET_ALIASES[name]
        merged = {**defaults, **params}
        return preset_run(base, merged)
    if name in PRESET_IDS:
        return preset_run(name, params)
    known = sorted(PRESET_IDS) + sorted(PRESET_ALIASES)
    raise ConfigError(f"unknown preset {name!r}; known: {', '.join(known)}")


def load_config(path: str | None, overrides: dict | None = None) -> RunSetup:
    """Build a RunSetup from a YAML file and/or CLI overrides.

    Overrides (preset, method, n_traj, seed, dt, rel_tol, t_final) replace
    the corresponding file fields; a missing file with a preset override is
    allowed, so `run --preset iia` works without a config.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path!r} is not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path!r}: top level must be a mapping")
    ov = dict(overrides or {})

    preset_name = ov.get("preset") or raw.get("preset")
    preset_params = dict(raw.get("preset_params") or {})
    if "epsilon" in ov and ov["epsilon"] is not None:
        preset_params["epsilon"] = float(ov["epsilon"])
    if "variant" in ov and ov["variant"] is not None:
        preset_params["variant"] = ov["variant"]

    label = preset_name or "custom model"
    bundle = None
    if preset_name is not None:
        if "initial_levels" in preset_params:
            preset_params["initial_levels"] = tuple(preset_params["initial_levels"])
        bundle = resolve_preset(preset_name, preset_params)
        model = bundle.model
        psi0 = bundle.psi0
        label = bundle.label
    elif "model" in raw:
        mspec = raw["model"]
        if "hamiltonian" not in mspec or "channels" not in mspec:
            raise ConfigError("model: needs 'hamiltonian' and 'channels'")
        h = _parse_matrix(mspec["hamiltonian"], "model.hamiltonian")
        channels = []
        for k, ch in enumerate(mspec["channels"]):
            op = _parse_matrix(ch["op"], f"model.channels[{k}].op")
            kern = _parse_kernel(ch["kernel"], f"model.channels[{k}].kernel")
            channels.append(Channel(op, kern))
        try:
            model = SubsystemModel(h, tuple(channels))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
        if "initial_state" not in raw:
            raise ConfigError("initial_state is required for an explicit model")
        psi0 = _parse_vector(raw["initial_state"], "initial_state")
        nrm = np.linalg.norm(psi0)
        if nrm == 0:
            raise ConfigError("initial_state: zero vector")
        psi0 = psi0 / nrm
    else:
        raise ConfigError("config needs either 'preset' or 'model'")

    if "initial_state" in raw and preset_name is not None:
        psi0 = _parse_vector(raw["initial_state"], "initial_state")
        psi0 = psi0 / np.linalg.norm(psi0)

    method = ov.get("method") or raw.get("method", "nonlinear")
    if method not in ("linear", "nonlinear"):
        raise ConfigError(f"method: expected linear or nonlinear, got {method!r}")
    n_traj = int(ov.get("n_traj") or raw.get("n_traj", 1000))
    seed = int(ov["seed"] if ov.get("seed") is not None else raw.get("seed", 0))

    grid_spec = dict(raw.get("grid") or {})
    if ov.get("t_final") is not None:
        grid_spec = {"t_final": ov["t_final"],
                     "n_points": grid_spec.get("n_points", 101)}
    default_tf = bundle.t_final if bundle is not None else 10.0
    grid = _parse_grid(grid_spec, default_tf)

    ispec = dict(raw.get("integrator") or {})
    default_dt = bundle.dt if bundle is not None else 1e-3
    dt = float(ov["dt"] if ov.get("dt") is not None else ispec.get("dt", default_dt))
    try:
        integrator = IntegratorConfig(
            dt_init=dt,
            rel_tol=float(ov["rel_tol"] if ov.get("rel_tol") is not None
                          else ispec.get("rel_tol", 1e-6)),
            abs_tol=float(ispec.get("abs_tol", 1e-9)),
            dt_min=float(ispec.get("dt_min", min(1e-7, dt))),
            dt_max=float(ispec.get("dt_max", max(0.1, dt))),
            scheme=ispec.get("scheme", "rk4_frozen_noise"),
            adaptive=bool(ispec.get("adaptive", False)),
            inv_refresh_interval=int(ispec.get("inv_refresh_interval", 100)),
        )
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    outputs = _parse_outputs(raw.get("outputs"))
    if outputs.position_grid is None and preset_name in ("iva", "double_well"):
        outputs.position_grid = np.linspace(-5.0, 5.0, 101)
    if not outputs.manifold and preset_name in ("ivc", "three_level_ion"):
        outputs.manifold = (0, 1)

    semantic = {
        "preset": preset_name,
        "preset_params": {k: (list(v) if isinstance(v, tuple) else v)
                          for k, v in preset_params.items()},
        "explicit_model": preset_name is None,
        "hamiltonian": [[_c(z) for z in row] for row in model.hamiltonian],
        "channels": [{"op": [[_c(z) for z in row] for row in ch.op],
                      "kernel": [[t.amplitude, t.decay, t.freq]
                                 for t in ch.kernel.terms]}
                     for ch in model.channels],
        "initial_state": [_c(z) for z in psi0],
        "method": method,
        "n_traj": n_traj,
        "seed": seed,
        "grid": [float(t) for t in grid],
        "integrator": {
            "scheme": integrator.scheme, "dt": integrator.dt_init,
            "adaptive": integrator.adaptive, "rel_tol": integrator.rel_tol,
            "abs_tol": integrator.abs_tol, "dt_min": integrator.dt_min,
            "dt_max": integrator.dt_max,
            "inv_refresh_interval": integrator.inv_refresh_interval,
        },
        "outputs": {
            "density_elements": (outputs.density_elements if outputs.density_elements == "all"
                                 else [list(p) for p in outputs.density_elements]),
            "position_grid": (None if outputs.position_grid is None
                              else [float(x) for x in outputs.position_grid]),
            "manifold": list(outputs.manifold),
            "record_trajectories": list(outputs.record_trajectories),
            "survival": outputs.survival,
        },
    }
    return RunSetup(model=model, psi0=psi0, method=method, n_traj=n_traj,
                    seed=seed, grid=grid, integrator=integrator, outputs=outputs,
                    label=label, semantic=semantic)


def _c(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]
