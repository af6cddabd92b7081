"""Batched trajectory stepping with backend selection.

Two interchangeable backends implement the hot stepping kernels: a compiled
Cython core (built at install time) and a pure-numpy fallback.  The
compiled core is used when available; set NMQSD_BACKEND=python or =compiled
to force one, or pass backend= explicitly to the driver.  Backends agree to
floating-point roundoff but are not guaranteed bit-identical to each other;
results are bit-reproducible within a backend.
"""

from __future__ import annotations

import os

from . import pystep

_BACKENDS = {"python": pystep}
try:
    from . import _cystep  # compiled extension, optional
    if hasattr(_cystep, "rk4_step_linear"):
        _BACKENDS["compiled"] = _cystep
except ImportError:
    _cystep = None

_env = os.environ.get("NMQSD_BACKEND")
if _env and _env not in _BACKENDS:
    raise ImportError(f"NMQSD_BACKEND={_env!r} is not available; "
                      f"built backends: {sorted(_BACKENDS)}")
_DEFAULT = _env or ("compiled" if "compiled" in _BACKENDS else "python")


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def default_backend() -> str:
    return _DEFAULT


def get_backend(name: str | None = None):
    """Return the stepping module for a backend name (None = default)."""
    if name is None:
        name = _DEFAULT
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; built: {sorted(_BACKENDS)}") from None


from .driver import BatchResult, run_batch  # noqa: E402

__all__ = ["available_backends", "default_backend", "get_backend",
           "BatchResult", "run_batch"]
