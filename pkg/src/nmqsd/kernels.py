"""Bath memory functions: sum-of-exponentials representation, evaluation,
closed-form time integrals, and damped least-squares fitting.

Kernels are stationary, alpha(t, s) = alpha(t - s), and are evaluated for
non-negative time differences only; alpha(-dt) = alpha(dt)* is left to the
caller, which keeps the conjugate-symmetry convention explicit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import j0


@dataclass(frozen=True)
class ExpTerm:
    """One term A * exp(-decay*dt) * exp(-i*freq*dt) of a memory kernel."""

    amplitude: float
    decay: float
    freq: float = 0.0

    def __post_init__(self):
        if not (self.amplitude > 0):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not (self.decay > 0):
            raise ValueError(f"decay must be positive, got {self.decay}")
        if not np.isfinite(self.freq):
            raise ValueError("freq must be finite")


@dataclass(frozen=True)
class MemoryKernel:
    """Sum of complex-exponential terms; alpha(0) = sum of amplitudes."""

    terms: tuple[ExpTerm, ...]

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("kernel needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def alpha0(self) -> float:
        return float(sum(t.amplitude for t in self.terms))

    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.terms])

    def decays(self) -> np.ndarray:
        return np.array([t.decay for t in self.terms])

    def freqs(self) -> np.ndarray:
        return np.array([t.freq for t in self.terms])

    def __call__(self, dt):
        return eval_exp_kernel(self, dt)


@dataclass(frozen=True)
class BandGapParams:
    """Two-level atom in a photonic band gap, in units of the coupling.

    omega is the atomic excitation frequency, the band of allowed
    frequencies spans [band_center - half_width, band_center + half_width],
    and the gap lies below the band edge.
    """

    omega: float
    band_center: float
    half_width: float

    def __post_init__(self):
        if not (self.half_width > 0):
            raise ValueError("half_width must be positive")
        if self.band_center - self.half_width < 0:
            raise ValueError("band edge band_center - half_width must be >= 0")


def eval_exp_kernel(kernel: MemoryKernel, dt):
    """alpha(dt) = sum_j A_j exp(-decay_j*dt) exp(-i*freq_j*dt), dt >= 0.

    dt may be a scalar or an array; negative values are rejected (use
    conjugate symmetry at the call site for dt < 0).
    """
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(dt_arr < 0):
        raise ValueError("dt must be non-negative; use alpha(-dt) = alpha(dt)*")
    a = kernel.amplitudes()
    rate = kernel.decays() + 1j * kernel.freqs()
    out = np.sum(a * np.exp(-np.multiply.outer(dt_arr, rate)), axis=-1)
    return complex(out) if np.isscalar(dt) or dt_arr.ndim == 0 else out


def eval_bandgap_kernel(params: BandGapParams, dt):
    """Band-gap memory function exp(i(omega-A)dt) * J0(B*dt/3)^3.

    J0 is the order-zero Bessel function of the first kind.  Accepts scalar
    or array dt of either sign (the kernel is defined for all real dt).
    """
    dt_arr = np.asarray(dt, dtype=float)
    if not np.all(np.isfinite(dt_arr)):
        raise ValueError("dt must be finite")
    phase = np.exp(1j * (params.omega - params.band_center) * dt_arr)
    envelope = j0(params.half_width * dt_arr / 3.0) ** 3
    out = phase * envelope
    return complex(out) if np.isscalar(dt) or dt_arr.ndim == 0 else out


def kernel_tau(kernel: MemoryKernel) -> float:
    """Integral of Re alpha(t) over t in [0, inf), in closed form.

    Each term contributes A * decay / (decay^2 + freq^2).
    """
    a = kernel.amplitudes()
    g = kernel.decays()
    w = kernel.freqs()
    return float(np.sum(a * g / (g * g + w * w)))


def paired_kernel(base_freq: float, rows) -> MemoryKernel:
    """Expand (A, decay, offset) rows into term pairs at base_freq +/- offset.

    Each row yields two terms sharing its amplitude and decay, so the pair
    contributes 2A exp(-decay*dt) cos(offset*dt) exp(-i*base_freq*dt).
    """
    terms = []
    for amp, dec, off in rows:
        terms.append(ExpTerm(amp, dec, base_freq + off))
        terms.append(ExpTerm(amp, dec, base_freq - off))
    return MemoryKernel(tuple(terms))


@dataclass(frozen=True)
class FitResult:
    kernel: MemoryKernel
    rel_rms: float
    converged: bool
    pairing_base: float | None = None
    pair_rows: tuple[tuple[float, float, float], ...] | None = None


_POS_FLOOR = 1e-12


def fit_exp_sum(samples, m: int, init: MemoryKernel,
                frequency_pairing: tuple[float, list[float]] | None = None,
                max_nfev: int = 20000) -> FitResult:
    """Damped least-squares fit of a sum-of-exponentials kernel to samples.

    samples: sequence of (dt, complex value) pairs, dt >= 0.
    init: starting kernel with m terms; in pairing mode its amplitudes and
        decays seed the m pairs and frequency_pairing = (base, offsets)
        supplies the m frequency offsets (the fitted kernel then has 2m
        terms at base +/- offset, each pair sharing A and decay).

    Positivity of amplitudes and decays is enforced through solver bounds.
    The residual is reported as rms over the samples relative to |alpha|
    at the smallest sampled dt.  A fit that exhausts max_nfev without
    meeting the tolerances is returned with converged=False.
    """
    pts = [(float(dt), complex(v)) for dt, v in samples]
    if not pts:
        raise ValueError("no samples given")
    dts = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    if np.any(dts < 0):
        raise ValueError("sample dt must be non-negative")
    scale = abs(vals[np.argmin(dts)])
    if scale == 0:
        scale = float(np.max(np.abs(vals))) or 1.0

    paired = frequency_pairing is not None
    if paired:
        base, offsets = frequency_pairing
        offsets = list(offsets)
        if len(offsets) != m or init.n_terms < m:
            raise ValueError("pairing needs m offsets and an init with m pair rows")
        x0 = np.concatenate([
            np.column_stack([init.amplitudes()[:m], init.decays()[:m], offsets]).ravel()
        ])
        lo = np.tile([_POS_FLOOR, _POS_FLOOR, 0.0], m)
        hi = np.full(3 * m, np.inf)
    else:
        if init.n_terms != m:
            raise ValueError(f"init has {init.n_terms} terms, expected m={m}")
        x0 = np.column_stack([init.amplitudes(), init.decays(), init.freqs()]).ravel()
        lo = np.tile([_POS_FLOOR, _POS_FLOOR, -np.inf], m)
        hi = np.full(3 * m, np.inf)

    def kernel_values(x):
        a, g, w = x[0::3], x[1::3], x[2::3]
        env = a * np.exp(-np.multiply.outer(dts, g))
        if paired:
            ph = np.exp(-1j * np.multiply.outer(dts, np.full(m, base)))
            return np.sum(env * ph * 2.0 * np.cos(np.multiply.outer(dts, w)), axis=1)
        return np.sum(env * np.exp(-1j * np.multiply.outer(dts, w)), axis=1)

    def residuals(x):
        diff = kernel_values(x) - vals
        return np.concatenate([diff.real, diff.imag])

    res = least_squares(residuals, x0, bounds=(lo, hi), method="trf",
                        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
    x = np.maximum(res.x, lo)  # guard exact-boundary values
    rel_rms = float(np.sqrt(np.mean(np.abs(kernel_values(x) - vals) ** 2)) / scale)
    converged = res.status > 0

    a, g, w = x[0::3], x[1::3], x[2::3]
    if paired:
        rows = tuple((float(a[k]), float(g[k]), float(w[k])) for k in range(m))
        kern = paired_kernel(base, rows)
        return FitResult(kern, rel_rms, converged, pairing_base=base, pair_rows=rows)
    kern = MemoryKernel(tuple(ExpTerm(float(a[k]), float(g[k]), float(w[k]))
                              for k in range(m)))
    return FitResult(kern, rel_rms, converged)


# ---------------------------------------------------------------------------
# file formats


def save_kernel(kernel: MemoryKernel, path) -> None:
    """Plain-text kernel table: one `A_j  gamma_j  omega_j` row per term."""
    with open(path, "w") as fh:
        for t in kernel.terms:
            fh.write(f"{t.amplitude!r} {t.decay!r} {t.freq!r}\n")


def load_kernel(path) -> MemoryKernel:
    terms = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'A gamma omega', got {line!r}")
            terms.append(ExpTerm(float(parts[0]), float(parts[1]), float(parts[2])))
    if not terms:
        raise ValueError(f"{path}: no kernel terms found")
    return MemoryKernel(tuple(terms))


def save_samples_csv(samples, path) -> None:
    """Kernel sample file with header dt,re,im."""
    with open(path, "w") as fh:
        fh.write("dt,re,im\n")
        for dt, v in samples:
            v = complex(v)
            fh.write(f"{float(dt)!r},{v.real!r},{v.imag!r}\n")


def load_samples_csv(path) -> list[tuple[float, complex]]:
    samples = []
    with open(path) as fh:
        header = fh.readline().strip().lower()
        if header.replace(" ", "") != "dt,re,im":
            raise ValueError(f"{path}: expected header 'dt,re,im', got {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            samples.append((float(parts[0]), complex(float(parts[1]), float(parts[2]))))
    if not samples:
        raise ValueError(f"{path}: no samples found")
    return samples


def kernel_as_dict(kernel: MemoryKernel) -> list[dict]:
    return [dataclasses.asdict(t) for t in kernel.terms]
