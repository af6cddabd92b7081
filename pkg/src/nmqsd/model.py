"""Subsystem-bath model container: Hamiltonian plus coupling channels.

Each channel pairs a coupling operator with the memory kernel of its bath.
Models are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import MemoryKernel

_H_TOL = 1e-10


def _frozen_complex(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Channel:
    """One coupling channel: operator and its bath memory kernel."""

    op: np.ndarray
    kernel: MemoryKernel

    def __post_init__(self):
        object.__setattr__(self, "op", _frozen_complex(self.op))
        if self.op.ndim != 2 or self.op.shape[0] != self.op.shape[1]:
            raise ValueError(f"coupling operator must be square, got shape {self.op.shape}")
        if not np.all(np.isfinite(self.op)):
            raise ValueError("coupling operator has non-finite entries")


@dataclass(frozen=True)
class SubsystemModel:
    hamiltonian: np.ndarray
    channels: tuple[Channel, ...]

    def __post_init__(self):
        h = _frozen_complex(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "channels", tuple(self.channels))
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("Hamiltonian has non-finite entries")
        if np.max(np.abs(h - h.conj().T)) > _H_TOL:
            raise ValueError("Hamiltonian is not Hermitian")
        for c in self.channels:
            if c.op.shape != h.shape:
                raise ValueError(
                    f"channel operator shape {c.op.shape} does not match dim {h.shape[0]}")

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.channels)


class ModelPlan:
    """Padded array form of a model, shared by the stepping backends.

    Kernels of different channels may have different term counts; term axes
    are padded to the maximum with zero amplitude (padded terms then stay
    identically zero in every update).
    """

    def __init__(self, model: SubsystemModel):
        d = model.dim
        chans = model.channels
        n_ch = len(chans)
        m_max = max((ch.kernel.n_terms for ch in chans), default=0)
        self.model = model
        self.dim = d
        self.n_channels = n_ch
        self.m_max = m_max
        self.h = np.ascontiguousarray(model.hamiltonian)
        self.ops = np.zeros((n_ch, d, d), dtype=complex)
        self.ops_dag = np.zeros((n_ch, d, d), dtype=complex)
        self.amp = np.zeros((n_ch, max(m_max, 1)))
        # V decay rate gamma + i*omega; padded slots get rate 1 (inert, A=0)
        self.kdec = np.ones((n_ch, max(m_max, 1)), dtype=complex)
        self.n_terms = tuple(ch.kernel.n_terms for ch in chans)
        for c, ch in enumerate(chans):
            self.ops[c] = ch.op
            self.ops_dag[c] = ch.op.conj().T
            m = ch.kernel.n_terms
            self.amp[c, :m] = ch.kernel.amplitudes()
            self.kdec[c, :m] = ch.kernel.decays() + 1j * ch.kernel.freqs()
        for a in (self.h, self.ops, self.ops_dag, self.amp, self.kdec):
            a.setflags(write=False)
