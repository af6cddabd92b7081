"""Pure-numpy batched stepping kernels.

Each function advances a whole batch of trajectories by one step, mutating
the state arrays in place.  Shapes: U, Uinv (B,d,d); V (B,C,M,d,d); shift
scalars y and noise components xi (B,C,M); stage increments eta* (B,C,M)
already scaled to the stage variance; xidec (C,M) is the per-stage OU decay
factor.  The compiled backend (_cystep) implements the same signatures.
"""

from __future__ import annotations

import numpy as np


def _lin_rhs(u, ui, v, z, h_op, ops, ops_dag, amp, kdec):
    w = v.sum(axis=2)
    du = -1j * np.matmul(h_op, u)
    g = np.empty_like(w)
    for c in range(ops.shape[0]):
        lu = np.matmul(ops[c], u)
        du += z[:, c, None, None] * lu
        du -= np.matmul(ops_dag[c], np.matmul(u, w[:, c]))
        g[:, c] = np.matmul(ui, lu)
    dv = amp[None, :, :, None, None] * g[:, :, None] - kdec[None, :, :, None, None] * v
    dui = -np.matmul(np.matmul(ui, du), ui)
    return du, dui, dv


def _nl_rhs(u, ui, v, ysh, z, h_op, ops, ops_dag, amp, kdec, psi0):
    # psi0 has shape (B, d): re-basing gives each trajectory its own anchor
    n_ch = ops.shape[0]
    w = v.sum(axis=2)
    phi = np.matmul(u, psi0[:, :, None])[:, :, 0]
    n2 = np.einsum("bi,bi->b", phi.conj(), phi).real
    du = -1j * np.matmul(h_op, u)
    comp = np.zeros(u.shape[0], dtype=complex)
    g = np.empty_like(w)
    ells = np.empty((u.shape[0], n_ch), dtype=complex)
    for c in range(n_ch):
        lu = np.matmul(ops[c], u)
        lphi = np.matmul(phi, ops[c].T)
        ell = np.einsum("bi,bi->b", phi.conj(), lphi) / n2
        ells[:, c] = ell
        uw = np.matmul(u, w[:, c])
        wv = np.matmul(uw, psi0[:, :, None])[:, :, 0]
        shift = z[:, c] + ysh[:, c, :].sum(axis=1)
        du += shift[:, None, None] * lu - (shift * ell)[:, None, None] * u
        du -= np.matmul(ops_dag[c], uw) - ell.conj()[:, None, None] * uw
        comp += (np.einsum("bi,bi->b", lphi.conj(), wv)
                 - ell.conj() * np.einsum("bi,bi->b", phi.conj(), wv))
        g[:, c] = np.matmul(ui, lu)
    du += comp[:, None, None] * u
    dv = amp[None, :, :, None, None] * g[:, :, None] - kdec[None, :, :, None, None] * v
    dy = amp[None] * ells.conj()[:, :, None] - kdec.conj()[None] * ysh
    dui = -np.matmul(np.matmul(ui, du), ui)
    return du, dui, dv, dy


def rk4_step_linear(u, ui, v, xi, eta1, eta2, xidec, h_op, ops, ops_dag,
                    amp, kdec, dt):
    z0 = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta1
    zm = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta2
    ze = xi.sum(axis=2)
    h = 0.5 * dt
    k1 = _lin_rhs(u, ui, v, z0, h_op, ops, ops_dag, amp, kdec)
    k2 = _lin_rhs(u + h * k1[0], ui + h * k1[1], v + h * k1[2], zm,
                  h_op, ops, ops_dag, amp, kdec)
    k3 = _lin_rhs(u + h * k2[0], ui + h * k2[1], v + h * k2[2], zm,
                  h_op, ops, ops_dag, amp, kdec)
    k4 = _lin_rhs(u + dt * k3[0], ui + dt * k3[1], v + dt * k3[2], ze,
                  h_op, ops, ops_dag, amp, kdec)
    s = dt / 6.0
    for tgt, a, b, c, d in zip((u, ui, v), k1, k2, k3, k4):
        tgt += s * (a + 2.0 * b + 2.0 * c + d)


def rk4_step_nonlinear(u, ui, v, ysh, xi, eta1, eta2, xidec, h_op, ops,
                       ops_dag, amp, kdec, psi0, dt):
    z0 = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta1
    zm = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta2
    ze = xi.sum(axis=2)
    h = 0.5 * dt
    k1 = _nl_rhs(u, ui, v, ysh, z0, h_op, ops, ops_dag, amp, kdec, psi0)
    k2 = _nl_rhs(u + h * k1[0], ui + h * k1[1], v + h * k1[2], ysh + h * k1[3],
                 zm, h_op, ops, ops_dag, amp, kdec, psi0)
    k3 = _nl_rhs(u + h * k2[0], ui + h * k2[1], v + h * k2[2], ysh + h * k2[3],
                 zm, h_op, ops, ops_dag, amp, kdec, psi0)
    k4 = _nl_rhs(u + dt * k3[0], ui + dt * k3[1], v + dt * k3[2], ysh + dt * k3[3],
                 ze, h_op, ops, ops_dag, amp, kdec, psi0)
    s = dt / 6.0
    for tgt, a, b, c, d in zip((u, ui, v, ysh), k1, k2, k3, k4):
        tgt += s * (a + 2.0 * b + 2.0 * c + d)


def heun_step_linear(u, ui, v, xi, eta1, xidec, h_op, ops, ops_dag,
                     amp, kdec, dt):
    z0 = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta1
    ze = xi.sum(axis=2)
    k1 = _lin_rhs(u, ui, v, z0, h_op, ops, ops_dag, amp, kdec)
    k2 = _lin_rhs(u + dt * k1[0], ui + dt * k1[1], v + dt * k1[2], ze,
                  h_op, ops, ops_dag, amp, kdec)
    s = 0.5 * dt
    for tgt, a, b in zip((u, ui, v), k1, k2):
        tgt += s * (a + b)


def heun_step_nonlinear(u, ui, v, ysh, xi, eta1, xidec, h_op, ops, ops_dag,
                        amp, kdec, psi0, dt):
    z0 = xi.sum(axis=2)
    xi *= xidec[None]
    xi += eta1
    ze = xi.sum(axis=2)
    k1 = _nl_rhs(u, ui, v, ysh, z0, h_op, ops, ops_dag, amp, kdec, psi0)
    k2 = _nl_rhs(u + dt * k1[0], ui + dt * k1[1], v + dt * k1[2], ysh + dt * k1[3],
                 ze, h_op, ops, ops_dag, amp, kdec, psi0)
    s = 0.5 * dt
    for tgt, a, b in zip((u, ui, v, ysh), k1, k2):
        tgt += s * (a + b)


def refine_inverse(u, ui):
    """Batched Newton touch-up: U^-1 <- U^-1 (2 - U U^-1)."""
    d = u.shape[-1]
    eye2 = 2.0 * np.eye(d, dtype=complex)
    ui[:] = np.matmul(ui, eye2 - np.matmul(u, ui))


def rebase(u, ui, v, psi0):
    """Fold the current propagator into the anchors, exactly.

    psi0 <- U psi0, V <- U V U^-1, then U = U^-1 = identity.  A similarity
    transformation of the representation: the physical trajectory and all
    later dynamics are unchanged up to roundoff, while the exponential
    growth of the propagator pair over long horizons is reset.
    """
    psi0[:] = np.matmul(u, psi0[:, :, None])[:, :, 0]
    nb, nc, m, d, _ = v.shape
    for c in range(nc):
        for k in range(m):
            v[:, c, k] = np.matmul(np.matmul(u, v[:, c, k]), ui)
    eye = np.eye(d, dtype=complex)
    u[:] = eye
    ui[:] = eye
