# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched stepping kernels.

Same signatures and semantics as nmqsd.engine.pystep.  Each step is fused
into per-trajectory C loops over raw pointers (all arrays are C-contiguous)
so a trajectory's working set stays in cache and no per-element dispatch
survives.  Matrices are small (dim of order 2..10); plain triple loops beat
library calls at these sizes.
"""

import numpy as np


ctypedef double complex cplx


cdef inline void pzero(cplx* out, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        out[i] = 0


cdef inline void pcopy(cplx* out, const cplx* a, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        out[i] = a[i]


cdef inline void pmat_mul(cplx* out, const cplx* a, const cplx* b, int d) noexcept nogil:
    cdef int i, j, k
    cdef cplx acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(d):
                acc = acc + a[i * d + k] * b[k * d + j]
            out[i * d + j] = acc


cdef inline void pmat_mul_subfrom(cplx* out, const cplx* a, const cplx* b,
                                  int d) noexcept nogil:
    # out -= a @ b
    cdef int i, j, k
    cdef cplx acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(d):
                acc = acc + a[i * d + k] * b[k * d + j]
            out[i * d + j] = out[i * d + j] - acc


cdef void lin_rhs(int d, int nc, int m,
                  const cplx* u, const cplx* ui, const cplx* v, const cplx* z,
                  const cplx* h_op, const cplx* ops, const cplx* ops_dag,
                  const double* amp, const cplx* kdec,
                  cplx* du, cplx* dui, cplx* dv,
                  cplx* b1, cplx* b2, cplx* b3) noexcept nogil:
    cdef int i, c, k, dd = d * d
    cdef const cplx* vc
    cdef cplx* dvc
    pmat_mul(du, h_op, u, d)
    for i in range(dd):
        du[i] = du[i] * (-1j)
    for c in range(nc):
        pmat_mul(b1, ops + c * dd, u, d)                 # b1 = L_c U
        for i in range(dd):
            du[i] = du[i] + z[c] * b1[i]
        vc = v + c * m * dd
        pzero(b2, dd)                                    # b2 = W_c
        for k in range(m):
            for i in range(dd):
                b2[i] = b2[i] + vc[k * dd + i]
        pmat_mul(b3, u, b2, d)                           # b3 = U W_c
        pmat_mul_subfrom(du, ops_dag + c * dd, b3, d)
        pmat_mul(b2, ui, b1, d)                          # b2 = U^-1 L_c U
        dvc = dv + c * m * dd
        for k in range(m):
            for i in range(dd):
                dvc[k * dd + i] = amp[c * m + k] * b2[i] \
                    - kdec[c * m + k] * vc[k * dd + i]
    pmat_mul(b1, ui, du, d)
    pmat_mul(dui, b1, ui, d)
    for i in range(dd):
        dui[i] = -dui[i]


cdef void nl_rhs(int d, int nc, int m,
                 const cplx* u, const cplx* ui, const cplx* v, const cplx* ysh,
                 const cplx* z,
                 const cplx* h_op, const cplx* ops, const cplx* ops_dag,
                 const double* amp, const cplx* kdec, const cplx* psi0,
                 cplx* du, cplx* dui, cplx* dv, cplx* dysh,
                 cplx* b1, cplx* b2, cplx* b3,
                 cplx* phi, cplx* lphi, cplx* wv) noexcept nogil:
    cdef int i, j, c, k, dd = d * d
    cdef double n2
    cdef cplx ell, ell_c, shift, comp, acc
    cdef const cplx* vc
    cdef const cplx* opc
    cdef cplx* dvc
    for i in range(d):                                   # phi = U psi0
        acc = 0
        for j in range(d):
            acc = acc + u[i * d + j] * psi0[j]
        phi[i] = acc
    n2 = 0
    for i in range(d):
        n2 = n2 + phi[i].real * phi[i].real + phi[i].imag * phi[i].imag
    pmat_mul(du, h_op, u, d)
    for i in range(dd):
        du[i] = du[i] * (-1j)
    comp = 0
    for c in range(nc):
        opc = ops + c * dd
        pmat_mul(b1, opc, u, d)                          # b1 = L_c U
        for i in range(d):
            acc = 0
            for j in range(d):
                acc = acc + opc[i * d + j] * phi[j]
            lphi[i] = acc
        ell = 0
        for i in range(d):
            ell = ell + phi[i].conjugate() * lphi[i]
        ell = ell / n2
        ell_c = ell.conjugate()
        vc = v + c * m * dd
        pzero(b2, dd)                                    # b2 = W_c
        for k in range(m):
            for i in range(dd):
                b2[i] = b2[i] + vc[k * dd + i]
        pmat_mul(b3, u, b2, d)                           # b3 = U W_c
        for i in range(d):
            acc = 0
            for j in range(d):
                acc = acc + b3[i * d + j] * psi0[j]
            wv[i] = acc
        shift = z[c]
        for k in range(m):
            shift = shift + ysh[c * m + k]
        for i in range(dd):
            du[i] = du[i] + shift * (b1[i] - ell * u[i]) + ell_c * b3[i]
        pmat_mul_subfrom(du, ops_dag + c * dd, b3, d)
        for i in range(d):
            comp = comp + (lphi[i].conjugate() - ell_c * phi[i].conjugate()) * wv[i]
        pmat_mul(b2, ui, b1, d)                          # b2 = U^-1 L_c U
        dvc = dv + c * m * dd
        for k in range(m):
            for i in range(dd):
                dvc[k * dd + i] = amp[c * m + k] * b2[i] \
                    - kdec[c * m + k] * vc[k * dd + i]
            dysh[c * m + k] = amp[c * m + k] * ell_c \
                - kdec[c * m + k].conjugate() * ysh[c * m + k]
    for i in range(dd):
        du[i] = du[i] + comp * u[i]
    pmat_mul(b1, ui, du, d)
    pmat_mul(dui, b1, ui, d)
    for i in range(dd):
        dui[i] = -dui[i]


cdef void sum_noise(const cplx* xi, cplx* zout, int nb, int nc, int m) noexcept nogil:
    cdef int b, c, k
    cdef cplx s
    for b in range(nb):
        for c in range(nc):
            s = 0
            for k in range(m):
                s = s + xi[(b * nc + c) * m + k]
            zout[b * nc + c] = s


cdef void advance_noise(cplx* xi, const cplx* xidec, const cplx* eta,
                        cplx* zout, int nb, int nc, int m) noexcept nogil:
    cdef int b, c, k, base
    cdef cplx s
    for b in range(nb):
        for c in range(nc):
            base = (b * nc + c) * m
            s = 0
            for k in range(m):
                xi[base + k] = xi[base + k] * xidec[c * m + k] + eta[base + k]
                s = s + xi[base + k]
            zout[b * nc + c] = s


cdef void rk4_one(bint nonlinear, int d, int nc, int m,
                  cplx* u, cplx* ui, cplx* v, cplx* ysh,
                  const cplx* z0, const cplx* zm, const cplx* ze,
                  const cplx* h_op, const cplx* ops, const cplx* ops_dag,
                  const double* amp, const cplx* kdec, const cplx* psi0,
                  cplx* ws, double dt) noexcept nogil:
    # ws layout: 8 state-sized blocks (state0, stage, deriv, acc) followed by
    # 3 matrix buffers and 3 dim-sized vectors; state block = 2*dd + nv*dd + nv
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv
    cdef cplx* y0 = ws
    cdef cplx* ys = ws + nstate
    cdef cplx* dy = ws + 2 * nstate
    cdef cplx* acc = ws + 3 * nstate
    cdef cplx* b1 = ws + 4 * nstate
    cdef cplx* b2 = b1 + dd
    cdef cplx* b3 = b2 + dd
    cdef cplx* vphi = b3 + dd
    cdef cplx* vlphi = vphi + d
    cdef cplx* vwv = vlphi + d
    cdef int i, s
    cdef double h = 0.5 * dt, w6 = dt / 6.0, coef, weight
    cdef const cplx* zs

    # gather state into y0 = [u, ui, v, ysh]
    pcopy(y0, u, dd)
    pcopy(y0 + dd, ui, dd)
    pcopy(y0 + 2 * dd, v, nv * dd)
    if nonlinear:
        pcopy(y0 + 2 * dd + nv * dd, ysh, nv)
    pzero(acc, nstate)
    pcopy(ys, y0, nstate)
    for s in range(4):
        if s == 0:
            zs = z0
        elif s == 3:
            zs = ze
        else:
            zs = zm
        if nonlinear:
            nl_rhs(d, nc, m, ys, ys + dd, ys + 2 * dd, ys + 2 * dd + nv * dd, zs,
                   h_op, ops, ops_dag, amp, kdec, psi0,
                   dy, dy + dd, dy + 2 * dd, dy + 2 * dd + nv * dd,
                   b1, b2, b3, vphi, vlphi, vwv)
        else:
            lin_rhs(d, nc, m, ys, ys + dd, ys + 2 * dd, zs,
                    h_op, ops, ops_dag, amp, kdec,
                    dy, dy + dd, dy + 2 * dd, b1, b2, b3)
        weight = 2.0 if (s == 1 or s == 2) else 1.0
        for i in range(nstate):
            acc[i] = acc[i] + weight * dy[i]
        if s < 3:
            coef = dt if s == 2 else h
            for i in range(nstate):
                ys[i] = y0[i] + coef * dy[i]
    # scatter y0 + w6*acc back
    for i in range(dd):
        u[i] = y0[i] + w6 * acc[i]
        ui[i] = y0[dd + i] + w6 * acc[dd + i]
    for i in range(nv * dd):
        v[i] = y0[2 * dd + i] + w6 * acc[2 * dd + i]
    if nonlinear:
        for i in range(nv):
            ysh[i] = y0[2 * dd + nv * dd + i] + w6 * acc[2 * dd + nv * dd + i]


cdef void heun_one(bint nonlinear, int d, int nc, int m,
                   cplx* u, cplx* ui, cplx* v, cplx* ysh,
                   const cplx* z0, const cplx* ze,
                   const cplx* h_op, const cplx* ops, const cplx* ops_dag,
                   const double* amp, const cplx* kdec, const cplx* psi0,
                   cplx* ws, double dt) noexcept nogil:
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv
    cdef cplx* y0 = ws
    cdef cplx* ys = ws + nstate
    cdef cplx* dy = ws + 2 * nstate
    cdef cplx* acc = ws + 3 * nstate
    cdef cplx* b1 = ws + 4 * nstate
    cdef cplx* b2 = b1 + dd
    cdef cplx* b3 = b2 + dd
    cdef cplx* vphi = b3 + dd
    cdef cplx* vlphi = vphi + d
    cdef cplx* vwv = vlphi + d
    cdef int i
    cdef double w2 = 0.5 * dt

    pcopy(y0, u, dd)
    pcopy(y0 + dd, ui, dd)
    pcopy(y0 + 2 * dd, v, nv * dd)
    if nonlinear:
        pcopy(y0 + 2 * dd + nv * dd, ysh, nv)
    if nonlinear:
        nl_rhs(d, nc, m, y0, y0 + dd, y0 + 2 * dd, y0 + 2 * dd + nv * dd, z0,
               h_op, ops, ops_dag, amp, kdec, psi0,
               dy, dy + dd, dy + 2 * dd, dy + 2 * dd + nv * dd,
               b1, b2, b3, vphi, vlphi, vwv)
    else:
        lin_rhs(d, nc, m, y0, y0 + dd, y0 + 2 * dd, z0,
                h_op, ops, ops_dag, amp, kdec,
                dy, dy + dd, dy + 2 * dd, b1, b2, b3)
    for i in range(nstate):
        acc[i] = dy[i]
        ys[i] = y0[i] + dt * dy[i]
    if nonlinear:
        nl_rhs(d, nc, m, ys, ys + dd, ys + 2 * dd, ys + 2 * dd + nv * dd, ze,
               h_op, ops, ops_dag, amp, kdec, psi0,
               dy, dy + dd, dy + 2 * dd, dy + 2 * dd + nv * dd,
               b1, b2, b3, vphi, vlphi, vwv)
    else:
        lin_rhs(d, nc, m, ys, ys + dd, ys + 2 * dd, ze,
                h_op, ops, ops_dag, amp, kdec,
                dy, dy + dd, dy + 2 * dd, b1, b2, b3)
    for i in range(dd):
        u[i] = y0[i] + w2 * (acc[i] + dy[i])
        ui[i] = y0[dd + i] + w2 * (acc[dd + i] + dy[dd + i])
    for i in range(nv * dd):
        v[i] = y0[2 * dd + i] + w2 * (acc[2 * dd + i] + dy[2 * dd + i])
    if nonlinear:
        for i in range(nv):
            ysh[i] = y0[2 * dd + nv * dd + i] \
                + w2 * (acc[2 * dd + nv * dd + i] + dy[2 * dd + nv * dd + i])


cdef class _Views:
    """Holds the validated array handles for one step call."""
    cdef cplx[:, :, ::1] u, xi
    cdef cplx[:, :, :, :, ::1] v
    cdef const cplx[:, ::1] xidec, h_op, kdec
    cdef const cplx[:, :, ::1] ops, ops_dag
    cdef const double[:, ::1] amp


def _check(u, ui, v, xi):
    if not (u.flags.c_contiguous and ui.flags.c_contiguous
            and v.flags.c_contiguous and xi.flags.c_contiguous):
        raise ValueError("state arrays must be C-contiguous")


def rk4_step_linear(u, ui, v, xi, eta1, eta2, xidec, h_op, ops, ops_dag,
                    amp, kdec, double dt):
    _check(u, ui, v, xi)
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui, xi_ = xi
    cdef cplx[:, :, :, :, ::1] v_ = v
    cdef const cplx[:, :, ::1] e1_ = eta1, e2_ = eta2
    cdef const cplx[:, ::1] xidec_ = xidec, h_ = h_op, kdec_ = kdec
    cdef const cplx[:, :, ::1] ops_ = ops, opsd_ = ops_dag
    cdef const double[:, ::1] amp_ = amp
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int nc = ops.shape[0], m = v.shape[2]
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv

    zbuf = np.empty((3, nb, nc), dtype=complex)
    cdef cplx[:, :, ::1] z_ = zbuf
    wsbuf = np.empty(4 * nstate + 3 * dd + 3 * d, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf

    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef cplx* vp = &v_[0, 0, 0, 0, 0]
    cdef cplx* xip = &xi_[0, 0, 0]
    cdef cplx* zp = &z_[0, 0, 0]
    cdef cplx* ws = &ws_[0]
    cdef int b
    with nogil:
        sum_noise(xip, zp, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e1_[0, 0, 0], zp + nb * nc, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e2_[0, 0, 0], zp + 2 * nb * nc, nb, nc, m)
        for b in range(nb):
            rk4_one(False, d, nc, m, up + b * dd, uip + b * dd, vp + b * nv * dd,
                    NULL, zp + b * nc, zp + (nb + b) * nc, zp + (2 * nb + b) * nc,
                    &h_[0, 0], &ops_[0, 0, 0], &opsd_[0, 0, 0], &amp_[0, 0],
                    &kdec_[0, 0], NULL, ws, dt)


def rk4_step_nonlinear(u, ui, v, ysh, xi, eta1, eta2, xidec, h_op, ops,
                       ops_dag, amp, kdec, psi0, double dt):
    _check(u, ui, v, xi)
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui, xi_ = xi, y_ = ysh
    cdef cplx[:, :, :, :, ::1] v_ = v
    cdef const cplx[:, :, ::1] e1_ = eta1, e2_ = eta2
    cdef const cplx[:, ::1] xidec_ = xidec, h_ = h_op, kdec_ = kdec
    cdef const cplx[:, :, ::1] ops_ = ops, opsd_ = ops_dag
    cdef const double[:, ::1] amp_ = amp
    cdef const cplx[:, ::1] psi0_ = np.ascontiguousarray(psi0, dtype=complex)
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int nc = ops.shape[0], m = v.shape[2]
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv

    zbuf = np.empty((3, nb, nc), dtype=complex)
    cdef cplx[:, :, ::1] z_ = zbuf
    wsbuf = np.empty(4 * nstate + 3 * dd + 3 * d, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf

    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef cplx* vp = &v_[0, 0, 0, 0, 0]
    cdef cplx* yp = &y_[0, 0, 0]
    cdef cplx* xip = &xi_[0, 0, 0]
    cdef cplx* zp = &z_[0, 0, 0]
    cdef cplx* ws = &ws_[0]
    cdef int b
    with nogil:
        sum_noise(xip, zp, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e1_[0, 0, 0], zp + nb * nc, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e2_[0, 0, 0], zp + 2 * nb * nc, nb, nc, m)
        for b in range(nb):
            rk4_one(True, d, nc, m, up + b * dd, uip + b * dd, vp + b * nv * dd,
                    yp + b * nv, zp + b * nc, zp + (nb + b) * nc,
                    zp + (2 * nb + b) * nc,
                    &h_[0, 0], &ops_[0, 0, 0], &opsd_[0, 0, 0], &amp_[0, 0],
                    &kdec_[0, 0], &psi0_[0, 0] + b * d, ws, dt)


def heun_step_linear(u, ui, v, xi, eta1, xidec, h_op, ops, ops_dag,
                     amp, kdec, double dt):
    _check(u, ui, v, xi)
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui, xi_ = xi
    cdef cplx[:, :, :, :, ::1] v_ = v
    cdef const cplx[:, :, ::1] e1_ = eta1
    cdef const cplx[:, ::1] xidec_ = xidec, h_ = h_op, kdec_ = kdec
    cdef const cplx[:, :, ::1] ops_ = ops, opsd_ = ops_dag
    cdef const double[:, ::1] amp_ = amp
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int nc = ops.shape[0], m = v.shape[2]
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv

    zbuf = np.empty((2, nb, nc), dtype=complex)
    cdef cplx[:, :, ::1] z_ = zbuf
    wsbuf = np.empty(4 * nstate + 3 * dd + 3 * d, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf

    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef cplx* vp = &v_[0, 0, 0, 0, 0]
    cdef cplx* xip = &xi_[0, 0, 0]
    cdef cplx* zp = &z_[0, 0, 0]
    cdef cplx* ws = &ws_[0]
    cdef int b
    with nogil:
        sum_noise(xip, zp, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e1_[0, 0, 0], zp + nb * nc, nb, nc, m)
        for b in range(nb):
            heun_one(False, d, nc, m, up + b * dd, uip + b * dd, vp + b * nv * dd,
                     NULL, zp + b * nc, zp + (nb + b) * nc,
                     &h_[0, 0], &ops_[0, 0, 0], &opsd_[0, 0, 0], &amp_[0, 0],
                     &kdec_[0, 0], NULL, ws, dt)


def heun_step_nonlinear(u, ui, v, ysh, xi, eta1, xidec, h_op, ops, ops_dag,
                        amp, kdec, psi0, double dt):
    _check(u, ui, v, xi)
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui, xi_ = xi, y_ = ysh
    cdef cplx[:, :, :, :, ::1] v_ = v
    cdef const cplx[:, :, ::1] e1_ = eta1
    cdef const cplx[:, ::1] xidec_ = xidec, h_ = h_op, kdec_ = kdec
    cdef const cplx[:, :, ::1] ops_ = ops, opsd_ = ops_dag
    cdef const double[:, ::1] amp_ = amp
    cdef const cplx[:, ::1] psi0_ = np.ascontiguousarray(psi0, dtype=complex)
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int nc = ops.shape[0], m = v.shape[2]
    cdef int dd = d * d, nv = nc * m
    cdef int nstate = 2 * dd + nv * dd + nv

    zbuf = np.empty((2, nb, nc), dtype=complex)
    cdef cplx[:, :, ::1] z_ = zbuf
    wsbuf = np.empty(4 * nstate + 3 * dd + 3 * d, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf

    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef cplx* vp = &v_[0, 0, 0, 0, 0]
    cdef cplx* yp = &y_[0, 0, 0]
    cdef cplx* xip = &xi_[0, 0, 0]
    cdef cplx* zp = &z_[0, 0, 0]
    cdef cplx* ws = &ws_[0]
    cdef int b
    with nogil:
        sum_noise(xip, zp, nb, nc, m)
        advance_noise(xip, &xidec_[0, 0], &e1_[0, 0, 0], zp + nb * nc, nb, nc, m)
        for b in range(nb):
            heun_one(True, d, nc, m, up + b * dd, uip + b * dd, vp + b * nv * dd,
                     yp + b * nv, zp + b * nc, zp + (nb + b) * nc,
                     &h_[0, 0], &ops_[0, 0, 0], &opsd_[0, 0, 0], &amp_[0, 0],
                     &kdec_[0, 0], &psi0_[0, 0] + b * d, ws, dt)


def refine_inverse(u, ui):
    """Batched Newton touch-up: U^-1 <- U^-1 (2 - U U^-1)."""
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int dd = d * d
    wsbuf = np.empty(2 * dd, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf
    cdef cplx* t1 = &ws_[0]
    cdef cplx* t2 = t1 + dd
    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef int b, i, j
    with nogil:
        for b in range(nb):
            pmat_mul(t1, up + b * dd, uip + b * dd, d)
            for i in range(dd):
                t1[i] = -t1[i]
            for i in range(d):
                t1[i * d + i] = t1[i * d + i] + 2
            pmat_mul(t2, uip + b * dd, t1, d)
            pcopy(uip + b * dd, t2, dd)


def rebase(u, ui, v, psi0):
    """Fold the current propagator into the anchors, exactly.

    psi0 <- U psi0, V <- U V U^-1, then U = U^-1 = identity.
    """
    cdef cplx[:, :, ::1] u_ = u, ui_ = ui
    cdef cplx[:, :, :, :, ::1] v_ = v
    cdef cplx[:, ::1] p_ = psi0
    cdef int nb = u.shape[0], d = u.shape[1]
    cdef int nc = v.shape[1], m = v.shape[2]
    cdef int dd = d * d, nv = nc * m
    wsbuf = np.empty(2 * dd + d, dtype=complex)
    cdef cplx[::1] ws_ = wsbuf
    cdef cplx* t1 = &ws_[0]
    cdef cplx* t2 = t1 + dd
    cdef cplx* tv = t2 + dd
    cdef cplx* up = &u_[0, 0, 0]
    cdef cplx* uip = &ui_[0, 0, 0]
    cdef cplx* vp = &v_[0, 0, 0, 0, 0]
    cdef cplx* pp = &p_[0, 0]
    cdef int b, k, i, j
    cdef cplx acc
    with nogil:
        for b in range(nb):
            for i in range(d):
                acc = 0
                for j in range(d):
                    acc = acc + up[b * dd + i * d + j] * pp[b * d + j]
                tv[i] = acc
            for i in range(d):
                pp[b * d + i] = tv[i]
            for k in range(nv):
                pmat_mul(t1, up + b * dd, vp + (b * nv + k) * dd, d)
                pmat_mul(t2, t1, uip + b * dd, d)
                pcopy(vp + (b * nv + k) * dd, t2, dd)
            for i in range(d):
                for j in range(d):
                    up[b * dd + i * d + j] = 1 if i == j else 0
                    uip[b * dd + i * d + j] = 1 if i == j else 0
