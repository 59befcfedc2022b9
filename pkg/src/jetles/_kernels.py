"""Compiled loops behind :func:`jetles.numerics.assemble_rhs`.

Each kernel performs, node by node, the same floating-point operations in the
same order as the array formulation in :mod:`jetles.numerics`, so both
backends agree bit for bit.  No fast-math flags are used.
"""

from __future__ import annotations

import numpy as np
from numba import njit

G = 2


@njit(cache=True)
def _d1(f, c, i, j, k, axis, n):
    """Index derivative of f[c] along ``axis`` at (i, j, k); one-sided at array ends."""
    di = 1 if axis == 0 else 0
    dj = 1 if axis == 1 else 0
    dk = 1 if axis == 2 else 0
    pos = i if axis == 0 else (j if axis == 1 else k)
    if pos == 0:
        return 0.5 * ((-3.0 * f[c, i, j, k] + 4.0 * f[c, i + di, j + dj, k + dk])
                      - f[c, i + 2 * di, j + 2 * dj, k + 2 * dk])
    if pos == n - 1:
        return 0.5 * ((3.0 * f[c, i, j, k] - 4.0 * f[c, i - di, j - dj, k - dk])
                      + f[c, i - 2 * di, j - 2 * dj, k - 2 * dk])
    return (f[c, i + di, j + dj, k + dk] - f[c, i - di, j - dj, k - dk]) * 0.5


@njit(cache=True)
def gradients(phi, metrics, out):
    """out[c, b] = sum_a metrics[a, b] * d phi[c] / d xi_a (order a = 0, 1, 2)."""
    nc, nx, ny, nz = phi.shape
    for c in range(nc):
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    d0 = _d1(phi, c, i, j, k, 0, nx)
                    d1 = _d1(phi, c, i, j, k, 1, ny)
                    d2 = _d1(phi, c, i, j, k, 2, nz)
                    for b in range(3):
                        out[c, b, i, j, k] = (metrics[0, b, i, j, k] * d0
                                              + metrics[1, b, i, j, k] * d1) + metrics[2, b, i, j, k] * d2


@njit(cache=True)
def node_fluxes(q, p, u, cof, tau, qflux, viscous, gamma, h, lam):
    """Contravariant fluxes h[a, :] and spectral radii lam[a] at every node."""
    nx, ny, nz = p.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                rho = q[0, i, j, k]
                pp = p[i, j, k]
                u0 = u[0, i, j, k]
                u1 = u[1, i, j, k]
                u2 = u[2, i, j, k]
                c = np.sqrt(gamma * np.abs(pp / rho))
                for a in range(3):
                    c0 = cof[a, 0, i, j, k]
                    c1 = cof[a, 1, i, j, k]
                    c2 = cof[a, 2, i, j, k]
                    ua = (c0 * u0 + c1 * u1) + c2 * u2
                    h[a, 0, i, j, k] = rho * ua
                    h[a, 1, i, j, k] = q[1, i, j, k] * ua + c0 * pp
                    h[a, 2, i, j, k] = q[2, i, j, k] * ua + c1 * pp
                    h[a, 3, i, j, k] = q[3, i, j, k] * ua + c2 * pp
                    h[a, 4, i, j, k] = (q[4, i, j, k] + pp) * ua
                    if viscous:
                        work = 0.0
                        for m in range(3):
                            fv = (c0 * tau[m, 0, i, j, k] + c1 * tau[m, 1, i, j, k]) + c2 * tau[m, 2, i, j, k]
                            h[a, 1 + m, i, j, k] = h[a, 1 + m, i, j, k] - fv
                            tw = u[m, i, j, k] * fv
                            work = tw if m == 0 else work + tw
                        heat = (c0 * qflux[0, i, j, k] + c1 * qflux[1, i, j, k]) + c2 * qflux[2, i, j, k]
                        h[a, 4, i, j, k] = h[a, 4, i, j, k] - (work - heat)
                    un = (c0 * u0 + c1 * u1) + c2 * u2
                    norm = np.sqrt((c0 * c0 + c1 * c1) + c2 * c2)
                    lam[a, i, j, k] = np.abs(un) + c * norm


@njit(cache=True)
def _sensor(p, i, j, k, a):
    if a == 0:
        lo, mid, hi = p[i - 1, j, k], p[i, j, k], p[i + 1, j, k]
    elif a == 1:
        lo, mid, hi = p[i, j - 1, k], p[i, j, k], p[i, j + 1, k]
    else:
        lo, mid, hi = p[i, j, k - 1], p[i, j, k], p[i, j, k + 1]
    return np.abs((hi - 2.0 * mid) + lo) / ((np.abs(hi) + 2.0 * np.abs(mid)) + np.abs(lo))


@njit(cache=True)
def half_coefficients(p, lam, k2, k4, a2, a4):
    """Second/fourth-difference weights lam_half*eps2 and lam_half*eps4.

    Stored at the lower node of each half point along every axis.
    """
    nx, ny, nz = p.shape
    dims = (nx, ny, nz)
    for a in range(3):
        di = 1 if a == 0 else 0
        dj = 1 if a == 1 else 0
        dk = 1 if a == 2 else 0
        n = dims[a]
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    pos = i if a == 0 else (j if a == 1 else k)
                    if pos < 1 or pos > n - 3:
                        a2[a, i, j, k] = 0.0
                        a4[a, i, j, k] = 0.0
                        continue
                    nu_lo = _sensor(p, i, j, k, a)
                    nu_hi = _sensor(p, i + di, j + dj, k + dk, a)
                    eps2 = k2 * max(nu_lo, nu_hi)
                    eps4 = max(0.0, k4 - eps2)
                    lh = 0.5 * (lam[a, i, j, k] + lam[a, i + di, j + dj, k + dk])
                    a2[a, i, j, k] = lh * eps2
                    a4[a, i, j, k] = lh * eps4


@njit(cache=True)
def _half_flux(q, a2, a4, c, i, j, k, a):
    """Dissipative flux between node (i, j, k) and its +1 neighbour along ``a``."""
    di = 1 if a == 0 else 0
    dj = 1 if a == 1 else 0
    dk = 1 if a == 2 else 0
    qm1 = q[c, i - di, j - dj, k - dk]
    q0 = q[c, i, j, k]
    qp1 = q[c, i + di, j + dj, k + dk]
    qp2 = q[c, i + 2 * di, j + 2 * dj, k + 2 * dk]
    return a2[a, i, j, k] * (qp1 - q0) - a4[a, i, j, k] * (((qp2 - 3.0 * qp1) + 3.0 * q0) - qm1)


@njit(cache=True)
def assemble(q, h, a2, a4, jac, dissipation, out):
    """out = jac * (sum_a central(h_a) - sum_a D_a) on interior nodes."""
    nc = q.shape[0]
    nx, ny, nz = out.shape[1], out.shape[2], out.shape[3]
    for c in range(nc):
        for ii in range(nx):
            i = ii + G
            for jj in range(ny):
                j = jj + G
                for kk in range(nz):
                    k = kk + G
                    f0 = 0.5 * (h[0, c, i + 1, j, k] - h[0, c, i - 1, j, k])
                    f1 = 0.5 * (h[1, c, i, j + 1, k] - h[1, c, i, j - 1, k])
                    f2 = 0.5 * (h[2, c, i, j, k + 1] - h[2, c, i, j, k - 1])
                    acc = (f0 + f1) + f2
                    if dissipation:
                        d0 = _half_flux(q, a2, a4, c, i, j, k, 0) - _half_flux(q, a2, a4, c, i - 1, j, k, 0)
                        d1 = _half_flux(q, a2, a4, c, i, j, k, 1) - _half_flux(q, a2, a4, c, i, j - 1, k, 1)
                        d2 = _half_flux(q, a2, a4, c, i, j, k, 2) - _half_flux(q, a2, a4, c, i, j, k - 1, 2)
                        acc = acc - ((d0 + d1) + d2)
                    out[c, ii, jj, kk] = jac[i, j, k] * acc
