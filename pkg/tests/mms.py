"""Manufactured smooth states and their exact flux divergences (sympy)."""

import functools

import numpy as np
import sympy as sp

X = sp.symbols("x0:3")
L = 2 * sp.pi


def _fields():
    x, y, z = X
    k = 2 * sp.pi / L
    rho = 1 + sp.Rational(1, 10) * sp.sin(k * x) * sp.cos(k * y) + sp.Rational(1, 20) * sp.sin(k * z)
    u = (sp.Rational(1, 2) + sp.Rational(1, 10) * sp.cos(k * y) * sp.sin(k * z),
         sp.Rational(1, 10) * sp.sin(k * x + k * z),
         sp.Rational(-1, 10) * sp.cos(k * x) * sp.sin(k * y))
    p = sp.Rational(1, 2) + sp.Rational(1, 20) * sp.cos(k * x) * sp.cos(k * z) + sp.Rational(1, 30) * sp.sin(k * y)
    return rho, u, p


@functools.lru_cache(maxsize=None)
def exact_rhs(gamma, r_gas, mu_ref, t_ref, t0_ref, s1, cp, prandtl):
    """Lambdified (state, inviscid divergence, viscous divergence) functions."""
    rho, u, p = _fields()
    e = p / (gamma - 1) + rho * (u[0] ** 2 + u[1] ** 2 + u[2] ** 2) / 2
    q = [rho, rho * u[0], rho * u[1], rho * u[2], e]
    inv = [0] * 5
    for j in range(3):
        flux = [rho * u[j]] + [rho * u[i] * u[j] + (p if i == j else 0) for i in range(3)] + [(e + p) * u[j]]
        for c in range(5):
            inv[c] += sp.diff(flux[c], X[j])
    t = p / (rho * r_gas)
    mu = mu_ref * (t / t_ref) ** sp.Rational(3, 2) * (t0_ref + s1) / (t + s1)
    kappa = mu * cp / prandtl
    gu = [[sp.diff(u[i], X[j]) for j in range(3)] for i in range(3)]
    div = gu[0][0] + gu[1][1] + gu[2][2]
    tau = [[mu * (gu[i][j] + gu[j][i]) - (sp.Rational(2, 3) * mu * div if i == j else 0)
            for j in range(3)] for i in range(3)]
    qf = [-kappa * sp.diff(t, X[j]) for j in range(3)]
    vis = [0] * 5
    for j in range(3):
        flux = [0] + [tau[i][j] for i in range(3)] + [sum(u[i] * tau[i][j] for i in range(3)) - qf[j]]
        for c in range(5):
            vis[c] += sp.diff(flux[c], X[j])
    f_state = sp.lambdify(X, q, "numpy")
    f_inv = sp.lambdify(X, inv, "numpy")
    f_vis = sp.lambdify(X, vis, "numpy")
    return f_state, f_inv, f_vis


def evaluate(fn, xyz):
    out = fn(xyz[0], xyz[1], xyz[2])
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), xyz[0].shape) for v in out])
