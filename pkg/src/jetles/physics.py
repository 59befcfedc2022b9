"""Thermodynamic closures, transport properties and flux vectors.

All functions are vectorised: conservative inputs carry the five components on
the leading axis, any trailing shape is allowed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowConfig, InvalidStateError


@dataclass(frozen=True)
class PrimitiveState:
    rho: float
    u: tuple
    p: float
    t: float

    def __post_init__(self):
        if not (self.rho > 0 and self.p > 0 and self.t > 0):
            raise InvalidStateError(f"non-physical primitive state {self}")

    @classmethod
    def from_rho_u_p(cls, rho, u, p, cfg: FlowConfig) -> "PrimitiveState":
        return cls(float(rho), tuple(float(v) for v in u), float(p), float(p / (rho * cfg.r_gas)))

    def conservative(self, cfg: FlowConfig) -> np.ndarray:
        return primitive_to_conservative(self.rho, np.asarray(self.u, dtype=float), self.p, cfg)

    def sound_speed(self, cfg: FlowConfig) -> float:
        return float(np.sqrt(cfg.gamma * self.p / self.rho))


@dataclass
class ViscousTerms:
    """Stress tensor (full symmetric 3x3 layout), heat flux, mu and kappa."""

    tau: np.ndarray
    qflux: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray


def freestream_state(cfg: FlowConfig) -> PrimitiveState:
    """Quiescent ambient state: rho = 1, T = t_ref, zero velocity."""
    rho = 1.0
    t = cfg.t_ref
    return PrimitiveState(rho, (0.0, 0.0, 0.0), rho * cfg.r_gas * t, t)


def jet_state(cfg: FlowConfig) -> PrimitiveState:
    """Flat-hat jet-exit state from the Mach number and the PR/TR ratios."""
    amb = freestream_state(cfg)
    t = cfg.temperature_ratio * amb.t
    p = cfg.pressure_ratio * amb.p
    rho = p / (cfg.r_gas * t)
    u = cfg.mach_jet * np.sqrt(cfg.gamma * cfg.r_gas * t)
    return PrimitiveState(rho, (float(u), 0.0, 0.0), p, t)


def sutherland_viscosity(t, cfg: FlowConfig):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0.0)):
        raise InvalidStateError("Sutherland law needs positive temperature")
    mu = cfg.mu_ref * (t / cfg.t_ref) ** 1.5 * (cfg.t0_ref + cfg.s1) / (t + cfg.s1)
    return mu if mu.ndim else float(mu)


def primitive_to_conservative(rho, u, p, cfg: FlowConfig) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    ke = 0.5 * rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
    e = p / (cfg.gamma - 1.0) + ke
    return np.stack([rho, rho * u[0], rho * u[1], rho * u[2], np.broadcast_to(e, rho.shape)])


def velocity(q: np.ndarray) -> np.ndarray:
    return np.stack([q[1] / q[0], q[2] / q[0], q[3] / q[0]])


def pressure_from_conservative(q, cfg: FlowConfig, check: bool = True):
    """p = (gamma - 1) (e - rho |u|^2 / 2)."""
    q = np.asarray(q, dtype=float)
    rho = q[0]
    if check and np.any(~(rho > 0.0)):
        raise InvalidStateError("non-positive density", index=_first_bad(rho))
    u1, u2, u3 = q[1] / rho, q[2] / rho, q[3] / rho
    p = (cfg.gamma - 1.0) * (q[4] - 0.5 * rho * (u1 * u1 + u2 * u2 + u3 * u3))
    if check and np.any(~(p > 0.0)):
        raise InvalidStateError("non-positive pressure", index=_first_bad(p))
    return p if p.ndim else float(p)


def temperature_from_state(p, rho, cfg: FlowConfig):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0.0)):
        raise InvalidStateError("non-positive density")
    t = np.asarray(p, dtype=float) / (rho * cfg.r_gas)
    return t if t.ndim else float(t)


def _first_bad(a):
    a = np.asarray(a)
    if a.ndim == 0:
        return ()
    return tuple(int(i) for i in np.argwhere(~(a > 0.0))[0])


def viscous_terms(grad_u, grad_t, t, cfg: FlowConfig, mu=None) -> ViscousTerms:
    """Stokes-hypothesis stress and Fourier heat flux.

    ``grad_u[i, j]`` is d u_i / d x_j and ``grad_t[j]`` is dT / d x_j.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    grad_t = np.asarray(grad_t, dtype=float)
    if not (np.all(np.isfinite(grad_u)) and np.all(np.isfinite(grad_t))):
        raise ValueError("velocity and temperature gradients must be finite")
    if mu is None:
        mu = sutherland_viscosity(t, cfg)
    kappa = mu * cfg.cp / cfg.prandtl
    div = grad_u[0, 0] + grad_u[1, 1] + grad_u[2, 2]
    third = (2.0 / 3.0) * div
    tau = np.empty_like(grad_u)
    for i in range(3):
        tau[i, i] = mu * (2.0 * grad_u[i, i] - third)
        for j in range(i + 1, 3):
            tau[i, j] = mu * (grad_u[i, j] + grad_u[j, i])
            tau[j, i] = tau[i, j]
    qflux = -kappa * grad_t
    return ViscousTerms(tau, qflux, mu, kappa)


def inviscid_flux(q, cfg: FlowConfig, direction: int, p=None) -> np.ndarray:
    """Cartesian inviscid flux along axis ``direction`` (0, 1 or 2)."""
    q = np.asarray(q, dtype=float)
    if p is None:
        p = pressure_from_conservative(q, cfg)
    uj = q[1 + direction] / q[0]
    out = np.empty_like(q)
    out[0] = q[1 + direction]
    for i in range(3):
        out[1 + i] = q[1 + i] * uj
    out[1 + direction] += p
    out[4] = (q[4] + p) * uj
    return out


def viscous_flux(vt: ViscousTerms, u, direction: int) -> np.ndarray:
    """[0, tau_ij, tau_ij u_i - q_j] for column j = ``direction``."""
    u = np.asarray(u, dtype=float)
    tau = vt.tau
    j = direction
    out = np.empty((5,) + np.shape(tau[0, 0]))
    out[0] = 0.0
    for i in range(3):
        out[1 + i] = tau[i, j]
    out[4] = tau[0, j] * u[0] + tau[1, j] * u[1] + tau[2, j] * u[2] - vt.qflux[j]
    return out
