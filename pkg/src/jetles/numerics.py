"""Spatial operators, right-hand-side assembly and five-stage time marching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    EXCHANGE,
    FRINGE,
    NCOMP,
    PERIODIC,
    SUPERPOSED,
    ConservativeField,
    CurvilinearBlock,
    FlowConfig,
    InvalidStateError,
    central_derivative,
    compute_metrics,
    fill_pads,
    interior,
)
from .physics import pressure_from_conservative, sutherland_viscosity, viscous_terms

G = FRINGE
DEFAULT_BACKEND = "numba"
RK5_ALPHAS = (1.0 / 4.0, 1.0 / 6.0, 3.0 / 8.0, 1.0 / 2.0, 1.0)

__all__ = [
    "RkScheme",
    "RhsField",
    "StageHooks",
    "Stepper",
    "central_derivative",
    "directional_dissipation",
    "artificial_dissipation",
    "assemble_rhs",
    "rk5_advance",
]


@dataclass(frozen=True)
class RkScheme:
    alphas: tuple = RK5_ALPHAS

    def __post_init__(self):
        if len(self.alphas) != 5:
            raise ValueError("the scheme has exactly five stages")
        if self.alphas[-1] != 1.0:
            raise ValueError("final stage coefficient must be 1")

    @property
    def stages(self) -> int:
        return len(self.alphas)


RK5 = RkScheme()


@dataclass
class RhsField:
    rhs: np.ndarray


def _sl(axis, sl, lead=1):
    idx = [slice(None)] * lead + [slice(G, -G)] * 3
    idx[lead + axis] = sl
    return tuple(idx)


def pressure_sensor(p: np.ndarray, axis: int) -> np.ndarray:
    """Normalised second difference of pressure at nodes G-1 .. G+n along ``axis``."""
    n = p.shape[axis] - 2 * G
    lo, mid, hi = (p[_sl(axis, slice(G - 2 + s, G + n + s), 0)] for s in (0, 1, 2))
    # magnitudes keep the sensor bounded where extrapolated pads overshoot
    return np.abs(hi - 2.0 * mid + lo) / (np.abs(hi) + 2.0 * np.abs(mid) + np.abs(lo))


def directional_dissipation(q: np.ndarray, p: np.ndarray, lam: np.ndarray, axis: int,
                            k2: float, k4: float) -> np.ndarray:
    """Blended second/fourth-difference dissipation along one index direction.

    ``q`` is a padded (C, X, Y, Z) array, ``p`` the padded pressure (sensor),
    ``lam`` the padded spectral radius along ``axis``.  Returns the interior
    contribution d[i+1/2] - d[i-1/2] with
    d = lam * (eps2 * dq - eps4 * d3q), eps2 = k2 * nu, eps4 = max(0, k4 - eps2).
    """
    n = q.shape[1 + axis] - 2 * G
    qm1, q0, qp1, qp2 = (q[_sl(axis, slice(G - 2 + s, G + n - 1 + s))] for s in range(4))
    nu = pressure_sensor(p, axis)
    lo_nu = nu[_node_range(axis, 0, n + 1)]
    hi_nu = nu[_node_range(axis, 1, n + 2)]
    eps2 = k2 * np.maximum(lo_nu, hi_nu)
    eps4 = np.maximum(0.0, k4 - eps2)
    lam_lo = lam[_sl(axis, slice(G - 1, G + n), 0)]
    lam_hi = lam[_sl(axis, slice(G, G + n + 1), 0)]
    lam_half = 0.5 * (lam_lo + lam_hi)
    d = (lam_half * eps2) * (qp1 - q0) - (lam_half * eps4) * (qp2 - 3.0 * qp1 + 3.0 * q0 - qm1)
    idx_hi = [slice(None)] * 4
    idx_lo = [slice(None)] * 4
    idx_hi[1 + axis] = slice(1, None)
    idx_lo[1 + axis] = slice(None, -1)
    return d[tuple(idx_hi)] - d[tuple(idx_lo)]


def _node_range(axis, start, stop):
    idx = [slice(None)] * 3
    idx[axis] = slice(start, stop)
    return tuple(idx)


def spectral_radius(cof_row: np.ndarray, u: np.ndarray, c: np.ndarray) -> np.ndarray:
    """|contravariant velocity| + c * |metric row|, both scaled by 1/J."""
    un = cof_row[0] * u[0] + cof_row[1] * u[1] + cof_row[2] * u[2]
    norm = np.sqrt(cof_row[0] * cof_row[0] + cof_row[1] * cof_row[1] + cof_row[2] * cof_row[2])
    return np.abs(un) + c * norm


def artificial_dissipation(q: ConservativeField, block: CurvilinearBlock, cfg: FlowConfig,
                           p: Optional[np.ndarray] = None) -> np.ndarray:
    """Sum over directions of the anisotropically scaled dissipation (interior)."""
    arr = q.q
    if p is None:
        p = pressure_from_conservative(arr, cfg)
    rho = arr[0]
    u = arr[1:4] / rho
    c = np.sqrt(cfg.gamma * np.abs(p / rho))
    total = None
    for a in range(3):
        lam = spectral_radius(block.cofactors[a], u, c)
        da = directional_dissipation(arr, p, lam, a, cfg.k2, cfg.k4)
        total = da if total is None else total + da
    return total


def velocity_temperature_gradients(arr: np.ndarray, block: CurvilinearBlock, cfg: FlowConfig,
                                   p: np.ndarray) -> np.ndarray:
    """Cartesian gradients of (u, v, w, T): array (4, 3, X, Y, Z)."""
    rho = arr[0]
    phi = np.empty((4,) + rho.shape)
    phi[0:3] = arr[1:4] / rho
    phi[3] = p / (rho * cfg.r_gas)
    dphi = [central_derivative(phi, a) for a in range(3)]
    m = block.metrics
    grad = np.empty((4, 3) + rho.shape)
    for b in range(3):
        grad[:, b] = m[0, b] * dphi[0] + m[1, b] * dphi[1] + m[2, b] * dphi[2]
    return grad


def _jacobian_safe(block):
    return np.where(block.singular, 0.0, np.where(np.isinf(block.jacobian), 0.0, block.jacobian))


def assemble_rhs(q: ConservativeField, block: CurvilinearBlock, cfg: FlowConfig, *,
                 viscous: bool = True, dissipation: bool = True,
                 sync_gradients: Optional[Callable[[np.ndarray], None]] = None,
                 mask: Optional[np.ndarray] = None, backend: str = DEFAULT_BACKEND) -> RhsField:
    """Right-hand side J * (sum_a d(E_a - F_a)/d xi_a - D) at interior nodes.

    ``E_a``/``F_a`` are the contravariant inviscid/viscous fluxes (metric
    cofactors times Cartesian fluxes), ``D`` the artificial dissipation.  The
    time derivative of Q is minus this quantity.  ``sync_gradients`` fills the
    fringe of the (12, X, Y, Z) gradient array (the viscous-term exchange);
    ``mask`` zeroes nodes owned by boundary rules.  ``backend`` selects the
    compiled loops ("numba") or the array formulation ("numpy"); both give
    identical bits.
    """
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if block.cofactors is None:
        block = compute_metrics(block)
    arr = q.q
    rho = arr[0]
    p = pressure_from_conservative(arr, cfg, check=False)
    _check_interior(arr, p, block)
    u = arr[1:4] / rho

    vt = None
    if viscous:
        t = p / (rho * cfg.r_gas)
        if backend == "numba":
            from . import _kernels
            phi = np.empty((4,) + rho.shape)
            phi[0:3] = u
            phi[3] = t
            grad = np.empty((4, 3) + rho.shape)
            _kernels.gradients(phi, block.metrics, grad)
        else:
            grad = velocity_temperature_gradients(arr, block, cfg, p)
        if sync_gradients is not None:
            sync_gradients(grad.reshape((12,) + rho.shape))
        mu = sutherland_viscosity(np.abs(t), cfg)
        vt = viscous_terms(grad[0:3], grad[3], t, cfg, mu=mu)

    jac = _jacobian_safe(block)
    if backend == "numba":
        from . import _kernels
        h = np.empty((3, NCOMP) + rho.shape)
        lam = np.empty((3,) + rho.shape)
        tau = vt.tau if viscous else np.zeros((3, 3, 1, 1, 1))
        qflux = vt.qflux if viscous else np.zeros((3, 1, 1, 1))
        _kernels.node_fluxes(arr, p, u, block.cofactors, tau, qflux, viscous, cfg.gamma, h, lam)
        a2 = np.empty_like(lam)
        a4 = np.empty_like(lam)
        if dissipation:
            _kernels.half_coefficients(p, lam, cfg.k2, cfg.k4, a2, a4)
        rhs = np.empty((NCOMP,) + block.dims)
        _kernels.assemble(arr, h, a2, a4, jac, dissipation, rhs)
    else:
        rhs = interior(jac) * _flux_balance(q, block, cfg, p, u, vt, dissipation)
    if mask is not None:
        rhs[:, mask] = 0.0
    return RhsField(rhs)


def _flux_balance(q, block, cfg, p, u, vt, dissipation):
    arr = q.q
    rho = arr[0]
    cof = block.cofactors
    dflux = None
    for a in range(3):
        ca = cof[a]
        ua = ca[0] * u[0] + ca[1] * u[1] + ca[2] * u[2]
        h = np.empty((NCOMP,) + rho.shape)
        h[0] = rho * ua
        for i in range(3):
            h[1 + i] = arr[1 + i] * ua + ca[i] * p
        h[4] = (arr[4] + p) * ua
        if vt is not None:
            work = None
            for i in range(3):
                fv = ca[0] * vt.tau[i, 0] + ca[1] * vt.tau[i, 1] + ca[2] * vt.tau[i, 2]
                h[1 + i] -= fv
                tw = u[i] * fv
                work = tw if work is None else work + tw
            heat = ca[0] * vt.qflux[0] + ca[1] * vt.qflux[1] + ca[2] * vt.qflux[2]
            h[4] -= work - heat
        n = rho.shape[a] - 2 * G
        dh = 0.5 * (h[_sl(a, slice(G + 1, G + n + 1))] - h[_sl(a, slice(G - 1, G + n - 1))])
        dflux = dh if dflux is None else dflux + dh
    if dissipation:
        dflux = dflux - artificial_dissipation(q, block, cfg, p=p)
    return dflux


def _check_interior(arr, p, block):
    # pads at physical boundaries are extrapolated and may overshoot; only
    # owned nodes have to be physical
    for name, field_ in (("density", arr[0]), ("pressure", p)):
        inner = interior(field_)
        bad = ~(inner > 0.0)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            gidx = tuple(i + o for i, o in zip(idx, block.global_offset))
            raise InvalidStateError(f"non-positive {name} at node {gidx}", index=gidx)


def _global_index(block, index, padded=False):
    if index is None or len(index) < 3:
        return index
    idx = index[-3:]
    if padded:
        idx = tuple(i - G for i in idx)
    return tuple(int(i) + o for i, o in zip(idx, block.global_offset))


@dataclass
class StageHooks:
    """Callbacks driving one time step; defaults are no-ops and a zero RHS."""

    exchange: Callable[[ConservativeField], None] = lambda q: None
    rhs: Callable[[ConservativeField], np.ndarray] = lambda q: np.zeros_like(q.inner)
    boundary: Callable[[ConservativeField], None] = lambda q: None
    validate: Callable[[ConservativeField, int], None] = lambda q, stage: None


def rk5_advance(q: ConservativeField, hooks: StageHooks, cfg: FlowConfig,
                scheme: RkScheme = RK5) -> ConservativeField:
    """One step of q(k) = q(n) - alpha_k * dt * RHS(q(k-1)), k = 1..5, in place.

    Each stage synchronises the fringe, evaluates the RHS, updates interior
    nodes and re-imposes boundary conditions before the next exchange.
    """
    q0 = q.inner.copy()
    for stage, alpha in enumerate(scheme.alphas):
        hooks.exchange(q)
        try:
            r = hooks.rhs(q)
        except InvalidStateError as exc:
            exc.stage = stage
            raise
        rhs = r.rhs if isinstance(r, RhsField) else r
        coef = alpha * cfg.dt
        np.subtract(q0, coef * rhs, out=q.inner)
        hooks.boundary(q)
        hooks.validate(q, stage)
    return q


class Stepper:
    """Time integration of one block (a partition or the whole domain).

    ``exchanger`` (see :mod:`jetles.exchange`) fills fringes on sides whose pad
    mode is ``exchange`` and provides the centreline ring reduction; without
    one every side must be filled locally.
    """

    def __init__(self, block: CurvilinearBlock, cfg: FlowConfig, bset=None, exchanger=None,
                 scheme: RkScheme = RK5, viscous: bool = True, dissipation: bool = True,
                 overlap: Optional[Callable[[], None]] = None, backend: str = DEFAULT_BACKEND):
        from .boundary import dirichlet_mask

        if block.cofactors is None:
            block = compute_metrics(block)
        self.block = block
        self.cfg = cfg
        self.bset = bset.for_block(block) if bset is not None else None
        self.exchanger = exchanger
        self.scheme = scheme
        self.viscous = viscous
        self.dissipation = dissipation
        self.overlap = overlap
        self.backend = backend
        self.mask = dirichlet_mask(block, self.bset) if self.bset is not None else None
        self.iteration = 0
        self.time = 0.0
        modes = block.pad_modes
        if exchanger is None and any(m == EXCHANGE for pair in modes for m in pair):
            raise ValueError("block has exchange sides but no exchanger")

    # -- fringe handling -------------------------------------------------

    def _fill_axis(self, arr, axis):
        modes = self.block.pad_modes[axis]
        if modes == (SUPERPOSED, SUPERPOSED):
            from .exchange import local_wrap
            # same arithmetic as a one-partition azimuthal exchange
            local_wrap(arr, axis)
            return
        for side in (0, 1):
            if modes[side] != EXCHANGE:
                fill_pads(arr, axis, side, modes[side])

    def synchronize(self, arr: np.ndarray, name: str = "q") -> None:
        """Axial fringe, then azimuthal (carrying corners), then radial pads."""
        ex = self.exchanger
        modes = self.block.pad_modes
        for axis in (0, 2):
            if ex is not None and EXCHANGE in modes[axis]:
                reqs = ex.post(arr, axis, name)
                if self.overlap is not None:
                    self.overlap()
                ex.wait(reqs)
            self._fill_axis(arr, axis)
        self._fill_axis(arr, 1)

    # -- stage pieces ----------------------------------------------------

    def exchange(self, q: ConservativeField) -> None:
        self.synchronize(q.q, "q")
        if self.exchanger is not None and self.exchanger.debug:
            self.exchanger.check_fresh()

    def rhs(self, q: ConservativeField) -> RhsField:
        return assemble_rhs(
            q, self.block, self.cfg, viscous=self.viscous, dissipation=self.dissipation,
            sync_gradients=lambda g: self.synchronize(g, "grad"),
            mask=self.mask, backend=self.backend,
        )

    def apply_boundaries(self, q: ConservativeField) -> None:
        from .boundary import apply_boundaries

        if self.bset is None:
            return
        reducer = self.exchanger.centerline if self.exchanger is not None else None
        apply_boundaries(q, self.block, self.bset, self.cfg, reducer)

    def validate(self, q: ConservativeField, stage: int) -> None:
        inner = q.inner
        rho = inner[0]
        bad = ~(rho > 0.0)
        if not bad.any():
            p = pressure_from_conservative(inner, self.cfg, check=False)
            bad = ~(p > 0.0)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            gidx = tuple(i + o for i, o in zip(idx, self.block.global_offset))
            raise InvalidStateError(
                f"invalid state at stage {stage + 1} of iteration {self.iteration + 1}, node {gidx}",
                index=gidx, stage=stage)

    def hooks(self) -> StageHooks:
        return StageHooks(self.exchange, self.rhs, self.apply_boundaries, self.validate)

    # -- driving ---------------------------------------------------------

    def initialize(self, q: ConservativeField) -> ConservativeField:
        self.apply_boundaries(q)
        return q

    def step(self, q: ConservativeField) -> ConservativeField:
        rk5_advance(q, self.hooks(), self.cfg, self.scheme)
        self.iteration += 1
        self.time += self.cfg.dt
        return q

    def run(self, q: ConservativeField, steps: int, callback=None) -> ConservativeField:
        for _ in range(steps):
            self.step(q)
            if callback is not None:
                callback(self, q)
        return q


def uniform_field(block: CurvilinearBlock, cons: np.ndarray) -> ConservativeField:
    q = ConservativeField.zeros(block.dims)
    q.q[...] = np.asarray(cons, dtype=float).reshape(NCOMP, 1, 1, 1)
    return q
