"""Domain types, jet-domain grid generation and curvilinear metrics.

Every field array in the package uses the same padded layout: a leading
component axis followed by the three index directions (xi axial, eta radial,
zeta azimuthal), each padded by ``FRINGE`` layers on both sides.  Pads hold
either neighbour data (filled by the exchange module), a periodic wrap, or a
quadratic extrapolation of the interior at physical boundaries.  Central
differences taken on the padded array therefore reproduce second-order
one-sided closures at physical boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence, Tuple

import numpy as np

FRINGE = 2
NCOMP = 5
MIN_EXTENT = 4

# pad modes
EXTRAPOLATE = "extrapolate"
PERIODIC = "periodic"
SUPERPOSED = "superposed"
EXCHANGE = "exchange"

PadModes = Tuple[Tuple[str, str], Tuple[str, str], Tuple[str, str]]
JET_PAD_MODES: PadModes = (
    (EXTRAPOLATE, EXTRAPOLATE),
    (EXTRAPOLATE, EXTRAPOLATE),
    (SUPERPOSED, SUPERPOSED),
)

# Mesh family used by the scalability study: (nxi, neta, nzeta).
MESHES = {
    1: (32, 32, 361),
    2: (64, 32, 361),
    3: (64, 64, 361),
    4: (128, 64, 361),
    5: (128, 128, 361),
    6: (256, 128, 361),
    7: (256, 256, 361),
    8: (512, 256, 361),
    9: (512, 512, 361),
    10: (1024, 512, 361),
    11: (1024, 1024, 361),
    12: (2048, 1024, 361),
    13: (1700, 1700, 361),
}

DOMAIN_LENGTH = 30.0
DOMAIN_HEIGHT = 10.0


class InvalidStateError(ValueError):
    """Non-physical state (non-positive density, pressure or temperature)."""

    def __init__(self, message, index=None, stage=None):
        super().__init__(message)
        self.index = index
        self.stage = stage


class DegenerateCellError(ValueError):
    def __init__(self, index, det):
        super().__init__(f"non-positive Jacobian determinant {det!r} at node {index}")
        self.index = index
        self.det = det


@dataclass(frozen=True)
class FlowConfig:
    """Physical and numerical constants, all dimensionless.

    Reference quantities are the jet-exit diameter, the free-stream density and
    temperature and the jet-exit velocity.  With that choice the gas constant
    ``cp - cv`` is ``1 / (gamma * mach_jet**2)`` and the jet velocity is one.
    ``mu_ref``, ``cp`` and ``cv`` are derived from the other fields when left
    as ``None``.
    """

    gamma: float = 1.4
    prandtl: float = 0.72
    reynolds: float = 1.5744e6
    mach_jet: float = 1.4
    pressure_ratio: float = 1.0
    temperature_ratio: float = 1.0
    mu_ref: Optional[float] = None
    t_ref: float = 1.0
    t0_ref: float = 1.0
    s1: float = 110.4 / 288.15
    cp: Optional[float] = None
    cv: Optional[float] = None
    dt: float = 1.0e-4
    k2: float = 0.25
    k4: float = 1.0 / 64.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.mu_ref is None:
            object.__setattr__(self, "mu_ref", 1.0 / self.reynolds)
        if self.cp is None and self.cv is None:
            r_gas = 1.0 / (self.gamma * self.mach_jet**2)
            object.__setattr__(self, "cv", r_gas / (self.gamma - 1.0))
            object.__setattr__(self, "cp", self.gamma * self.cv)
        elif self.cp is None:
            object.__setattr__(self, "cp", self.gamma * self.cv)
        elif self.cv is None:
            object.__setattr__(self, "cv", self.cp / self.gamma)
        if not self.cp - self.cv > 0.0:
            raise ValueError("cp - cv must be positive")
        if abs(self.cp / self.cv - self.gamma) > 1e-12 * self.gamma:
            raise ValueError(f"cp/cv = {self.cp / self.cv!r} does not match gamma = {self.gamma!r}")
        for name in ("prandtl", "dt", "k4", "reynolds", "mu_ref", "t_ref", "t0_ref"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k2 < 0.0:
            raise ValueError(f"k2 must be non-negative, got {self.k2}")
        if self.s1 < 0.0:
            raise ValueError(f"s1 must be non-negative, got {self.s1}")

    @property
    def r_gas(self) -> float:
        return self.cp - self.cv

    def with_updates(self, **changes) -> "FlowConfig":
        # derived constants are recomputed unless explicitly given
        base = {f.name: getattr(self, f.name) for f in fields(self)}
        if "reynolds" in changes and "mu_ref" not in changes:
            base["mu_ref"] = None
        if ({"gamma", "mach_jet"} & changes.keys()) and not ({"cp", "cv"} & changes.keys()):
            base["cp"] = base["cv"] = None
        base.update(changes)
        return FlowConfig(**base)


def interior(arr: np.ndarray, g: int = FRINGE) -> np.ndarray:
    """View of the non-pad part of a padded array (last three axes)."""
    return arr[..., g:-g, g:-g, g:-g]


def padded_shape(dims: Sequence[int], g: int = FRINGE) -> Tuple[int, int, int]:
    return tuple(int(n) + 2 * g for n in dims)


def _axis_slice(ndim: int, axis: int, sl) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def fill_pads(arr: np.ndarray, axis: int, side: int, mode: str, shift=None, g: int = FRINGE) -> None:
    """Fill the pad layers of ``arr`` along spatial ``axis`` (0..2) in place.

    ``side`` is 0 for the low end and 1 for the high end.  ``shift`` is an
    optional per-component offset added to wrapped values (coordinate period).
    """
    ax = arr.ndim - 3 + axis
    n = arr.shape[ax] - 2 * g
    nd = arr.ndim

    def at(i):
        return arr[_axis_slice(nd, ax, i)]

    if mode == EXCHANGE:
        return
    if mode == EXTRAPOLATE:
        if n < 3:
            raise ValueError("extrapolation needs at least three interior layers")
        if side == 0:
            for p in range(g - 1, -1, -1):
                at(p)[...] = 3.0 * at(p + 1) - 3.0 * at(p + 2) + at(p + 3)
        else:
            for p in range(g + n, n + 2 * g):
                at(p)[...] = 3.0 * at(p - 1) - 3.0 * at(p - 2) + at(p - 3)
        return
    if mode == PERIODIC:
        period = n
    elif mode == SUPERPOSED:
        period = n - 1
    else:
        raise ValueError(f"unknown pad mode {mode!r}")
    if side == 0:
        for p in range(g):
            src = g + (p - g) % period
            at(p)[...] = at(src)
            if shift is not None:
                _shift(at(p), shift, -1)
    else:
        for p in range(g + n, n + 2 * g):
            src = g + (p - g) % period
            at(p)[...] = at(src)
            if shift is not None:
                _shift(at(p), shift, +1)


def _shift(view, shift, sign):
    shift = np.asarray(shift, dtype=float)
    view += sign * shift.reshape((-1,) + (1,) * (view.ndim - 1))


def fill_all_pads(arr: np.ndarray, pad_modes: PadModes, periods=None, order=(0, 2, 1)) -> None:
    for axis in order:
        for side in (0, 1):
            shift = None if periods is None else periods[axis]
            fill_pads(arr, axis, side, pad_modes[axis][side], shift)


@dataclass
class ConservativeField:
    """Conservative state [rho, rho*u, rho*v, rho*w, e] on a padded block."""

    q: np.ndarray
    fringe_width: int = FRINGE

    def __post_init__(self):
        if self.fringe_width != FRINGE:
            raise ValueError(f"fringe width must be {FRINGE}")
        if self.q.ndim != 4 or self.q.shape[0] != NCOMP:
            raise ValueError(f"expected array of shape (5, X, Y, Z), got {self.q.shape}")

    @classmethod
    def zeros(cls, dims) -> "ConservativeField":
        return cls(np.zeros((NCOMP,) + padded_shape(dims)))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(s - 2 * FRINGE for s in self.q.shape[1:])

    @property
    def inner(self) -> np.ndarray:
        return interior(self.q)

    def copy(self) -> "ConservativeField":
        return ConservativeField(self.q.copy())


@dataclass
class CurvilinearBlock:
    """Structured block with padded node coordinates and metric terms.

    ``cofactors[a, b]`` holds the metric derivative d(xi_a)/d(x_b) divided by
    the Jacobian, ``jacobian`` is the inverse of det(dx/dxi).  Nodes where the
    mapping collapses (the jet centreline) are flagged in ``singular``; there
    ``metrics`` is zero and ``jacobian`` is infinite.
    """

    coords: np.ndarray
    global_offset: Tuple[int, int, int] = (0, 0, 0)
    global_dims: Optional[Tuple[int, int, int]] = None
    pad_modes: PadModes = JET_PAD_MODES
    periods: Optional[Tuple] = None
    metrics: Optional[np.ndarray] = None
    cofactors: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = None
    singular: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.global_dims is None:
            self.global_dims = self.dims

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(s - 2 * FRINGE for s in self.coords.shape[1:])

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def xyz(self) -> np.ndarray:
        return interior(self.coords)

    def touches(self, axis: int, side: int) -> bool:
        """True when this block's ``side`` along ``axis`` is a global boundary."""
        lo = self.global_offset[axis]
        if side == 0:
            return lo == 0
        return lo + self.dims[axis] == self.global_dims[axis]


def block_from_coords(xyz: np.ndarray, pad_modes: PadModes = JET_PAD_MODES, periods=None,
                      global_offset=(0, 0, 0), global_dims=None) -> CurvilinearBlock:
    """Wrap an unpadded (3, ni, nj, nk) coordinate array into a padded block."""
    xyz = np.asarray(xyz, dtype=float)
    coords = np.zeros((3,) + padded_shape(xyz.shape[1:]))
    interior(coords)[...] = xyz
    fill_all_pads(coords, pad_modes, periods)
    return CurvilinearBlock(coords, tuple(global_offset), global_dims, pad_modes, periods)


def generate_jet_grid(nxi: int, neta: int, nzeta: int, length: float = DOMAIN_LENGTH,
                      height: float = DOMAIN_HEIGHT) -> CurvilinearBlock:
    """Cylindrical jet domain: xi axial, eta radial (uniform from r=0), zeta azimuthal.

    The last azimuthal plane duplicates the first one bit for bit.
    """
    if min(nxi, neta, nzeta) < MIN_EXTENT:
        raise ValueError(f"grid extents must be at least {MIN_EXTENT}, got {(nxi, neta, nzeta)}")
    if not (length > 0 and height > 0):
        raise ValueError("length and height must be positive")
    x = length * np.arange(nxi) / (nxi - 1)
    r = height * np.arange(neta) / (neta - 1)
    theta = 2.0 * math.pi * np.arange(nzeta) / (nzeta - 1)
    xyz = np.empty((3, nxi, neta, nzeta))
    xyz[0] = x[:, None, None]
    xyz[1] = r[None, :, None] * np.cos(theta)[None, None, :]
    xyz[2] = r[None, :, None] * np.sin(theta)[None, None, :]
    xyz[:, :, :, -1] = xyz[:, :, :, 0]
    return block_from_coords(xyz, JET_PAD_MODES)


def generate_box_grid(shape, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
                      periodic=(False, False, False), warp: float = 0.0) -> CurvilinearBlock:
    """Cartesian (optionally sinusoidally warped) box, mainly for verification.

    Periodic axes carry no duplicated end plane; the coordinate period is
    ``n * spacing`` along that axis.
    """
    shape = tuple(int(n) for n in shape)
    axes = [origin[a] + spacing[a] * np.arange(shape[a]) for a in range(3)]
    grids = np.meshgrid(*axes, indexing="ij")
    xyz = np.stack(grids).astype(float)
    if warp:
        lengths = [spacing[a] * (shape[a] - 1 if not periodic[a] else shape[a]) for a in range(3)]
        s = [np.sin(2.0 * math.pi * (grids[a] - origin[a]) / lengths[a]) for a in range(3)]
        xyz[0] += warp * spacing[0] * s[1] * s[2]
        xyz[1] += warp * spacing[1] * s[0] * s[2]
        xyz[2] += warp * spacing[2] * s[0] * s[1]
    modes = tuple((PERIODIC, PERIODIC) if p else (EXTRAPOLATE, EXTRAPOLATE) for p in periodic)
    periods = tuple(
        tuple(spacing[a] * shape[a] if (p and b == a) else 0.0 for b in range(3))
        for a, p in enumerate(periodic)
    )
    return block_from_coords(xyz, modes, periods)


def central_derivative(f: np.ndarray, axis: int) -> np.ndarray:
    """Index-space first derivative along spatial ``axis`` (0..2).

    Interior points use (f[i+1] - f[i-1]) / 2; the two array ends use the
    one-sided second-order formula.
    """
    ax = f.ndim - 3 + axis
    n = f.shape[ax]
    if n < 3:
        raise ValueError(f"central difference needs extent >= 3 along axis {axis}, got {n}")
    out = np.empty_like(f, dtype=float)
    nd = f.ndim

    def s(sl):
        return _axis_slice(nd, ax, sl)

    np.subtract(f[s(slice(2, None))], f[s(slice(None, -2))], out=out[s(slice(1, -1))])
    out[s(slice(1, -1))] *= 0.5
    out[s(0)] = 0.5 * (-3.0 * f[s(0)] + 4.0 * f[s(1)] - f[s(2)])
    out[s(n - 1)] = 0.5 * (3.0 * f[s(n - 1)] - 4.0 * f[s(n - 2)] + f[s(n - 3)])
    return out


def _cross(a, b):
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def cross_cofactors(tangent: np.ndarray) -> np.ndarray:
    """Rows x_eta x x_zeta, x_zeta x x_xi, x_xi x x_eta (geometric face normals)."""
    return np.stack([
        _cross(tangent[1], tangent[2]),
        _cross(tangent[2], tangent[0]),
        _cross(tangent[0], tangent[1]),
    ])


def _determinant(tangent):
    row = _cross(tangent[1], tangent[2])
    return tangent[0, 0] * row[0] + tangent[0, 1] * row[1] + tangent[0, 2] * row[2]


def conservative_cofactors(coords: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """Metric cofactors in symmetric conservative form.

    Row ``a`` (with b, c the next two directions cyclically) has components

        cof[a, i] = 1/2 [d_c(x_k d_b x_j - x_j d_b x_k) - d_b(x_k d_c x_j - x_j d_c x_k)]

    with i, j, k cyclic.  Central differences commute, so sum_a d_a(cof[a])
    telescopes to round-off on any grid and a uniform flow stays uniform.
    The symmetric average keeps an axisymmetric grid axisymmetric.
    """
    cof = np.empty((3,) + tangent.shape[1:])
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            along_b = coords[k] * tangent[b, j] - coords[j] * tangent[b, k]
            along_c = coords[k] * tangent[c, j] - coords[j] * tangent[c, k]
            cof[a, i] = 0.5 * (central_derivative(along_b, c) - central_derivative(along_c, b))
    return cof


def compute_metrics(block: CurvilinearBlock) -> CurvilinearBlock:
    """Populate metric terms and Jacobian using the flux-operator stencil.

    The Jacobian comes from the cross-product determinant (exactly zero on a
    collapsed axis); metric cofactors use the conservative form so that the
    discrete metric divergence vanishes.

    Raises :class:`DegenerateCellError` for a non-positive determinant at an
    interior node that is not on a collapsed boundary face.
    """
    if min(block.dims) < 3:
        raise ValueError(f"block extents too small for metrics: {block.dims}")
    c = block.coords
    # tangent[a] = d x / d xi_a, shape (3, 3, ...)
    tangent = np.stack([central_derivative(c, a) for a in range(3)])
    det = _determinant(tangent)
    singular = det == 0.0
    inner_det = interior(det)
    inner_sing = interior(singular)
    bad = inner_det < 0.0
    if inner_sing.any():
        # collapse allowed only on non-periodic layers of the global boundary
        allowed = np.zeros_like(inner_sing)
        for a in range(3):
            for side in (0, 1):
                if block.touches(a, side) and block.pad_modes[a][side] not in (PERIODIC, SUPERPOSED):
                    sl = [slice(None)] * 3
                    sl[a] = 0 if side == 0 else -1
                    allowed[tuple(sl)] = True
        bad |= inner_sing & ~allowed
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        gidx = tuple(i + o for i, o in zip(idx, block.global_offset))
        raise DegenerateCellError(gidx, float(inner_det[idx]))
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = np.where(singular, np.inf, 1.0 / np.where(singular, 1.0, det))
        cof = conservative_cofactors(c, tangent)
        metrics = np.where(singular, 0.0, cof * np.where(singular, 0.0, jac))
    return replace(block, metrics=metrics, cofactors=cof, jacobian=jac, singular=singular)


def node_count(nxi: int, neta: int, nzeta: int) -> int:
    return nxi * neta * nzeta
