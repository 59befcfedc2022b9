"""Boundary treatments of the cylindrical jet domain.

Faces are named ``xi_lo`` (entrance), ``xi_hi`` (exit), ``eta_lo`` (axis),
``eta_hi`` (outer radius), ``zeta_lo``/``zeta_hi`` (periodic seam).  A face
kind is one of ``inlet``, ``farfield``, ``centerline``, ``periodic`` or
``interior`` (a partition face shared with a neighbour).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .core import FRINGE, ConservativeField, CurvilinearBlock, FlowConfig
from .physics import PrimitiveState, freestream_state, jet_state

INLET, FARFIELD, CENTERLINE, PERIODIC_FACE, INTERIOR = (
    "inlet", "farfield", "centerline", "periodic", "interior")
FACE_KINDS = (INLET, FARFIELD, CENTERLINE, PERIODIC_FACE, INTERIOR)
FACES = ("xi_lo", "xi_hi", "eta_lo", "eta_hi", "zeta_lo", "zeta_hi")
JET_FACES = {
    "xi_lo": INLET,
    "xi_hi": FARFIELD,
    "eta_lo": CENTERLINE,
    "eta_hi": FARFIELD,
    "zeta_lo": PERIODIC_FACE,
    "zeta_hi": PERIODIC_FACE,
}
# faces whose nodes are overwritten by a boundary rule (no RHS there)
DIRICHLET_KINDS = (INLET, FARFIELD, CENTERLINE)


def face_axis_side(face: str):
    name, side = face.split("_")
    return {"xi": 0, "eta": 1, "zeta": 2}[name], 0 if side == "lo" else 1


@dataclass
class BoundarySet:
    inlet_state: PrimitiveState
    freestream_state: PrimitiveState
    jet_radius: float = 0.5
    faces: Dict[str, str] = field(default_factory=lambda: dict(JET_FACES))

    def __post_init__(self):
        missing = set(FACES) - set(self.faces)
        if missing:
            raise ValueError(f"faces without a condition: {sorted(missing)}")
        unknown = {k: v for k, v in self.faces.items() if v not in FACE_KINDS}
        if unknown or set(self.faces) - set(FACES):
            raise ValueError(f"bad face assignment {self.faces}")

    def for_block(self, block: CurvilinearBlock) -> "BoundarySet":
        """Copy with faces not on the global boundary marked interior."""
        faces = {}
        for face in FACES:
            axis, side = face_axis_side(face)
            faces[face] = self.faces[face] if block.touches(axis, side) else INTERIOR
        return BoundarySet(self.inlet_state, self.freestream_state, self.jet_radius, faces)


def jet_boundaries(cfg: FlowConfig, jet_radius: float = 0.5) -> BoundarySet:
    return BoundarySet(jet_state(cfg), freestream_state(cfg), jet_radius)


def uniform_boundaries(state: PrimitiveState, jet_radius: float = 0.5) -> BoundarySet:
    """Boundary set whose inlet and free stream coincide (free-stream tests)."""
    return BoundarySet(state, state, jet_radius)


def _layer(axis, index):
    idx = [slice(FRINGE, -FRINGE)] * 3
    idx[axis] = index
    return (slice(None),) + tuple(idx)


def _face_index(block, axis, side, offset=0):
    n = block.dims[axis]
    return FRINGE + offset if side == 0 else FRINGE + n - 1 - offset


def face_normals(block: CurvilinearBlock, axis: int, side: int) -> np.ndarray:
    """Outward unit normals on a face from the cross-product cofactors.

    The geometric cross product is exactly zero on a collapsed axis; there the
    grid tangent along ``axis`` is used instead.
    """
    from .core import central_derivative, cross_cofactors

    idx = _face_index(block, axis, side)
    # a three-layer slab around the face keeps the stencil central along axis
    full = [slice(None)] * 4
    full[1 + axis] = slice(idx - 1, idx + 2)
    slab = block.coords[tuple(full)]
    layer = _layer(axis, 1)
    tangents = np.stack([central_derivative(slab, a) for a in range(3)])
    row = cross_cofactors(tangents)[axis][layer]
    norm = np.sqrt(row[0] ** 2 + row[1] ** 2 + row[2] ** 2)
    if np.any(norm == 0.0):
        tangent = tangents[axis][layer]
        tnorm = np.sqrt(tangent[0] ** 2 + tangent[1] ** 2 + tangent[2] ** 2)
        row = np.where(norm == 0.0, tangent, row)
        norm = np.where(norm == 0.0, tnorm, norm)
    sign = -1.0 if side == 0 else 1.0
    return sign * row / norm


def riemann_state(rho_i, u_i, p_i, fs: PrimitiveState, normal, cfg: FlowConfig):
    """Characteristic far-field state from interior values and the free stream.

    Returns (rho, u, p).  The outgoing invariant un + 2c/(g-1) comes from the
    interior, the incoming one from the free stream; entropy and tangential
    velocity come from the upwind side.  Supersonic inflow takes the free
    stream, supersonic outflow copies the interior.
    """
    g = cfg.gamma
    gm1 = g - 1.0
    rho_i = np.asarray(rho_i, dtype=float)
    p_i = np.asarray(p_i, dtype=float)
    u_i = np.asarray(u_i, dtype=float)
    n = np.asarray(normal, dtype=float)
    shape = rho_i.shape
    ex = (slice(None),) + (None,) * len(shape)
    if n.ndim == 1:
        n = np.broadcast_to(n[ex], u_i.shape)  # one normal for every node
    rho_f = np.full(shape, fs.rho)
    p_f = np.full(shape, fs.p)
    u_f = np.broadcast_to(np.asarray(fs.u, dtype=float)[ex], u_i.shape)

    with np.errstate(invalid="ignore"):
        # an invalid interior state yields NaN here; validation reports it
        c_i = np.sqrt(g * p_i / rho_i)
    c_f = np.sqrt(g * p_f / rho_f)
    un_i = u_i[0] * n[0] + u_i[1] * n[1] + u_i[2] * n[2]
    un_f = u_f[0] * n[0] + u_f[1] * n[1] + u_f[2] * n[2]
    delta = (un_i + 2.0 * c_i / gm1) - (un_f + 2.0 * c_f / gm1)
    un_b = un_f + 0.5 * delta
    c_b = c_f + 0.25 * gm1 * delta

    inflow = un_b < 0.0
    rho_u = np.where(inflow, rho_f, rho_i)
    p_u = np.where(inflow, p_f, p_i)
    c_u = np.where(inflow, c_f, c_i)
    u_u = np.where(inflow, u_f, u_i)
    un_u = np.where(inflow, un_f, un_i)

    rho_b = rho_u * (c_b / c_u) ** (2.0 / gm1)
    p_b = p_u * (rho_b / rho_u) ** g
    u_b = u_u + (un_b - un_u) * n

    supersonic = np.abs(un_i) >= c_i
    sup_in = supersonic & (un_i < 0.0)
    sup_out = supersonic & ~(un_i < 0.0)
    rho_b = np.where(sup_in, rho_f, np.where(sup_out, rho_i, rho_b))
    p_b = np.where(sup_in, p_f, np.where(sup_out, p_i, p_b))
    u_b = np.where(sup_in, u_f, np.where(sup_out, u_i, u_b))
    return rho_b, u_b, p_b


def _set_primitive(q, layer, rho, u, p, cfg, where=None):
    ke = 0.5 * rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
    vals = np.stack([rho, rho * u[0], rho * u[1], rho * u[2], p / (cfg.gamma - 1.0) + ke])
    if where is None:
        q[layer] = vals
    else:
        view = q[layer]
        view[:, where] = vals[:, where]
        q[layer] = view


def _interior_primitives(q, layer):
    vals = q[layer]
    rho = vals[0]
    u = vals[1:4] / rho
    return rho, u


def apply_farfield_riemann(q: ConservativeField, block: CurvilinearBlock, bset: BoundarySet,
                           cfg: FlowConfig, face: str, where=None) -> None:
    axis, side = face_axis_side(face)
    arr = q.q
    bnd = _layer(axis, _face_index(block, axis, side))
    inner = _layer(axis, _face_index(block, axis, side, offset=1))
    rho_i, u_i = _interior_primitives(arr, inner)
    vals = arr[inner]
    p_i = (cfg.gamma - 1.0) * (vals[4] - 0.5 * rho_i * (u_i[0] ** 2 + u_i[1] ** 2 + u_i[2] ** 2))
    normal = face_normals(block, axis, side)
    rho_b, u_b, p_b = riemann_state(rho_i, u_i, p_i, bset.freestream_state, normal, cfg)
    _set_primitive(arr, bnd, rho_b, u_b, p_b, cfg, where)


def node_radius(block: CurvilinearBlock) -> np.ndarray:
    c = block.coords
    return np.sqrt(c[1] ** 2 + c[2] ** 2)


def apply_jet_inlet(q: ConservativeField, block: CurvilinearBlock, bset: BoundarySet,
                    cfg: FlowConfig) -> None:
    """Flat-hat jet for r <= jet_radius on the entrance plane, far field elsewhere."""
    layer = _layer(0, FRINGE)
    r = node_radius(block)[layer[1:]]
    inside = r <= bset.jet_radius
    apply_farfield_riemann(q, block, bset, cfg, "xi_lo", where=~inside)
    jet = bset.inlet_state.conservative(cfg)
    view = q.q[layer]
    view[:, inside] = jet[:, None]
    q.q[layer] = view


def centerline_segment(q: ConservativeField, block: CurvilinearBlock) -> np.ndarray:
    """Ring of nodes next to the axis, unique azimuthal planes only."""
    nk = block.dims[2]
    if block.global_offset[2] + nk == block.global_dims[2]:
        nk -= 1  # superposed plane duplicates the first one
    return q.q[:, FRINGE:-FRINGE, FRINGE + 1, FRINGE:FRINGE + nk]


def apply_centerline(q: ConservativeField, block: CurvilinearBlock,
                     reducer: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> None:
    """Axis nodes take the azimuthal mean of the adjacent ring.

    ``reducer`` maps this block's ring segment to the ring mean; the default
    is the local sequential mean (whole azimuth on one block).
    """
    from .exchange import sequential_mean

    seg = np.ascontiguousarray(centerline_segment(q, block))
    mean = (reducer or sequential_mean)(seg)
    q.q[:, FRINGE:-FRINGE, FRINGE, FRINGE:-FRINGE] = mean[:, :, None]


def apply_periodic(q: ConservativeField, block: CurvilinearBlock) -> None:
    """Superposed last azimuthal plane copies the first (block spans the azimuth)."""
    if block.dims[2] != block.global_dims[2]:
        raise ValueError("local periodic copy needs the whole azimuth on one block")
    q.q[:, :, :, FRINGE + block.dims[2] - 1] = q.q[:, :, :, FRINGE]


def dirichlet_mask(block: CurvilinearBlock, bset: BoundarySet) -> np.ndarray:
    """Interior-shaped mask of nodes owned by a boundary rule."""
    mask = np.zeros(block.dims, dtype=bool)
    for face, kind in bset.faces.items():
        if kind in DIRICHLET_KINDS:
            axis, side = face_axis_side(face)
            sl = [slice(None)] * 3
            sl[axis] = 0 if side == 0 else -1
            mask[tuple(sl)] = True
    return mask


def apply_boundaries(q: ConservativeField, block: CurvilinearBlock, bset: BoundarySet,
                     cfg: FlowConfig, reducer=None) -> None:
    """All conditions in a fixed order: axis, outer radius, exit, entrance."""
    f = bset.faces
    if f["eta_lo"] == CENTERLINE:
        apply_centerline(q, block, reducer)
    for face in ("eta_lo", "eta_hi", "xi_hi", "xi_lo", "zeta_lo", "zeta_hi"):
        if f[face] == FARFIELD:
            apply_farfield_riemann(q, block, bset, cfg, face)
    if f["xi_lo"] == INLET:
        apply_jet_inlet(q, block, bset, cfg)
    if f["xi_hi"] == INLET:
        raise ValueError("the jet inlet must be on the entrance face")
