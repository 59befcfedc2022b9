"""Axial/azimuthal 2-D decomposition of the jet grid.

Ranks follow a matrix layout: the azimuthal partition index ``i`` varies
fastest, ``rank = j * npz + i`` with ``j`` the axial partition index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import (
    EXCHANGE,
    EXTRAPOLATE,
    FRINGE,
    CurvilinearBlock,
)

# Table of azimuthal partition counts tried for each core count.
NPZ_OPTIONS: Dict[int, Tuple[int, ...]] = {
    2: (1, 2),
    4: (1, 2, 4),
    8: (1, 2, 4, 8),
    16: (1, 2, 4, 8, 16),
    32: (1, 2, 4, 8, 16, 32),
    64: (2, 4, 8, 16, 32),
    128: (2, 4, 8, 16, 32),
    256: (4, 8, 16, 32),
    512: (4, 8, 16, 32),
    1024: (8, 16, 32),
    2048: (8, 16, 32),
    3072: (24, 48, 96),
}

WEST, EAST, ZMINUS, ZPLUS = "west", "east", "zminus", "zplus"


class InfeasibleDecomposition(ValueError):
    pass


def balance_axis(total: int, parts: int) -> List[int]:
    """Split ``total`` points into ``parts`` counts differing by at most one.

    The remainder goes to the lowest-indexed partitions.
    """
    if parts < 1:
        raise InfeasibleDecomposition(f"need at least one partition, got {parts}")
    if total < parts:
        raise InfeasibleDecomposition(f"cannot split {total} points into {parts} partitions")
    n, m = divmod(total, parts)
    return [n + 1 if p < m else n for p in range(parts)]


def _ranges(counts):
    out, start = [], 0
    for c in counts:
        out.append((start, start + c))
        start += c
    return out


@dataclass(frozen=True)
class PartitionMap:
    nxi: int
    nzeta: int
    npx: int
    npz: int
    xi_counts: Tuple[int, ...]
    zeta_counts: Tuple[int, ...]

    @property
    def size(self) -> int:
        return self.npx * self.npz

    def rank(self, i_zeta: int, j_xi: int) -> int:
        if not (0 <= i_zeta < self.npz and 0 <= j_xi < self.npx):
            raise IndexError(f"partition index ({i_zeta}, {j_xi}) out of range")
        return j_xi * self.npz + i_zeta

    def position(self, rank: int) -> Tuple[int, int]:
        """(i_zeta, j_xi) of ``rank``."""
        if not 0 <= rank < self.size:
            raise IndexError(f"rank {rank} out of range")
        return rank % self.npz, rank // self.npz

    @cached_property
    def _xi_ranges(self):
        return _ranges(self.xi_counts)

    @cached_property
    def _zeta_ranges(self):
        return _ranges(self.zeta_counts)

    def xi_range(self, rank: int) -> Tuple[int, int]:
        return self._xi_ranges[self.position(rank)[1]]

    def zeta_range(self, rank: int) -> Tuple[int, int]:
        return self._zeta_ranges[self.position(rank)[0]]

    @property
    def ranges(self) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
        return [(self.xi_range(r), self.zeta_range(r)) for r in range(self.size)]

    def neighbors(self, rank: int) -> Dict[str, Optional[int]]:
        """West/east (None at the domain ends) and wrapping azimuthal neighbours."""
        i, j = self.position(rank)
        return {
            WEST: self.rank(i, j - 1) if j > 0 else None,
            EAST: self.rank(i, j + 1) if j < self.npx - 1 else None,
            ZMINUS: self.rank((i - 1) % self.npz, j),
            ZPLUS: self.rank((i + 1) % self.npz, j),
        }

    @property
    def neighbor_table(self) -> List[Dict[str, Optional[int]]]:
        return [self.neighbors(r) for r in range(self.size)]

    def wraps(self, rank: int, side: int) -> bool:
        """True when the azimuthal neighbour on ``side`` is across the periodic seam."""
        i, _ = self.position(rank)
        return (side == 0 and i == 0) or (side == 1 and i == self.npz - 1)

    def ring(self, rank: int) -> List[int]:
        """Ranks sharing this rank's axial range (one full azimuthal ring)."""
        _, j = self.position(rank)
        return [self.rank(i, j) for i in range(self.npz)]

    def pad_modes(self, rank: int):
        nb = self.neighbors(rank)
        xi_modes = tuple(EXTRAPOLATE if nb[k] is None else EXCHANGE for k in (WEST, EAST))
        return (xi_modes, (EXTRAPOLATE, EXTRAPOLATE), (EXCHANGE, EXCHANGE))

    def check_solver_extents(self) -> None:
        """Extents needed by the two-layer exchange and the superposed seam."""
        if min(self.xi_counts) < 2:
            raise InfeasibleDecomposition("every axial partition needs at least 2 planes")
        if min(self.zeta_counts) < 2 or self.zeta_counts[0] < 3 or self.zeta_counts[-1] < 3:
            raise InfeasibleDecomposition("azimuthal partitions need >= 2 planes (>= 3 at the seam)")


def build_map(nxi: int, nzeta: int, npx: int, npz: int) -> PartitionMap:
    if npx < 1 or npz < 1:
        raise InfeasibleDecomposition("partition counts must be positive")
    if npx > nxi:
        raise InfeasibleDecomposition(f"npx={npx} exceeds {nxi} axial points")
    if npz > nzeta - 1:
        raise InfeasibleDecomposition(f"npz={npz} exceeds {nzeta - 1} unique azimuthal points")
    return PartitionMap(nxi, nzeta, npx, npz,
                        tuple(balance_axis(nxi, npx)), tuple(balance_axis(nzeta, npz)))


def fringe_nodes(mesh, pmap: PartitionMap) -> int:
    """Ghost nodes summed over partitions.

    Each xi side with a neighbour and every zeta side (always a neighbour,
    the azimuth is periodic) holds ``FRINGE`` layers spanning the other two
    extents of the partition.
    """
    _, neta, _ = mesh
    total = 0
    for r in range(pmap.size):
        (x0, x1), (z0, z1) = pmap.xi_range(r), pmap.zeta_range(r)
        nb = pmap.neighbors(r)
        nx, nz = x1 - x0, z1 - z0
        sides_xi = (nb[WEST] is not None) + (nb[EAST] is not None)
        total += sides_xi * FRINGE * neta * nz
        total += 2 * FRINGE * neta * nx
    return total


def ghost_ratio(mesh, npx: int, npz: int) -> float:
    """Fringe nodes as a percentage of the global node count."""
    nxi, neta, nzeta = mesh
    pmap = build_map(nxi, nzeta, npx, npz)
    return 100.0 * fringe_nodes(mesh, pmap) / (nxi * neta * nzeta)


def feasible_configs(mesh, cores: int):
    """(npx, npz) pairs from the NPZ table that fit ``mesh`` at ``cores``."""
    nxi, _, nzeta = mesh
    out = []
    for npz in NPZ_OPTIONS.get(cores, ()):
        if cores % npz:
            continue
        npx = cores // npz
        if npx <= nxi and npz <= nzeta - 1:
            out.append((npx, npz))
    return out


def best_ghost_ratio(mesh, cores: int):
    """Smallest ghost ratio over the feasible configurations, with its (npx, npz)."""
    options = [(ghost_ratio(mesh, npx, npz), (npx, npz)) for npx, npz in feasible_configs(mesh, cores)]
    if not options:
        return None
    return min(options)


def local_block(global_block: CurvilinearBlock, pmap: PartitionMap, rank: int) -> CurvilinearBlock:
    """Cut ``rank``'s padded window (interior plus fringe coordinates) from a global block."""
    if (global_block.dims[0], global_block.dims[2]) != (pmap.nxi, pmap.nzeta):
        raise ValueError("partition map does not match the grid")
    (x0, x1), (z0, z1) = pmap.xi_range(rank), pmap.zeta_range(rank)
    coords = global_block.coords[:, x0:x1 + 2 * FRINGE, :, z0:z1 + 2 * FRINGE].copy()
    return CurvilinearBlock(
        coords,
        global_offset=(x0, 0, z0),
        global_dims=global_block.dims,
        pad_modes=pmap.pad_modes(rank),
    )


def assemble_interiors(blocks, pmap: PartitionMap) -> np.ndarray:
    """Reassemble per-rank interior coordinates into a global array."""
    first = blocks[0]
    nxi, neta, nzeta = first.global_dims
    out = np.empty((first.coords.shape[0], nxi, neta, nzeta))
    for r, b in enumerate(blocks):
        (x0, x1), (z0, z1) = pmap.xi_range(r), pmap.zeta_range(r)
        out[:, x0:x1, :, z0:z1] = b.xyz
    return out


def manifest_lines(pmap: PartitionMap) -> List[str]:
    lines = [f"# npx={pmap.npx} npz={pmap.npz} nxi={pmap.nxi} nzeta={pmap.nzeta}",
             "# rank xi_start xi_stop zeta_start zeta_stop west east zminus zplus"]
    for r in range(pmap.size):
        (x0, x1), (z0, z1) = pmap.xi_range(r), pmap.zeta_range(r)
        nb = pmap.neighbors(r)
        cells = ["-" if nb[k] is None else str(nb[k]) for k in (WEST, EAST, ZMINUS, ZPLUS)]
        lines.append(" ".join([str(r), str(x0), str(x1), str(z0), str(z1)] + cells))
    return lines


def grid_filename(rank: int) -> str:
    return f"grid_{rank:05d}.jzg"


def partition_grid(block: CurvilinearBlock, pmap: PartitionMap, outdir) -> List[Path]:
    """Write one grid container per rank plus a text manifest."""
    from .io import write_grid

    outdir = Path(outdir)
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for r in range(pmap.size):
        path = outdir / grid_filename(r)
        try:
            write_grid(path, local_block(block, pmap, r), rank=r)
        except OSError as exc:
            raise OSError(f"rank {r}: cannot write {path}: {exc}") from exc
        paths.append(path)
    (outdir / "partition.map").write_text("\n".join(manifest_lines(pmap)) + "\n")
    return paths


def read_manifest(path) -> PartitionMap:
    header = Path(path).read_text().splitlines()[0].lstrip("#").split()
    kv = dict(item.split("=") for item in header)
    return build_map(int(kv["nxi"]), int(kv["nzeta"]), int(kv["npx"]), int(kv["npz"]))
