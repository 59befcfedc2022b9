"""Parallel finite-difference LES mini-app for a supersonic round jet."""

from .core import (
    FRINGE,
    MESHES,
    ConservativeField,
    CurvilinearBlock,
    DegenerateCellError,
    FlowConfig,
    InvalidStateError,
    compute_metrics,
    generate_box_grid,
    generate_jet_grid,
)
from .boundary import BoundarySet, jet_boundaries, uniform_boundaries
from .numerics import RK5, RkScheme, Stepper, assemble_rhs, rk5_advance
from .partition import PartitionMap, build_map, ghost_ratio, partition_grid
from .runner import run_partitioned

__version__ = "0.1.0"
