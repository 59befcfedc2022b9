"""Flow diagnostics for the jet: azimuthal means and the potential core."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exchange import sequential_mean

CORE_FRACTION = 0.95


def azimuthal_mean(field: np.ndarray) -> np.ndarray:
    """Mean over unique azimuthal planes (the superposed last plane is dropped)."""
    return sequential_mean(np.asarray(field)[..., :-1])


@dataclass
class PotentialCore:
    """Nodes of the azimuthally averaged field with u_x >= fraction * u_jet.

    ``axis_mask`` is the criterion on the jet axis (eta = 0) along xi.  The
    core is present when the mask holds at the inlet, and contiguous when its
    true entries form one run that starts there.
    """

    mask: np.ndarray
    axis_mask: np.ndarray
    x: np.ndarray
    fraction: float

    @classmethod
    def from_state(cls, q: np.ndarray, xyz: np.ndarray, u_jet: float,
                   fraction: float = CORE_FRACTION) -> "PotentialCore":
        """``q`` and ``xyz`` are interior-shaped global arrays (no pads)."""
        return cls.from_velocity(q[1] / q[0], xyz, u_jet, fraction)

    @classmethod
    def from_velocity(cls, ux: np.ndarray, xyz: np.ndarray, u_jet: float,
                      fraction: float = CORE_FRACTION) -> "PotentialCore":
        """Same criterion on a given axial velocity field, e.g. a time mean."""
        mask = azimuthal_mean(ux) >= fraction * u_jet
        return cls(mask, mask[:, 0].copy(), xyz[0, :, 0, 0].copy(), fraction)

    @property
    def present(self) -> bool:
        return bool(self.axis_mask[0])

    @property
    def contiguous(self) -> bool:
        """True when every axis node of the core is connected to the inlet."""
        if not self.present:
            return False
        run = self.run_length
        return not self.axis_mask[run:].any()

    @property
    def run_length(self) -> int:
        if not self.axis_mask[0]:
            return 0
        off = np.flatnonzero(~self.axis_mask)
        return int(off[0]) if off.size else int(self.axis_mask.size)

    @property
    def length(self) -> float:
        """Axial extent of the inlet-connected core (grid units of x)."""
        n = self.run_length
        return float(self.x[n - 1] - self.x[0]) if n else 0.0
