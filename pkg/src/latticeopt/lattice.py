"""State-space discretization for the lattice graph.

Positions live on a uniform grid of resolution ``r``; headings come from a
fixed irregular set of 16 angles that are exactly reachable by short straight
grid moves.  At every discretized state the internal vehicle states (steering
angle, steering rate, joint angles) are pinned to zero, so a lattice state is
fully described by a cell and a heading index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Integer direction vectors whose atan2 angles form the heading set.
_HEADING_VECTOR_SET = [
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
    (2, 1), (2, -1), (-2, 1), (-2, -1),
    (1, 2), (1, -2), (-1, 2), (-1, -2),
]


def build_heading_set() -> np.ndarray:
    """Return the 16 lattice headings, sorted ascending in (-pi, pi]."""
    angles = sorted(math.atan2(j, i) for i, j in _HEADING_VECTOR_SET)
    return np.asarray(angles)


def heading_vectors() -> list[tuple[int, int]]:
    """Integer direction vectors in the same order as build_heading_set()."""
    return sorted(_HEADING_VECTOR_SET, key=lambda v: math.atan2(v[1], v[0]))


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    if np.ndim(a) == 0:
        return float(w)
    return w


class LatticeState(NamedTuple):
    """Discretized configuration: integer cell plus heading index."""

    i: int
    j: int
    h: int


@dataclass(frozen=True)
class LatticeDiscretization:
    """Uniform position grid plus the irregular 16-heading set."""

    r: float = 1.0
    headings: np.ndarray = field(default_factory=build_heading_set)

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("grid resolution must be positive")
        object.__setattr__(self, "headings", np.asarray(self.headings, dtype=float))
        if len(self.headings) != 16:
            raise ValueError("heading set must contain 16 angles")

    @property
    def n_headings(self) -> int:
        return len(self.headings)

    def heading(self, h: int) -> float:
        return float(self.headings[h])

    def heading_index(self, angle: float, tol: float = 1e-9) -> int:
        """Index of the heading matching `angle` exactly (within tol)."""
        d = np.abs(wrap_angle(self.headings - angle))
        k = int(np.argmin(d))
        if d[k] > tol:
            raise ValueError(f"angle {angle} is not a lattice heading")
        return k

    def nearest_heading_index(self, angle: float) -> int:
        d = np.abs(wrap_angle(self.headings - angle))
        return int(np.argmin(d))

    def rotate_index(self, h: int, quarter_turns: int) -> int:
        """Heading index after rotating by quarter_turns * pi/2.

        The sorted irregular set has exactly four headings per quadrant, so a
        quarter turn is an index shift by four.
        """
        return (h + 4 * (quarter_turns % 4)) % 16

    def mirror_index(self, h: int) -> int:
        """Heading index after mirroring about the x-axis (angle negation)."""
        return (14 - h) % 16

    def position(self, state: LatticeState) -> np.ndarray:
        return np.array([state.i * self.r, state.j * self.r])

    def pose(self, state: LatticeState) -> np.ndarray:
        return np.array([state.i * self.r, state.j * self.r, self.heading(state.h)])

    def snap(self, x: float, y: float, theta: float) -> LatticeState:
        """Nearest lattice state to a continuous pose."""
        return LatticeState(
            int(round(x / self.r)), int(round(y / self.r)),
            self.nearest_heading_index(theta),
        )

    def canonical_heading_indices(self) -> list[int]:
        """Headings in the first quadrant [0, pi/2); seeds for symmetry expansion."""
        return [h for h, a in enumerate(self.headings) if 0.0 <= a < np.pi / 2 - 1e-12]
