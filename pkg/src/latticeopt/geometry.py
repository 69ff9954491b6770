"""Workspace geometry: disc obstacles, vehicle footprints, collision queries.

Obstacles are unions of discs only.  The same geometry backs two views that
must agree: a boolean collision test used by the graph search, and smooth
separation residuals of the form ``|c_v - c_o|^2 - (r_v + r_o)^2 >= 0`` used
as inequality constraints in the trajectory optimization.  Tangency counts as
collision-free in both views.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Disc:
    """A disc in the world frame."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (2,):
            raise ValueError("disc center must be a 2-vector")
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class FootprintDisc:
    """A body-frame disc: offset in the anchor frame plus radius."""

    anchor: str
    offset: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        if self.offset.shape != (2,):
            raise ValueError("footprint offset must be a 2-vector")
        if not self.radius > 0:
            raise ValueError("footprint radius must be positive")


@dataclass(frozen=True)
class Footprint:
    """Vehicle body approximated by discs attached to named pose anchors."""

    discs: tuple

    def __post_init__(self):
        if len(self.discs) == 0:
            raise ValueError("footprint needs at least one disc")
        object.__setattr__(self, "discs", tuple(self.discs))

    @property
    def radii(self) -> np.ndarray:
        return np.array([d.radius for d in self.discs])

    def place(self, poses: dict[str, np.ndarray]) -> np.ndarray:
        """World centers (n_discs, 2) given anchor poses {name: (x, y, theta)}."""
        out = np.empty((len(self.discs), 2))
        for k, d in enumerate(self.discs):
            x, y, th = poses[d.anchor]
            c, s = np.cos(th), np.sin(th)
            out[k, 0] = x + c * d.offset[0] - s * d.offset[1]
            out[k, 1] = y + s * d.offset[0] + c * d.offset[1]
        return out


class Environment:
    """Immutable free-space description: disc obstacles inside a bounding box."""

    def __init__(self, obstacles, bounds, name="env"):
        self.name = name
        self.obstacles = tuple(obstacles)
        xmin, xmax, ymin, ymax = bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("bounds must have positive width and height")
        self.bounds = (float(xmin), float(xmax), float(ymin), float(ymax))
        for ob in self.obstacles:
            cx, cy = ob.center
            if not (xmin <= cx <= xmax and ymin <= cy <= ymax):
                raise ValueError(f"obstacle center {ob.center} outside bounds")
        self._centers = (
            np.array([ob.center for ob in self.obstacles]).reshape(-1, 2)
        )
        self._radii = np.array([ob.radius for ob in self.obstacles])

    @property
    def obstacle_centers(self) -> np.ndarray:
        return self._centers

    @property
    def obstacle_radii(self) -> np.ndarray:
        return self._radii

    def discs_collide(self, centers, radii) -> bool:
        """True iff any query disc overlaps an obstacle or exits the bounds.

        Overlap is strict (squared distance < squared radius sum), so tangent
        discs are collision-free.
        """
        centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        radii = np.asarray(radii, dtype=float).reshape(-1)
        xmin, xmax, ymin, ymax = self.bounds
        if np.any(centers[:, 0] - radii < xmin) or np.any(centers[:, 0] + radii > xmax):
            return True
        if np.any(centers[:, 1] - radii < ymin) or np.any(centers[:, 1] + radii > ymax):
            return True
        if len(self.obstacles) == 0:
            return False
        d2 = np.sum((centers[:, None, :] - self._centers[None, :, :]) ** 2, axis=2)
        rsum = radii[:, None] + self._radii[None, :]
        return bool(np.any(d2 < rsum**2))


def collide(env: Environment, footprint_discs) -> bool:
    """Boolean collision test for world-frame discs."""
    centers = np.array([d.center for d in footprint_discs]).reshape(-1, 2)
    radii = np.array([d.radius for d in footprint_discs])
    return env.discs_collide(centers, radii)


@dataclass(frozen=True)
class SeparationConstraint:
    """One smooth residual on a single footprint disc's world center.

    kind 'obstacle': |c - c_o|^2 - (r + r_o)^2 >= 0
    kind 'bound_*' : signed margin of the disc to one wall >= 0
    """

    disc_index: int
    kind: str
    obstacle_center: np.ndarray | None = None
    obstacle_radius: float = 0.0
    bound_value: float = 0.0

    def value(self, center) -> float:
        cx, cy = float(center[0]), float(center[1])
        if self.kind == "obstacle":
            dx = cx - self.obstacle_center[0]
            dy = cy - self.obstacle_center[1]
            return dx * dx + dy * dy - self.obstacle_radius**2
        if self.kind == "bound_xmin":
            return cx - self.bound_value
        if self.kind == "bound_xmax":
            return self.bound_value - cx
        if self.kind == "bound_ymin":
            return cy - self.bound_value
        if self.kind == "bound_ymax":
            return self.bound_value - cy
        raise ValueError(self.kind)

    def grad_center(self, center) -> np.ndarray:
        """d(value)/d(center), a 2-vector."""
        if self.kind == "obstacle":
            return 2.0 * (np.asarray(center, dtype=float) - self.obstacle_center)
        if self.kind == "bound_xmin":
            return np.array([1.0, 0.0])
        if self.kind == "bound_xmax":
            return np.array([-1.0, 0.0])
        if self.kind == "bound_ymin":
            return np.array([0.0, 1.0])
        if self.kind == "bound_ymax":
            return np.array([0.0, -1.0])
        raise ValueError(self.kind)


def separation_constraints(env: Environment, footprint: Footprint):
    """All separation residuals for a footprint in this environment.

    One residual per (footprint disc, obstacle) pair plus four bound-box
    residuals per disc.  `obstacle_radius` stores the combined radius, so the
    residual is twice differentiable in the disc center and the boolean and
    smooth views agree at the zero level set.
    """
    cons = []
    for k, fd in enumerate(footprint.discs):
        for ob in env.obstacles:
            cons.append(
                SeparationConstraint(
                    disc_index=k,
                    kind="obstacle",
                    obstacle_center=np.asarray(ob.center, dtype=float),
                    obstacle_radius=ob.radius + fd.radius,
                )
            )
    xmin, xmax, ymin, ymax = env.bounds
    for k, fd in enumerate(footprint.discs):
        cons.append(SeparationConstraint(k, "bound_xmin", bound_value=xmin + fd.radius))
        cons.append(SeparationConstraint(k, "bound_xmax", bound_value=xmax - fd.radius))
        cons.append(SeparationConstraint(k, "bound_ymin", bound_value=ymin + fd.radius))
        cons.append(SeparationConstraint(k, "bound_ymax", bound_value=ymax - fd.radius))
    return cons


def residuals_at(env: Environment, footprint: Footprint, poses) -> np.ndarray:
    """Evaluate every separation residual at concrete anchor poses."""
    centers = footprint.place(poses)
    cons = separation_constraints(env, footprint)
    return np.array([c.value(centers[c.disc_index]) for c in cons])


def swath_collides(env: Environment, footprint: Footprint, states, vehicle) -> bool:
    """True iff the footprint collides at any sampled state along a path."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] == 0:
        raise ValueError("sampled path must be nonempty")
    poses = vehicle.anchor_poses_batch(states)  # (n, n_anchors, 3)
    centers, radii = place_footprint_batch(footprint, vehicle, poses)
    return env.discs_collide(centers.reshape(-1, 2), np.tile(radii, states.shape[0]))


def place_footprint_batch(footprint, vehicle, poses):
    """World disc centers (n_samples, n_discs, 2) for a batch of anchor poses."""
    n = poses.shape[0]
    centers = np.empty((n, len(footprint.discs), 2))
    for k, d in enumerate(footprint.discs):
        a = vehicle.anchors.index(d.anchor)
        th = poses[:, a, 2]
        c, s = np.cos(th), np.sin(th)
        centers[:, k, 0] = poses[:, a, 0] + c * d.offset[0] - s * d.offset[1]
        centers[:, k, 1] = poses[:, a, 1] + s * d.offset[0] + c * d.offset[1]
    return centers, footprint.radii


def expand_rect(x, y, w, h):
    """Approximate an axis-aligned rectangle by a row of overlapping discs.

    Disc radius is half the smaller side; centers are spaced at most one
    radius apart along the longer side, which keeps the scalloping of the
    effective wall boundary below 7% of the radius.
    """
    if w <= 0 or h <= 0:
        raise ValueError("rectangle sides must be positive")
    r = min(w, h) / 2.0
    discs = []
    if w >= h:
        lo, hi, fixed = x + r, x + w - r, y + h / 2.0
        span = hi - lo
        n = max(1, int(np.ceil(span / r)) + 1) if span > 0 else 1
        for cx in np.linspace(lo, hi, n):
            discs.append(Disc(np.array([cx, fixed]), r))
    else:
        lo, hi, fixed = y + r, y + h - r, x + w / 2.0
        span = hi - lo
        n = max(1, int(np.ceil(span / r)) + 1) if span > 0 else 1
        for cy in np.linspace(lo, hi, n):
            discs.append(Disc(np.array([fixed, cy]), r))
    return discs


@dataclass
class Scenario:
    """A named environment plus default start/goal poses."""

    name: str
    env: Environment
    start: dict = field(default_factory=dict)
    goal: dict = field(default_factory=dict)
    vehicle: str = "car"
    meta: dict = field(default_factory=dict)


def load_scenario(source) -> Scenario:
    """Load a scenario from a JSON file path or an already-parsed dict.

    Schema: {name, bounds:{xmin,xmax,ymin,ymax},
             obstacles:[{type:"disc",x,y,r}|{type:"rect",x,y,w,h}],
             start:{...}, goal:{...}}.
    Rectangles are expanded into disc rows at load time.
    """
    if isinstance(source, (str, Path)):
        with open(source) as f:
            data = json.load(f)
    else:
        data = source
    b = data["bounds"]
    obstacles = []
    for ob in data.get("obstacles", []):
        if ob["type"] == "disc":
            obstacles.append(Disc(np.array([ob["x"], ob["y"]]), ob["r"]))
        elif ob["type"] == "rect":
            obstacles.extend(expand_rect(ob["x"], ob["y"], ob["w"], ob["h"]))
        else:
            raise ValueError(f"unknown obstacle type {ob['type']!r}")
    env = Environment(
        obstacles,
        (b["xmin"], b["xmax"], b["ymin"], b["ymax"]),
        name=data.get("name", "scenario"),
    )
    known = {"name", "bounds", "obstacles", "start", "goal", "vehicle"}
    meta = {k: v for k, v in data.items() if k not in known}
    return Scenario(
        name=env.name,
        env=env,
        start=data.get("start", {}),
        goal=data.get("goal", {}),
        vehicle=data.get("vehicle", "car"),
        meta=meta,
    )
