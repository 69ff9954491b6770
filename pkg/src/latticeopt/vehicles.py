"""Vehicle models: a kinematic bicycle car and a general 2-trailer truck.

All models are parameterized by distance traveled s, never by time, so the
"dynamics" map (state, steering input) to d(state)/ds.  The discrete mode
q in {+1, -1} selects forward or reverse motion and multiplies exactly the
pose/joint derivative block; the steering chain alpha' = omega, omega' = u
is mode-independent.

Three model levels exist per vehicle:
  dyn  - full model including steering angle alpha and steering rate omega
         as states, with the steering acceleration u as control.
  kin  - drops (omega, u); alpha is the control.
  geo  - no dynamics at all; paths are linear interpolations between
         boundary states (handled by the primitive generator).

The truck is a car-like tractor towing a dolly (off-axle hitched at distance
M1 behind the tractor rear axle, drawbar length L2) and a semitrailer
(on-axle hitched at the dolly axle, axle distance L3).  State positions track
the semitrailer axle and s is the distance traveled by that axle.  Derivation
of the closed form used here (D is the tractor-to-trailer speed ratio):

    kappa = tan(alpha)/L1            tractor path curvature
    A2 = cos(b2) + M1*kappa*sin(b2)  dolly/tractor speed coupling
    B2 = sin(b2) - M1*kappa*cos(b2)  dolly heading rate factor
    D  = cos(b3) * A2                v_tractor = v_trailer / D
    theta3' = tan(b3)/L3
    b3' = B2/(L2*D) - tan(b3)/L3
    b2' = (kappa - B2/L2)/D

which reduces to straight rolling (all derivatives zero except position) in
the aligned configuration.  The analytic Jacobians below are verified against
central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Footprint, FootprintDisc
from .lattice import wrap_angle

VALID_MODES = (1, -1)


def _check_mode(q):
    if q not in VALID_MODES:
        raise ValueError(f"mode must be +1 or -1, got {q}")


@dataclass(frozen=True)
class CarParams:
    wheelbase: float = 2.9
    alpha_max: float = np.pi / 4
    omega_max: float = 0.5
    u_max: float = 40.0


@dataclass(frozen=True)
class TruckParams:
    """2-trailer geometry. Values are engineering defaults, all overridable."""

    l1: float = 4.6    # tractor wheelbase
    m1: float = 1.6    # off-axle hitch offset behind the tractor rear axle
    l2: float = 3.5    # dolly drawbar length
    l3: float = 8.0    # semitrailer axle to kingpin
    alpha_max: float = np.pi / 4
    omega_max: float = 0.5
    u_max: float = 40.0
    beta_max: float = 1.2  # NLP bound; |beta| < pi/2 is the hard validity guard


class _Model:
    """Shared interface for all vehicle model levels."""

    kind: str
    level: str
    nx: int
    nu: int
    full_nx: int
    anchors: list

    # --- dynamics -----------------------------------------------------
    def f(self, x, u, q):
        """State derivative w.r.t. distance. Raises on invalid states."""
        _check_mode(q)
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        self._guard(x, u)
        out = self.f_batch(x[None, :], u[None, : self.nu], np.array([q]))[0]
        return out

    def _guard(self, x, u):
        raise NotImplementedError

    def f_batch(self, X, U, q):
        raise NotImplementedError

    def jac_batch(self, X, U, q):
        raise NotImplementedError

    # --- stage cost ---------------------------------------------------
    def cost_terms_batch(self, X, U, q):
        """(smooth, beta) integrands with stage cost 1 + g*(smooth + [q<0]*beta)."""
        raise NotImplementedError

    def stage_cost_batch(self, X, U, q, gamma):
        smooth, beta = self.cost_terms_batch(X, U, q)
        rev = np.asarray(q) < 0
        return 1.0 + gamma * (smooth + np.where(rev, beta, 0.0))

    def stage_cost(self, x, u, q, gamma):
        _check_mode(q)
        X = np.asarray(x, dtype=float)[None, :]
        U = np.atleast_1d(np.asarray(u, dtype=float))[None, : self.nu]
        return float(self.stage_cost_batch(X, U, np.array([q]), gamma)[0])

    def cost_grad_batch(self, X, U, q, gamma):
        """Gradients of the stage cost w.r.t. state and control."""
        raise NotImplementedError

    # --- level plumbing -------------------------------------------------
    def lift_to_full(self, X):
        """Embed level states into the full model; missing states become zero."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.full_nx))
        out[:, : self.nx] = X
        return out

    # --- symmetry helpers ---------------------------------------------
    pos_idx = (0, 1)
    theta_idx = 2
    sign_flip_idx: tuple = ()   # state entries negated by an x-axis mirror

    def mirror_state(self, X):
        X = np.array(np.atleast_2d(X), dtype=float)
        X[:, 1] = -X[:, 1]
        X[:, self.theta_idx] = wrap_angle(-X[:, self.theta_idx])
        for k in self.sign_flip_idx:
            X[:, k] = -X[:, k]
        return X

    def mirror_control(self, U):
        return -np.asarray(U, dtype=float)

    def rotate_state_quarter(self, X, k):
        """Rotate poses by k*pi/2 about the origin (exact position mapping)."""
        X = np.array(np.atleast_2d(X), dtype=float)
        k = k % 4
        x, y = X[:, 0].copy(), X[:, 1].copy()
        if k == 1:
            X[:, 0], X[:, 1] = -y, x
        elif k == 2:
            X[:, 0], X[:, 1] = -x, -y
        elif k == 3:
            X[:, 0], X[:, 1] = y, -x
        X[:, self.theta_idx] = wrap_angle(X[:, self.theta_idx] + k * (np.pi / 2))
        return X

    def rotate_state(self, X, phi):
        X = np.array(np.atleast_2d(X), dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        x, y = X[:, 0].copy(), X[:, 1].copy()
        X[:, 0] = c * x - s * y
        X[:, 1] = s * x + c * y
        X[:, self.theta_idx] = wrap_angle(X[:, self.theta_idx] + phi)
        return X

    # --- footprint anchors ----------------------------------------------
    def anchor_poses_batch(self, X):
        raise NotImplementedError

    def anchor_pose_jac(self, x):
        """List of (3, nx) Jacobians, one per anchor, at a single state."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Car
# ---------------------------------------------------------------------------

class CarDyn(_Model):
    """Kinematic bicycle with steering angle and rate as states.

    State (x1, y1, theta1, alpha, omega), control u = steering acceleration.
    """

    kind = "car"
    level = "dyn"
    nx = 5
    nu = 1
    full_nx = 5
    state_names = ("x1", "y1", "theta1", "alpha", "omega")
    anchors = ["car"]
    sign_flip_idx = (3, 4)

    def __init__(self, params: CarParams | None = None):
        self.params = params or CarParams()
        p = self.params
        self.x_lower = np.array([-np.inf, -np.inf, -np.inf, -p.alpha_max, -p.omega_max])
        self.x_upper = -self.x_lower
        self.u_lower = np.array([-p.u_max])
        self.u_upper = np.array([p.u_max])

    def _guard(self, x, u):
        if abs(x[3]) >= np.pi / 2:
            raise ValueError("steering angle outside (-pi/2, pi/2)")

    def f_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        q = np.broadcast_to(np.asarray(q, dtype=float), (X.shape[0],))
        th, al = X[:, 2], X[:, 3]
        out = np.empty_like(X)
        out[:, 0] = q * np.cos(th)
        out[:, 1] = q * np.sin(th)
        out[:, 2] = q * np.tan(al) / self.params.wheelbase
        out[:, 3] = X[:, 4]
        out[:, 4] = U[:, 0]
        bad = np.abs(al) >= np.pi / 2
        if np.any(bad):
            out[bad] = np.nan
        return out

    def jac_batch(self, X, U, q):
        X = np.atleast_2d(X)
        n = X.shape[0]
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        th, al = X[:, 2], X[:, 3]
        A = np.zeros((n, 5, 5))
        B = np.zeros((n, 5, 1))
        A[:, 0, 2] = -q * np.sin(th)
        A[:, 1, 2] = q * np.cos(th)
        A[:, 2, 3] = q / (np.cos(al) ** 2 * self.params.wheelbase)
        A[:, 3, 4] = 1.0
        B[:, 4, 0] = 1.0
        return A, B

    def cost_terms_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        smooth = X[:, 3] ** 2 + 10.0 * X[:, 4] ** 2 + U[:, 0] ** 2
        return smooth, np.zeros(X.shape[0])

    def cost_grad_batch(self, X, U, q, gamma):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        dx = np.zeros_like(X)
        du = np.zeros_like(U)
        dx[:, 3] = 2.0 * gamma * X[:, 3]
        dx[:, 4] = 20.0 * gamma * X[:, 4]
        du[:, 0] = 2.0 * gamma * U[:, 0]
        return dx, du

    def anchor_poses_batch(self, X):
        X = np.atleast_2d(X)
        return X[:, None, :3].copy()

    def anchor_pose_jac(self, x):
        J = np.zeros((3, self.nx))
        J[0, 0] = J[1, 1] = J[2, 2] = 1.0
        return [J]


class CarKin(CarDyn):
    """Bicycle model with the steering angle as the control signal."""

    level = "kin"
    nx = 3
    nu = 1
    state_names = ("x1", "y1", "theta1")
    sign_flip_idx = ()

    def __init__(self, params: CarParams | None = None):
        self.params = params or CarParams()
        p = self.params
        self.x_lower = np.array([-np.inf, -np.inf, -np.inf])
        self.x_upper = -self.x_lower
        self.u_lower = np.array([-p.alpha_max])
        self.u_upper = np.array([p.alpha_max])

    def _guard(self, x, u):
        if abs(u[0]) >= np.pi / 2:
            raise ValueError("steering angle outside (-pi/2, pi/2)")

    def f_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        q = np.broadcast_to(np.asarray(q, dtype=float), (X.shape[0],))
        th, al = X[:, 2], U[:, 0]
        out = np.empty_like(X)
        out[:, 0] = q * np.cos(th)
        out[:, 1] = q * np.sin(th)
        out[:, 2] = q * np.tan(al) / self.params.wheelbase
        bad = np.abs(al) >= np.pi / 2
        if np.any(bad):
            out[bad] = np.nan
        return out

    def jac_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        n = X.shape[0]
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        A = np.zeros((n, 3, 3))
        B = np.zeros((n, 3, 1))
        A[:, 0, 2] = -q * np.sin(X[:, 2])
        A[:, 1, 2] = q * np.cos(X[:, 2])
        B[:, 2, 0] = q / (np.cos(U[:, 0]) ** 2 * self.params.wheelbase)
        return A, B

    def cost_terms_batch(self, X, U, q):
        U = np.atleast_2d(U)
        return U[:, 0] ** 2, np.zeros(U.shape[0])

    def cost_grad_batch(self, X, U, q, gamma):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        return np.zeros_like(X), 2.0 * gamma * U


class CarGeo(CarKin):
    """Pose-only car; no dynamics, primitives are linear interpolations."""

    level = "geo"
    nu = 0

    def f_batch(self, X, U, q):
        raise NotImplementedError("geometric model has no dynamics")

    def jac_batch(self, X, U, q):
        raise NotImplementedError("geometric model has no dynamics")

    def cost_terms_batch(self, X, U, q):
        X = np.atleast_2d(X)
        z = np.zeros(X.shape[0])
        return z, z.copy()

    def mirror_control(self, U):
        return np.asarray(U, dtype=float)


# ---------------------------------------------------------------------------
# Truck and trailer
# ---------------------------------------------------------------------------

def _truck_pose_block(th3, b3, b2, al, p: TruckParams):
    """Pose/joint derivatives and intermediates shared by value and Jacobian."""
    kappa = np.tan(al) / p.l1
    sb2, cb2 = np.sin(b2), np.cos(b2)
    a2 = cb2 + p.m1 * kappa * sb2
    bb2 = sb2 - p.m1 * kappa * cb2
    cb3 = np.cos(b3)
    t3 = np.tan(b3)
    d = cb3 * a2
    f = np.stack(
        [
            np.cos(th3),
            np.sin(th3),
            t3 / p.l3,
            bb2 / (p.l2 * d) - t3 / p.l3,
            (kappa - bb2 / p.l2) / d,
        ],
        axis=-1,
    )
    return f, (kappa, sb2, cb2, a2, bb2, cb3, t3, d)


class TruckDyn(_Model):
    """General 2-trailer with car-like tractor, full steering dynamics.

    State (x3, y3, theta3, beta3, beta2, alpha, omega), control u.
    """

    kind = "truck"
    level = "dyn"
    nx = 7
    nu = 1
    full_nx = 7
    state_names = ("x3", "y3", "theta3", "beta3", "beta2", "alpha", "omega")
    anchors = ["trailer", "truck"]
    sign_flip_idx = (3, 4, 5, 6)

    def __init__(self, params: TruckParams | None = None):
        self.params = params or TruckParams()
        p = self.params
        self.x_lower = np.array(
            [-np.inf, -np.inf, -np.inf, -p.beta_max, -p.beta_max,
             -p.alpha_max, -p.omega_max]
        )
        self.x_upper = -self.x_lower
        self.u_lower = np.array([-p.u_max])
        self.u_upper = np.array([p.u_max])

    def _guard(self, x, u):
        if abs(x[5]) >= np.pi / 2:
            raise ValueError("steering angle outside (-pi/2, pi/2)")
        if abs(x[3]) >= np.pi / 2 or abs(x[4]) >= np.pi / 2:
            raise ValueError("joint angle outside (-pi/2, pi/2)")

    def _pose_cols(self, X, U):
        return X[:, 2], X[:, 3], X[:, 4], X[:, 5]

    def f_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        q = np.broadcast_to(np.asarray(q, dtype=float), (X.shape[0],))
        th3, b3, b2, al = self._pose_cols(X, U)
        pose, _ = _truck_pose_block(th3, b3, b2, al, self.params)
        out = np.empty_like(X)
        out[:, :5] = q[:, None] * pose
        out[:, 5] = X[:, 6]
        out[:, 6] = U[:, 0]
        bad = (
            (np.abs(b3) >= np.pi / 2)
            | (np.abs(b2) >= np.pi / 2)
            | (np.abs(al) >= np.pi / 2)
        )
        if np.any(bad):
            out[bad] = np.nan
        return out

    def _pose_jacobian(self, th3, b3, b2, al):
        """Partials of the pose block w.r.t. (theta3, beta3, beta2, alpha)."""
        p = self.params
        _, (kappa, sb2, cb2, a2, bb2, cb3, t3, d) = _truck_pose_block(
            th3, b3, b2, al, p
        )
        n = th3.shape[0]
        ka = (1.0 + np.tan(al) ** 2) / p.l1
        da2_db2 = -bb2
        da2_dal = p.m1 * ka * sb2
        db2_db2 = a2
        db2_dal = -p.m1 * ka * cb2
        dd_db3 = -np.sin(b3) * a2
        dd_db2 = cb3 * da2_db2
        dd_dal = cb3 * da2_dal
        sec3 = 1.0 + t3**2
        e = kappa - bb2 / p.l2

        J = np.zeros((n, 5, 4))
        J[:, 0, 0] = -np.sin(th3)
        J[:, 1, 0] = np.cos(th3)
        J[:, 2, 1] = sec3 / p.l3
        # b3' = B2/(L2 D) - tan(b3)/L3
        J[:, 3, 1] = -bb2 * dd_db3 / (p.l2 * d**2) - sec3 / p.l3
        J[:, 3, 2] = (db2_db2 * d - bb2 * dd_db2) / (p.l2 * d**2)
        J[:, 3, 3] = (db2_dal * d - bb2 * dd_dal) / (p.l2 * d**2)
        # b2' = (kappa - B2/L2)/D
        J[:, 4, 1] = -e * dd_db3 / d**2
        J[:, 4, 2] = (-db2_db2 / p.l2 * d - e * dd_db2) / d**2
        J[:, 4, 3] = ((ka - db2_dal / p.l2) * d - e * dd_dal) / d**2
        return J

    def jac_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        n = X.shape[0]
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        J = self._pose_jacobian(X[:, 2], X[:, 3], X[:, 4], X[:, 5])
        A = np.zeros((n, 7, 7))
        A[:, :5, 2:6] = q[:, None, None] * J
        A[:, 5, 6] = 1.0
        B = np.zeros((n, 7, 1))
        B[:, 6, 0] = 1.0
        return A, B

    def cost_terms_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        smooth = X[:, 5] ** 2 + 10.0 * X[:, 6] ** 2 + U[:, 0] ** 2
        beta = X[:, 3] ** 2 + X[:, 4] ** 2
        return smooth, beta

    def cost_grad_batch(self, X, U, q, gamma):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        rev = (np.asarray(q) < 0).astype(float)
        dx = np.zeros_like(X)
        dx[:, 5] = 2.0 * gamma * X[:, 5]
        dx[:, 6] = 20.0 * gamma * X[:, 6]
        dx[:, 3] = 2.0 * gamma * rev * X[:, 3]
        dx[:, 4] = 2.0 * gamma * rev * X[:, 4]
        du = 2.0 * gamma * np.atleast_2d(U).copy()
        return dx, du

    # anchor poses: trailer frame is the state pose; the tractor pose is
    # reconstructed through the hitch chain.
    def anchor_poses_batch(self, X):
        X = np.atleast_2d(X)
        p = self.params
        th3, b3, b2 = X[:, 2], X[:, 3], X[:, 4]
        th2 = th3 + b3
        th1 = th2 + b2
        poses = np.empty((X.shape[0], 2, 3))
        poses[:, 0, 0] = X[:, 0]
        poses[:, 0, 1] = X[:, 1]
        poses[:, 0, 2] = th3
        poses[:, 1, 0] = (
            X[:, 0] + p.l3 * np.cos(th3) + p.l2 * np.cos(th2) + p.m1 * np.cos(th1)
        )
        poses[:, 1, 1] = (
            X[:, 1] + p.l3 * np.sin(th3) + p.l2 * np.sin(th2) + p.m1 * np.sin(th1)
        )
        poses[:, 1, 2] = th1
        return poses

    def anchor_pose_jac(self, x):
        p = self.params
        th3, b3, b2 = x[2], x[3], x[4]
        th2 = th3 + b3
        th1 = th2 + b2
        Jt = np.zeros((3, self.nx))
        Jt[0, 0] = Jt[1, 1] = Jt[2, 2] = 1.0
        J1 = np.zeros((3, self.nx))
        J1[0, 0] = J1[1, 1] = 1.0
        n3 = np.array([-np.sin(th3), np.cos(th3)])
        n2 = np.array([-np.sin(th2), np.cos(th2)])
        n1 = np.array([-np.sin(th1), np.cos(th1)])
        J1[:2, 2] = p.l3 * n3 + p.l2 * n2 + p.m1 * n1
        J1[:2, 3] = p.l2 * n2 + p.m1 * n1
        J1[:2, 4] = p.m1 * n1
        J1[2, 2] = J1[2, 3] = J1[2, 4] = 1.0
        return [Jt, J1]


class TruckKin(TruckDyn):
    """2-trailer with the tractor steering angle as the control signal."""

    level = "kin"
    nx = 5
    nu = 1
    state_names = ("x3", "y3", "theta3", "beta3", "beta2")
    sign_flip_idx = (3, 4)

    def __init__(self, params: TruckParams | None = None):
        self.params = params or TruckParams()
        p = self.params
        self.x_lower = np.array(
            [-np.inf, -np.inf, -np.inf, -p.beta_max, -p.beta_max]
        )
        self.x_upper = -self.x_lower
        self.u_lower = np.array([-p.alpha_max])
        self.u_upper = np.array([p.alpha_max])

    def _guard(self, x, u):
        if abs(u[0]) >= np.pi / 2:
            raise ValueError("steering angle outside (-pi/2, pi/2)")
        if abs(x[3]) >= np.pi / 2 or abs(x[4]) >= np.pi / 2:
            raise ValueError("joint angle outside (-pi/2, pi/2)")

    def _pose_cols(self, X, U):
        return X[:, 2], X[:, 3], X[:, 4], U[:, 0]

    def f_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        q = np.broadcast_to(np.asarray(q, dtype=float), (X.shape[0],))
        th3, b3, b2, al = self._pose_cols(X, U)
        pose, _ = _truck_pose_block(th3, b3, b2, al, self.params)
        out = q[:, None] * pose
        bad = (
            (np.abs(b3) >= np.pi / 2)
            | (np.abs(b2) >= np.pi / 2)
            | (np.abs(al) >= np.pi / 2)
        )
        if np.any(bad):
            out[bad] = np.nan
        return out

    def jac_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        n = X.shape[0]
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        J = self._pose_jacobian(X[:, 2], X[:, 3], X[:, 4], U[:, 0])
        A = np.zeros((n, 5, 5))
        A[:, :, 2:5] = q[:, None, None] * J[:, :, :3]
        B = (q[:, None] * J[:, :, 3])[:, :, None]
        return A, B

    def cost_terms_batch(self, X, U, q):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        smooth = U[:, 0] ** 2
        beta = X[:, 3] ** 2 + X[:, 4] ** 2
        return smooth, beta

    def cost_grad_batch(self, X, U, q, gamma):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        rev = (np.asarray(q) < 0).astype(float)
        dx = np.zeros_like(X)
        dx[:, 3] = 2.0 * gamma * rev * X[:, 3]
        dx[:, 4] = 2.0 * gamma * rev * X[:, 4]
        return dx, 2.0 * gamma * U.copy()

    def anchor_poses_batch(self, X):
        return super().anchor_poses_batch(X)

    def anchor_pose_jac(self, x):
        jt, j1 = TruckDyn.anchor_pose_jac(self, np.concatenate([x[:5], [0, 0]]))
        return [jt[:, :5], j1[:, :5]]


class TruckGeo(TruckKin):
    """Pose-only truck; joint angles stay at their boundary values (zero)."""

    level = "geo"
    nx = 3
    nu = 0
    state_names = ("x3", "y3", "theta3")
    sign_flip_idx = ()

    def f_batch(self, X, U, q):
        raise NotImplementedError("geometric model has no dynamics")

    def jac_batch(self, X, U, q):
        raise NotImplementedError("geometric model has no dynamics")

    def cost_terms_batch(self, X, U, q):
        X = np.atleast_2d(X)
        z = np.zeros(X.shape[0])
        return z, z.copy()

    def mirror_control(self, U):
        return np.asarray(U, dtype=float)

    def anchor_poses_batch(self, X):
        X = np.atleast_2d(X)
        full = np.zeros((X.shape[0], 7))
        full[:, :3] = X
        return TruckDyn.anchor_poses_batch(self, full)


# ---------------------------------------------------------------------------
# Factories, footprints, config files
# ---------------------------------------------------------------------------

_CAR_LEVELS = {"dyn": CarDyn, "kin": CarKin, "geo": CarGeo}
_TRUCK_LEVELS = {"dyn": TruckDyn, "kin": TruckKin, "geo": TruckGeo}


def car_model(level="dyn", params=None) -> _Model:
    return _CAR_LEVELS[level](params)


def truck_model(level="dyn", params=None) -> _Model:
    return _TRUCK_LEVELS[level](params)


def vehicle_model(kind, level="dyn", params=None) -> _Model:
    if kind == "car":
        return car_model(level, params)
    if kind == "truck":
        return truck_model(level, params)
    raise ValueError(f"unknown vehicle kind {kind!r}")


def default_footprint(kind) -> Footprint:
    """Bounding-circle footprints. The car uses three circles; the truck one
    circle for the tractor and two for the semitrailer. Radii and offsets are
    package defaults (the source experiments do not state them) and can be
    overridden through vehicle config files."""
    if kind == "car":
        return Footprint(
            (
                FootprintDisc("car", (0.1, 0.0), 1.0),
                FootprintDisc("car", (1.6, 0.0), 1.0),
                FootprintDisc("car", (3.1, 0.0), 1.0),
            )
        )
    if kind == "truck":
        return Footprint(
            (
                FootprintDisc("truck", (2.3, 0.0), 2.2),
                FootprintDisc("trailer", (1.2, 0.0), 2.0),
                FootprintDisc("trailer", (4.9, 0.0), 2.0),
            )
        )
    raise ValueError(f"unknown vehicle kind {kind!r}")


VEHICLE_CONFIG_SCHEMA_VERSION = 1


def vehicle_config_dict(kind, params=None, footprint=None) -> dict:
    params = params or (CarParams() if kind == "car" else TruckParams())
    footprint = footprint or default_footprint(kind)
    if kind == "car":
        pd = {"wheelbase": params.wheelbase}
    else:
        pd = {"l1": params.l1, "m1": params.m1, "l2": params.l2, "l3": params.l3,
              "beta_max": params.beta_max}
    pd.update(
        {"alpha_max": params.alpha_max, "omega_max": params.omega_max,
         "u_max": params.u_max}
    )
    return {
        "schema_version": VEHICLE_CONFIG_SCHEMA_VERSION,
        "kind": kind,
        "params": pd,
        "footprint": [
            {"anchor": d.anchor, "offset": list(map(float, d.offset)),
             "radius": d.radius}
            for d in footprint.discs
        ],
    }


def load_vehicle_config(source):
    """Parse a vehicle config JSON into (params, footprint, kind)."""
    if isinstance(source, (str, Path)):
        with open(source) as f:
            data = json.load(f)
    else:
        data = source
    if data.get("schema_version") != VEHICLE_CONFIG_SCHEMA_VERSION:
        raise ValueError("unsupported vehicle config schema version")
    kind = data["kind"]
    pd = dict(data["params"])
    if kind == "car":
        params = CarParams(
            wheelbase=pd.get("wheelbase", 2.9),
            alpha_max=pd.get("alpha_max", np.pi / 4),
            omega_max=pd.get("omega_max", 0.5),
            u_max=pd.get("u_max", 40.0),
        )
    elif kind == "truck":
        params = TruckParams(
            l1=pd.get("l1", 4.6), m1=pd.get("m1", 1.6),
            l2=pd.get("l2", 3.5), l3=pd.get("l3", 8.0),
            alpha_max=pd.get("alpha_max", np.pi / 4),
            omega_max=pd.get("omega_max", 0.5),
            u_max=pd.get("u_max", 40.0),
            beta_max=pd.get("beta_max", 1.2),
        )
    else:
        raise ValueError(f"unknown vehicle kind {kind!r}")
    footprint = Footprint(
        tuple(
            FootprintDisc(d["anchor"], np.asarray(d["offset"]), d["radius"])
            for d in data["footprint"]
        )
    )
    return params, footprint, kind
