"""Direct transcription of (multiphase) optimal control problems.

Each phase is discretized by multiple shooting with a fixed-step RK4
integrator on the normalized horizon tau in [0, 1]; a free phase length S
scales the dynamics, so defects read  x_{i+1} - Phi(x_i, u_i, S) = 0.
The objective uses the RK4-consistent quadrature of the stage cost (the cost
is integrated with the same stage evaluations as the state), which makes the
transcribed objective of a single phase coincide exactly with the stored cost
of a motion primitive generated on the same grid, and makes lattice warm
starts feasible by construction.

Decision vector layout, phase by phase:
    [x_0 .. x_N (node states), u_0 .. u_{N-1} (interval controls), S?]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import separation_constraints


@dataclass
class PhaseSpec:
    """One fixed-mode phase of the OCP."""

    model: object
    mode: int
    steps: int
    length: float
    free_length: bool = False
    s_min: float = 0.0
    s_max: float = np.inf
    gamma: float = 1.0
    x_start: np.ndarray | None = None
    x_start_mask: np.ndarray | None = None
    x_goal: np.ndarray | None = None
    x_goal_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("phase needs at least one shooting interval")
        if self.free_length and self.s_min < 0:
            raise ValueError("free length lower bound must be >= 0")
        nx = self.model.nx
        for name in ("x_start", "x_goal"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (nx,):
                    raise ValueError(f"{name} has wrong dimension")
                setattr(self, name, v)
                mname = name + "_mask"
                m = getattr(self, mname)
                m = np.ones(nx, bool) if m is None else np.asarray(m, bool)
                setattr(self, mname, m)


@dataclass
class _PhaseLayout:
    nx: int
    nu: int
    steps: int
    x_off: int
    u_off: int
    s_off: int  # -1 when the length is fixed
    spec: PhaseSpec

    def x_slice(self, i):
        return slice(self.x_off + i * self.nx, self.x_off + (i + 1) * self.nx)

    def u_slice(self, i):
        return slice(self.u_off + i * self.nu, self.u_off + (i + 1) * self.nu)

    def states(self, z):
        return z[self.x_off:self.x_off + (self.steps + 1) * self.nx].reshape(
            self.steps + 1, self.nx
        )

    def controls(self, z):
        return z[self.u_off:self.u_off + self.steps * self.nu].reshape(
            self.steps, self.nu
        )

    def length(self, z):
        return z[self.s_off] if self.s_off >= 0 else self.spec.length


def rk4_interval(model, X, U, q, S, h):
    """One RK4 step (and cost increment) for a batch of intervals.

    X: (n, nx) left node states, U: (n, nu), q, S, h broadcastable to (n,).
    Returns (X_next, cost) where cost is the RK4 quadrature of the stage cost.
    """
    n = X.shape[0]
    q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
    S = np.broadcast_to(np.asarray(S, dtype=float), (n,))[:, None]
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))[:, None]
    f1 = model.f_batch(X, U, q)
    x2 = X + 0.5 * h * S * f1
    f2 = model.f_batch(x2, U, q)
    x3 = X + 0.5 * h * S * f2
    f3 = model.f_batch(x3, U, q)
    x4 = X + h * S * f3
    f4 = model.f_batch(x4, U, q)
    xn = X + (h * S / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    return xn, (x2, x3, x4)


def rk4_cost(model, X, stages, U, q, S, h, gamma):
    """RK4-consistent quadrature of the stage cost over a batch of intervals."""
    x2, x3, x4 = stages
    n = X.shape[0]
    q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
    S = np.broadcast_to(np.asarray(S, dtype=float), (n,))
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    l1 = model.stage_cost_batch(X, U, q, gamma)
    l2 = model.stage_cost_batch(x2, U, q, gamma)
    l3 = model.stage_cost_batch(x3, U, q, gamma)
    l4 = model.stage_cost_batch(x4, U, q, gamma)
    return (h * S / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)


def simulate_phase(model, x0, U, q, S, steps):
    """Forward RK4 rollout over one phase; returns node states (steps+1, nx)."""
    h = 1.0 / steps
    X = np.empty((steps + 1, model.nx))
    X[0] = x0
    for i in range(steps):
        xn, _ = rk4_interval(model, X[i][None], U[i][None], q, S, h)
        X[i + 1] = xn[0]
    return X


class TranscribedNLP:
    """Finite-dimensional program produced by multiple shooting.

    Equality residual order: all shooting defects (phase by phase), then
    initial boundary rows, phase linkage rows, and final boundary rows.
    Inequality residuals (all of the form r(z) >= 0): finite state bounds,
    control bounds, free-length bounds, then separation residuals.
    """

    def __init__(self, phases, env=None, footprint=None, sep_filter=None):
        if not phases:
            raise ValueError("at least one phase required")
        self.model = phases[0].model
        nx = self.model.nx
        for ph in phases:
            if ph.model.nx != nx or ph.model.nu != self.model.nu:
                raise ValueError("phases have incompatible state dimensions")
        self.env = env
        self.footprint = footprint

        self.layouts: list[_PhaseLayout] = []
        off = 0
        for ph in phases:
            lay = _PhaseLayout(
                nx=ph.model.nx, nu=ph.model.nu, steps=ph.steps,
                x_off=off, u_off=off + (ph.steps + 1) * ph.model.nx,
                s_off=-1, spec=ph,
            )
            off = lay.u_off + ph.steps * ph.model.nu
            if ph.free_length:
                lay.s_off = off
                off += 1
            self.layouts.append(lay)
        self.n = off

        self._sep_cons = []
        self._sep_included = None
        if env is not None and footprint is not None:
            self._sep_cons = separation_constraints(env, footprint)
            self._sep_included = []
            for p, lay in enumerate(self.layouts):
                nodes = []
                for i in range(lay.steps + 1):
                    if sep_filter is None:
                        ids = np.arange(len(self._sep_cons))
                    else:
                        ids = np.array(
                            [k for k, c in enumerate(self._sep_cons)
                             if sep_filter(p, i, c)],
                            dtype=int,
                        )
                    nodes.append(ids)
                self._sep_included.append(nodes)

        self._build_bound_rows()
        self._build_eq_index()

    # -- static row descriptions -------------------------------------------
    def _build_bound_rows(self):
        rows = []  # (var_index, sign, bound): residual = sign*(z[i] - bound) >= 0
        for lay in self.layouts:
            m = lay.spec.model
            for i in range(lay.steps + 1):
                sl = lay.x_slice(i)
                for k in range(lay.nx):
                    if np.isfinite(m.x_lower[k]):
                        rows.append((sl.start + k, 1.0, m.x_lower[k]))
                    if np.isfinite(m.x_upper[k]):
                        rows.append((sl.start + k, -1.0, m.x_upper[k]))
            for i in range(lay.steps):
                sl = lay.u_slice(i)
                for k in range(lay.nu):
                    if np.isfinite(m.u_lower[k]):
                        rows.append((sl.start + k, 1.0, m.u_lower[k]))
                    if np.isfinite(m.u_upper[k]):
                        rows.append((sl.start + k, -1.0, m.u_upper[k]))
            if lay.s_off >= 0:
                rows.append((lay.s_off, 1.0, lay.spec.s_min))
                if np.isfinite(lay.spec.s_max):
                    rows.append((lay.s_off, -1.0, lay.spec.s_max))
        self.bound_rows = rows
        self._bnd_idx = np.array([r[0] for r in rows], dtype=int)
        self._bnd_sign = np.array([r[1] for r in rows])
        self._bnd_val = np.array([r[2] for r in rows])

    def _build_eq_index(self):
        m = 0
        self._defect_off = []
        for lay in self.layouts:
            self._defect_off.append(m)
            m += lay.steps * lay.nx
        self._init_rows = []
        for p, lay in enumerate(self.layouts):
            if lay.spec.x_start is not None:
                idx = np.flatnonzero(lay.spec.x_start_mask)
                self._init_rows.append((p, idx, m))
                m += len(idx)
        self._link_off = m
        m += (len(self.layouts) - 1) * self.model.nx
        self._final_rows = []
        for p, lay in enumerate(self.layouts):
            if lay.spec.x_goal is not None:
                idx = np.flatnonzero(lay.spec.x_goal_mask)
                self._final_rows.append((p, idx, m))
                m += len(idx)
        self.m_eq = m

    @property
    def m_ineq(self):
        n_sep = 0
        if self._sep_included is not None:
            n_sep = sum(len(ids) for nodes in self._sep_included for ids in nodes)
        return len(self.bound_rows) + n_sep

    # -- evaluation ----------------------------------------------------------
    def _phase_rollout(self, z, lay):
        X = lay.states(z)
        U = lay.controls(z)
        S = lay.length(z)
        h = 1.0 / lay.steps
        xn, stages = rk4_interval(lay.spec.model, X[:-1], U, lay.spec.mode, S, h)
        return X, U, S, h, xn, stages

    def objective(self, z) -> float:
        total = 0.0
        for lay in self.layouts:
            X, U, S, h, _, stages = self._phase_rollout(z, lay)
            c = rk4_cost(
                lay.spec.model, X[:-1], stages, U, lay.spec.mode, S, h,
                lay.spec.gamma,
            )
            total += float(np.sum(c))
        return total

    def eq_constraints(self, z) -> np.ndarray:
        out = np.empty(self.m_eq)
        for p, lay in enumerate(self.layouts):
            X, U, S, h, xn, _ = self._phase_rollout(z, lay)
            d = X[1:] - xn
            out[self._defect_off[p]:self._defect_off[p] + d.size] = d.ravel()
        for p, idx, off in self._init_rows:
            lay = self.layouts[p]
            out[off:off + len(idx)] = lay.states(z)[0, idx] - lay.spec.x_start[idx]
        nx = self.model.nx
        for k in range(len(self.layouts) - 1):
            a, b = self.layouts[k], self.layouts[k + 1]
            out[self._link_off + k * nx:self._link_off + (k + 1) * nx] = (
                b.states(z)[0] - a.states(z)[-1]
            )
        for p, idx, off in self._final_rows:
            lay = self.layouts[p]
            out[off:off + len(idx)] = lay.states(z)[-1, idx] - lay.spec.x_goal[idx]
        return out

    def _sep_values_phase(self, z, p):
        lay = self.layouts[p]
        X = lay.states(z)
        model = lay.spec.model
        poses = model.anchor_poses_batch(X)  # (N+1, n_anchor, 3)
        vals = []
        for i in range(lay.steps + 1):
            ids = self._sep_included[p][i]
            if len(ids) == 0:
                continue
            centers = self._disc_centers(model, poses[i])
            vals.extend(
                self._sep_cons[k].value(centers[self._sep_cons[k].disc_index])
                for k in ids
            )
        return vals

    def _disc_centers(self, model, pose_row):
        fp = self.footprint
        out = np.empty((len(fp.discs), 2))
        for d_i, d in enumerate(fp.discs):
            a = model.anchors.index(d.anchor)
            x, y, th = pose_row[a]
            c, s = np.cos(th), np.sin(th)
            out[d_i, 0] = x + c * d.offset[0] - s * d.offset[1]
            out[d_i, 1] = y + s * d.offset[0] + c * d.offset[1]
        return out

    def ineq_constraints(self, z) -> np.ndarray:
        vals = [self._bnd_sign * (z[self._bnd_idx] - self._bnd_val)]
        if self._sep_included is not None:
            for p in range(len(self.layouts)):
                vals.append(np.asarray(self._sep_values_phase(z, p)))
        return np.concatenate([v for v in vals if v.size]) if vals else np.empty(0)

    def max_violation(self, z) -> float:
        v = 0.0
        if self.m_eq:
            v = float(np.max(np.abs(self.eq_constraints(z))))
        ineq = self.ineq_constraints(z)
        if ineq.size:
            v = max(v, float(max(0.0, -np.min(ineq))))
        return v

    def merit_parts(self, z):
        """(objective, eq l1-norm, ineq violation l1-norm, max violation).

        Single evaluation pass used by the solver's line search; returns all
        infinities when the dynamics are evaluated outside their domain.
        """
        f = self.objective(z)
        eq = self.eq_constraints(z)
        ineq = self.ineq_constraints(z)
        if not np.isfinite(f) or not np.all(np.isfinite(eq)):
            return np.inf, np.inf, np.inf, np.inf
        eq_l1 = float(np.sum(np.abs(eq))) if eq.size else 0.0
        max_v = float(np.max(np.abs(eq))) if eq.size else 0.0
        viol_l1 = 0.0
        if ineq.size:
            viol = np.maximum(0.0, -ineq)
            viol_l1 = float(np.sum(viol))
            max_v = max(max_v, float(np.max(viol)))
        return f, eq_l1, viol_l1, max_v

    # -- derivatives -----------------------------------------------------------
    def _interval_sensitivities(self, lay, z):
        """Per-interval RK4 value and derivative blocks for one phase."""
        model = lay.spec.model
        X, U, S, h, xn, (x2, x3, x4) = self._phase_rollout(z, lay)
        N, nx, nu = lay.steps, lay.nx, lay.nu
        q = lay.spec.mode
        gamma = lay.spec.gamma
        x1 = X[:-1]
        A1, B1 = model.jac_batch(x1, U, q)
        A2, B2 = model.jac_batch(x2, U, q)
        A3, B3 = model.jac_batch(x3, U, q)
        A4, B4 = model.jac_batch(x4, U, q)
        f1 = model.f_batch(x1, U, q)
        f2 = model.f_batch(x2, U, q)
        f3 = model.f_batch(x3, U, q)
        f4 = model.f_batch(x4, U, q)
        hs = h * S
        I = np.eye(nx)[None]

        dx2dx = I + 0.5 * hs * A1
        dx2du = 0.5 * hs * B1
        dx2dS = 0.5 * h * f1
        df2dx = A2 @ dx2dx
        df2du = A2 @ dx2du + B2
        df2dS = np.einsum("nij,nj->ni", A2, dx2dS)

        dx3dx = I + 0.5 * hs * df2dx
        dx3du = 0.5 * hs * df2du
        dx3dS = 0.5 * h * (f2 + S * df2dS)
        df3dx = A3 @ dx3dx
        df3du = A3 @ dx3du + B3
        df3dS = np.einsum("nij,nj->ni", A3, dx3dS)

        dx4dx = I + hs * df3dx
        dx4du = hs * df3du
        dx4dS = h * (f3 + S * df3dS)
        df4dx = A4 @ dx4dx
        df4du = A4 @ dx4du + B4
        df4dS = np.einsum("nij,nj->ni", A4, dx4dS)

        w = hs / 6.0  # scalar: S and h are constant within a phase
        dPhidx = I + w * (A1 + 2.0 * df2dx + 2.0 * df3dx + df4dx)
        dPhidu = w * (B1 + 2.0 * df2du + 2.0 * df3du + df4du)
        dPhidS = (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4) + w * (
            2.0 * df2dS + 2.0 * df3dS + df4dS
        )

        l1 = model.stage_cost_batch(x1, U, q, gamma)
        l2 = model.stage_cost_batch(x2, U, q, gamma)
        l3 = model.stage_cost_batch(x3, U, q, gamma)
        l4 = model.stage_cost_batch(x4, U, q, gamma)
        g1x, g1u = model.cost_grad_batch(x1, U, q, gamma)
        g2x, g2u = model.cost_grad_batch(x2, U, q, gamma)
        g3x, g3u = model.cost_grad_batch(x3, U, q, gamma)
        g4x, g4u = model.cost_grad_batch(x4, U, q, gamma)

        cost = (hs / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        dCdx = w * (
            g1x
            + 2.0 * np.einsum("ni,nij->nj", g2x, dx2dx)
            + 2.0 * np.einsum("ni,nij->nj", g3x, dx3dx)
            + np.einsum("ni,nij->nj", g4x, dx4dx)
        )
        dCdu = w * (
            g1u + 2.0 * g2u + 2.0 * g3u + g4u
            + 2.0 * np.einsum("ni,nij->nj", g2x, dx2du)
            + 2.0 * np.einsum("ni,nij->nj", g3x, dx3du)
            + np.einsum("ni,nij->nj", g4x, dx4du)
        )
        dCdS = (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4) + (hs / 6.0) * (
            2.0 * np.einsum("ni,ni->n", g2x, dx2dS)
            + 2.0 * np.einsum("ni,ni->n", g3x, dx3dS)
            + np.einsum("ni,ni->n", g4x, dx4dS)
        )
        defects = X[1:] - xn
        return {
            "X": X, "U": U, "S": S, "h": h,
            "defects": defects,
            "dPhidx": dPhidx, "dPhidu": dPhidu, "dPhidS": dPhidS,
            "cost": cost, "dCdx": dCdx, "dCdu": dCdu, "dCdS": dCdS,
        }

    def interval_data(self, z):
        """Sensitivity blocks for every phase (the solver's main input)."""
        return [self._interval_sensitivities(lay, z) for lay in self.layouts]

    def gradient(self, z) -> np.ndarray:
        g = np.zeros(self.n)
        for lay, data in zip(self.layouts, self.interval_data(z)):
            for i in range(lay.steps):
                g[lay.x_slice(i)] += data["dCdx"][i]
                g[lay.u_slice(i)] += data["dCdu"][i]
            if lay.s_off >= 0:
                g[lay.s_off] += float(np.sum(data["dCdS"]))
        return g

    def eq_jacobian(self, z) -> np.ndarray:
        J = np.zeros((self.m_eq, self.n))
        for p, lay in enumerate(self.layouts):
            data = self._interval_sensitivities(lay, z)
            base = self._defect_off[p]
            nx = lay.nx
            for i in range(lay.steps):
                rows = slice(base + i * nx, base + (i + 1) * nx)
                J[rows, lay.x_slice(i + 1)] = np.eye(nx)
                J[rows, lay.x_slice(i)] = -data["dPhidx"][i]
                J[rows, lay.u_slice(i)] = -data["dPhidu"][i]
                if lay.s_off >= 0:
                    J[rows, lay.s_off] = -data["dPhidS"][i]
        for p, idx, off in self._init_rows:
            lay = self.layouts[p]
            for r, k in enumerate(idx):
                J[off + r, lay.x_off + k] = 1.0
        nx = self.model.nx
        for k in range(len(self.layouts) - 1):
            a, b = self.layouts[k], self.layouts[k + 1]
            rows = slice(self._link_off + k * nx, self._link_off + (k + 1) * nx)
            J[rows, b.x_off:b.x_off + nx] = np.eye(nx)
            J[rows, a.x_off + a.steps * nx:a.x_off + (a.steps + 1) * nx] -= np.eye(nx)
        for p, idx, off in self._final_rows:
            lay = self.layouts[p]
            for r, k in enumerate(idx):
                J[off + r, lay.x_off + lay.steps * nx + k] = 1.0
        return J

    def sep_rows(self, z):
        """Separation residuals with gradient rows w.r.t. the node state.

        Returns a list of (phase, node, value, grad_x) in the fixed inequality
        ordering used by ineq_constraints().
        """
        if self._sep_included is None:
            return []
        rows = []
        for p, lay in enumerate(self.layouts):
            model = lay.spec.model
            X = lay.states(z)
            poses = model.anchor_poses_batch(X)
            for i in range(lay.steps + 1):
                ids = self._sep_included[p][i]
                if len(ids) == 0:
                    continue
                centers = self._disc_centers(model, poses[i])
                pose_jacs = model.anchor_pose_jac(X[i])
                dcdx = []
                for d in self.footprint.discs:
                    a = model.anchors.index(d.anchor)
                    th = poses[i, a, 2]
                    c, s = np.cos(th), np.sin(th)
                    doff = np.array(
                        [-s * d.offset[0] - c * d.offset[1],
                         c * d.offset[0] - s * d.offset[1]]
                    )
                    Jc = pose_jacs[a][:2, :] + np.outer(doff, pose_jacs[a][2, :])
                    dcdx.append(Jc)
                for k in ids:
                    con = self._sep_cons[k]
                    val = con.value(centers[con.disc_index])
                    g = con.grad_center(centers[con.disc_index]) @ dcdx[con.disc_index]
                    rows.append((p, i, val, g))
        return rows

    def ineq_jacobian(self, z) -> np.ndarray:
        J = np.zeros((self.m_ineq, self.n))
        r = 0
        for idx, sign in zip(self._bnd_idx, self._bnd_sign):
            J[r, idx] = sign
            r += 1
        for p, i, _val, g in self.sep_rows(z):
            lay = self.layouts[p]
            J[r, lay.x_slice(i)] = g
            r += 1
        return J

    # -- helpers --------------------------------------------------------------
    def pack(self, states_list, controls_list, lengths) -> np.ndarray:
        z = np.zeros(self.n)
        for lay, X, U, S in zip(self.layouts, states_list, controls_list, lengths):
            z[lay.x_off:lay.x_off + (lay.steps + 1) * lay.nx] = np.ravel(X)
            if lay.nu:
                z[lay.u_off:lay.u_off + lay.steps * lay.nu] = np.ravel(U)
            if lay.s_off >= 0:
                z[lay.s_off] = S
        return z

    def unpack(self, z):
        out = []
        for lay in self.layouts:
            out.append((lay.states(z).copy(), lay.controls(z).copy(),
                        float(lay.length(z))))
        return out


def transcribe(phases, env=None, footprint=None, sep_filter=None) -> TranscribedNLP:
    """Build the multiple-shooting NLP for a list of phases."""
    return TranscribedNLP(phases, env=env, footprint=footprint,
                          sep_filter=sep_filter)


def check_derivatives(nlp: TranscribedNLP, z, step=1e-6) -> float:
    """Worst relative error of programmed derivatives vs central differences."""
    z = np.asarray(z, dtype=float)

    def rel(a, b):
        scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0,
                    float(np.max(np.abs(b))) if b.size else 1.0)
        return float(np.max(np.abs(a - b))) / scale if a.size else 0.0

    g = nlp.gradient(z)
    g_fd = np.zeros_like(g)
    for k in range(nlp.n):
        hk = step * max(1.0, abs(z[k]))
        zp, zm = z.copy(), z.copy()
        zp[k] += hk
        zm[k] -= hk
        g_fd[k] = (nlp.objective(zp) - nlp.objective(zm)) / (2 * hk)
    worst = rel(g, g_fd)

    Je = nlp.eq_jacobian(z)
    Ji = nlp.ineq_jacobian(z)
    Je_fd = np.zeros_like(Je)
    Ji_fd = np.zeros_like(Ji)
    for k in range(nlp.n):
        hk = step * max(1.0, abs(z[k]))
        zp, zm = z.copy(), z.copy()
        zp[k] += hk
        zm[k] -= hk
        Je_fd[:, k] = (nlp.eq_constraints(zp) - nlp.eq_constraints(zm)) / (2 * hk)
        Ji_fd[:, k] = (nlp.ineq_constraints(zp) - nlp.ineq_constraints(zm)) / (2 * hk)
    worst = max(worst, rel(Je, Je_fd), rel(Ji, Ji_fd))
    return worst
