"""SQP solver for the transcribed problems, built around warm starts.

The solver iterates: linearize, solve a strictly convex QP (damped-BFGS
quadratic model, dual active-set subproblem solver), then backtrack on an
l1 merit function.  Feasible warm starts therefore never see their objective
increase, which is the property the lattice warm start relies on.

Shooting structure is exploited by condensing: interior node states are
eliminated through the linearized dynamics per phase (keeping the phase
initial states as variables, so long multi-phase horizons do not accumulate
sensitivity products), which shrinks the QP to the controls, phase lengths
and phase boundary states.  Problems without shooting structure (anything
exposing objective/gradient/constraint Jacobians) run in the full space.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .qp import solve_qp


@dataclass
class SolverConfig:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    max_iter: int = 200
    ls_max_steps: int = 30
    armijo: float = 1e-4
    backtrack: float = 0.5
    penalty_init: float = 10.0
    bfgs_damping: float = 0.2
    hessian_reg: float = 1e-8
    qp_tol: float = 1e-9
    elastic_eps: float = 1e-6
    tr_init: float = 2.0
    tr_max: float = 50.0
    tr_min: float = 1e-8
    tr_retries: int = 8

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class SolveReport:
    status: str = "max-iter"   # converged | max-iter | infeasible | line-search-failure
    iterations: int = 0
    objective: float = np.nan
    max_violation: float = np.nan
    kkt_residual: float = np.nan
    solve_time: float = 0.0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class _FullAdapter:
    """Full-space linearization for generic problems."""

    def __init__(self, problem):
        self.p = problem
        self.n_red = problem.n

    def merit_parts(self, z):
        if hasattr(self.p, "merit_parts"):
            return self.p.merit_parts(z)
        f = self.p.objective(z)
        eq = self.p.eq_constraints(z)
        ineq = self.p.ineq_constraints(z)
        if not np.isfinite(f) or not np.all(np.isfinite(eq)):
            return np.inf, np.inf, np.inf, np.inf
        eq_l1 = float(np.sum(np.abs(eq))) if eq.size else 0.0
        mx = float(np.max(np.abs(eq))) if eq.size else 0.0
        viol_l1 = 0.0
        if ineq.size:
            v = np.maximum(0.0, -ineq)
            viol_l1 = float(np.sum(v))
            mx = max(mx, float(np.max(v)))
        return f, eq_l1, viol_l1, mx

    def build(self, z):
        f, eq_l1, viol_l1, max_v = self.merit_parts(z)
        g = self.p.gradient(z)
        A_eq = self.p.eq_jacobian(z)
        b_eq = -self.p.eq_constraints(z)
        A_in = self.p.ineq_jacobian(z)
        b_in = -self.p.ineq_constraints(z)
        return {
            "g_red": g, "A_eq": A_eq, "b_eq": b_eq, "A_in": A_in, "b_in": b_in,
            "f": f, "eq_l1": eq_l1, "viol_l1": viol_l1, "max_viol": max_v,
            "g_full": g, "n_bound_rows": 0,
        }

    def step_to_full(self, build, dz):
        return dz


class _CondensedAdapter:
    """Per-phase condensing of a TranscribedNLP."""

    def __init__(self, nlp):
        self.nlp = nlp
        self.c_x0 = []
        self.c_u = []
        self.c_s = []
        off = 0
        for lay in nlp.layouts:
            self.c_x0.append(off)
            off += lay.nx
            self.c_u.append(off)
            off += lay.steps * lay.nu
            if lay.s_off >= 0:
                self.c_s.append(off)
                off += 1
            else:
                self.c_s.append(-1)
        self.n_red = off
        self.col_idx = []
        for p, lay in enumerate(nlp.layouts):
            cols = list(range(self.c_x0[p], self.c_x0[p] + lay.nx))
            cols += list(range(self.c_u[p], self.c_u[p] + lay.steps * lay.nu))
            if self.c_s[p] >= 0:
                cols.append(self.c_s[p])
            self.col_idx.append(np.array(cols, dtype=int))

    def merit_parts(self, z):
        return self.nlp.merit_parts(z)

    def build(self, z):
        nlp = self.nlp
        data = nlp.interval_data(z)
        bad = any(
            not (np.all(np.isfinite(d["defects"])) and np.all(np.isfinite(d["dPhidx"])))
            for d in data
        )
        if bad:
            raise FloatingPointError("NaN in linearization")
        chains = []
        g_red = np.zeros(self.n_red)
        g_full = np.zeros(nlp.n)
        f = 0.0
        for p, (lay, d) in enumerate(zip(nlp.layouts, data)):
            N, nx, nu = lay.steps, lay.nx, lay.nu
            nz = len(self.col_idx[p])
            T = np.zeros((N + 1, nx, nz))
            t = np.zeros((N + 1, nx))
            T[0, :, :nx] = np.eye(nx)
            for i in range(N):
                T[i + 1] = d["dPhidx"][i] @ T[i]
                cu = nx + i * nu
                T[i + 1][:, cu:cu + nu] += d["dPhidu"][i]
                if self.c_s[p] >= 0:
                    T[i + 1][:, -1] += d["dPhidS"][i]
                t[i + 1] = d["dPhidx"][i] @ t[i] - d["defects"][i]
            chains.append((T, t))
            f += float(np.sum(d["cost"]))
            gp = np.zeros(nz)
            for i in range(N):
                gp += d["dCdx"][i] @ T[i]
                cu = nx + i * nu
                gp[cu:cu + nu] += d["dCdu"][i]
                g_full[lay.x_slice(i)] += d["dCdx"][i]
                g_full[lay.u_slice(i)] += d["dCdu"][i]
            if self.c_s[p] >= 0:
                gp[-1] += float(np.sum(d["dCdS"]))
                g_full[lay.s_off] += float(np.sum(d["dCdS"]))
            g_red[self.col_idx[p]] += gp

        rows_eq, rhs_eq = [], []
        nx = nlp.model.nx
        eq_l1 = 0.0
        max_v = 0.0
        # initial boundary rows
        for p, idx, _off in nlp._init_rows:
            lay = nlp.layouts[p]
            x0 = lay.states(z)[0]
            for k in idx:
                row = np.zeros(self.n_red)
                row[self.c_x0[p] + k] = 1.0
                c = x0[k] - lay.spec.x_start[k]
                rows_eq.append(row)
                rhs_eq.append(-c)
                eq_l1 += abs(c)
                max_v = max(max_v, abs(c))
        # linkage rows
        for k in range(len(nlp.layouts) - 1):
            a_lay, b_lay = nlp.layouts[k], nlp.layouts[k + 1]
            T_N, t_N = chains[k][0][-1], chains[k][1][-1]
            c = b_lay.states(z)[0] - a_lay.states(z)[-1]
            block = np.zeros((nx, self.n_red))
            block[:, self.c_x0[k + 1]:self.c_x0[k + 1] + nx] = np.eye(nx)
            block[:, self.col_idx[k]] -= T_N
            for r in range(nx):
                rows_eq.append(block[r])
                rhs_eq.append(t_N[r] - c[r])
                eq_l1 += abs(c[r])
                max_v = max(max_v, abs(c[r]))
        # final boundary rows
        for p, idx, _off in nlp._final_rows:
            lay = nlp.layouts[p]
            T_N, t_N = chains[p][0][-1], chains[p][1][-1]
            xN = lay.states(z)[-1]
            for k in idx:
                row = np.zeros(self.n_red)
                row[self.col_idx[p]] = T_N[k]
                c = xN[k] - lay.spec.x_goal[k]
                rows_eq.append(row)
                rhs_eq.append(-c - t_N[k])
                eq_l1 += abs(c)
                max_v = max(max_v, abs(c))
        # defect contribution to the merit bookkeeping
        for d in data:
            eq_l1 += float(np.sum(np.abs(d["defects"])))
            if d["defects"].size:
                max_v = max(max_v, float(np.max(np.abs(d["defects"]))))

        rows_in, rhs_in = [], []
        viol_l1 = 0.0
        for p, lay in enumerate(nlp.layouts):
            m = lay.spec.model
            T, t = chains[p]
            X = lay.states(z)
            U = lay.controls(z)
            for i in range(lay.steps + 1):
                for k in range(lay.nx):
                    for sign, val in ((1.0, m.x_lower[k]), (-1.0, m.x_upper[k])):
                        if not np.isfinite(val):
                            continue
                        row = np.zeros(self.n_red)
                        row[self.col_idx[p]] = sign * T[i][k]
                        b = sign * (val - X[i, k]) + sign * (-t[i][k])
                        rows_in.append(row)
                        rhs_in.append(b)
                        resid = sign * (X[i, k] - val)
                        viol_l1 += max(0.0, -resid)
                        max_v = max(max_v, -min(0.0, resid))
            for i in range(lay.steps):
                for k in range(lay.nu):
                    for sign, val in ((1.0, m.u_lower[k]), (-1.0, m.u_upper[k])):
                        if not np.isfinite(val):
                            continue
                        row = np.zeros(self.n_red)
                        row[self.c_u[p] + i * lay.nu + k] = sign
                        rows_in.append(row)
                        rhs_in.append(sign * (val - U[i, k]))
                        resid = sign * (U[i, k] - val)
                        viol_l1 += max(0.0, -resid)
                        max_v = max(max_v, -min(0.0, resid))
            if self.c_s[p] >= 0:
                S = lay.length(z)
                for sign, val in ((1.0, lay.spec.s_min), (-1.0, lay.spec.s_max)):
                    if not np.isfinite(val):
                        continue
                    row = np.zeros(self.n_red)
                    row[self.c_s[p]] = sign
                    rows_in.append(row)
                    rhs_in.append(sign * (val - S))
                    resid = sign * (S - val)
                    viol_l1 += max(0.0, -resid)
                    max_v = max(max_v, -min(0.0, resid))
        n_bound_rows = len(rows_in)
        for p, i, val, gx in nlp.sep_rows(z):
            T, t = chains[p]
            row = np.zeros(self.n_red)
            row[self.col_idx[p]] = gx @ T[i]
            rows_in.append(row)
            rhs_in.append(-val - gx @ t[i])
            viol_l1 += max(0.0, -val)
            max_v = max(max_v, -min(0.0, val))

        A_eq = np.array(rows_eq).reshape(-1, self.n_red)
        A_in = np.array(rows_in).reshape(-1, self.n_red)
        return {
            "g_red": g_red, "g_full": g_full,
            "A_eq": A_eq, "b_eq": np.asarray(rhs_eq, dtype=float),
            "A_in": A_in, "b_in": np.asarray(rhs_in, dtype=float),
            "f": f, "eq_l1": eq_l1, "viol_l1": viol_l1, "max_viol": max_v,
            "chains": chains, "n_bound_rows": n_bound_rows,
        }

    def step_to_full(self, build, dz):
        nlp = self.nlp
        dz_full = np.zeros(nlp.n)
        for p, lay in enumerate(nlp.layouts):
            T, t = build["chains"][p]
            local = dz[self.col_idx[p]]
            for i in range(lay.steps + 1):
                dz_full[lay.x_slice(i)] = T[i] @ local + t[i]
            dz_full[lay.u_off:lay.u_off + lay.steps * lay.nu] = dz[
                self.c_u[p]:self.c_u[p] + lay.steps * lay.nu
            ]
            if lay.s_off >= 0:
                dz_full[lay.s_off] = dz[self.c_s[p]]
        return dz_full


def _elastic_qp(H, B, rho, cfg):
    """l1-elastic subproblem: relax equality rows and currently violated
    inequality rows with slacks penalized at rate rho.

    With rho equal to the merit penalty this is the Sl1QP step: it minimizes
    the quadratic model of the l1 merit function, so it always has a solution
    and yields a descent direction whenever linearized progress is possible.
    Returns (QPResult with x truncated to the original variables, slack_sum).
    """
    n = H.shape[0]
    A_eq, b_eq = B["A_eq"], B["b_eq"]
    A_in, b_in = B["A_in"], B["b_in"]
    m_eq = A_eq.shape[0]
    # relax every simple-bound row plus anything already violated; defect
    # corrections routinely conflict with state bounds in a single step
    n_bound = B.get("n_bound_rows", 0)
    if b_in.size:
        mask = b_in > 0
        mask[:n_bound] = True
        viol_idx = np.flatnonzero(mask)
    else:
        viol_idx = np.array([], dtype=int)
    n_s = 2 * m_eq + len(viol_idx)
    if n_s == 0:
        return None, 0.0
    n_ext = n + n_s
    H_ext = np.zeros((n_ext, n_ext))
    H_ext[:n, :n] = H
    H_ext[n:, n:] = np.eye(n_s) * cfg.elastic_eps
    g_ext = np.concatenate([B["g_red"], rho * np.ones(n_s)])
    A_eq_ext = np.zeros((m_eq, n_ext))
    A_eq_ext[:, :n] = A_eq
    for r in range(m_eq):
        A_eq_ext[r, n + 2 * r] = 1.0
        A_eq_ext[r, n + 2 * r + 1] = -1.0
    rows_in = []
    rhs_in = []
    if A_in.size:
        A_in_ext = np.zeros((A_in.shape[0], n_ext))
        A_in_ext[:, :n] = A_in
        for j, r in enumerate(viol_idx):
            A_in_ext[r, n + 2 * m_eq + j] = 1.0
        rows_in.append(A_in_ext)
        rhs_in.append(b_in)
    slack_rows = np.zeros((n_s, n_ext))
    slack_rows[:, n:] = np.eye(n_s)
    rows_in.append(slack_rows)
    rhs_in.append(np.zeros(n_s))
    A_in_full = np.vstack(rows_in)
    b_in_full = np.concatenate(rhs_in)
    res = solve_qp(H_ext, g_ext, A_eq_ext, b_eq, A_in_full, b_in_full,
                   tol=cfg.qp_tol)
    if res.status != "optimal":
        return None, 0.0
    slack_sum = float(np.sum(res.x[n:]))
    res.x = res.x[:n]
    res.lam_in = res.lam_in[: A_in.shape[0]] if A_in.size else np.zeros(0)
    return res, slack_sum


def solve(problem, z0, config: SolverConfig | None = None, callback=None):
    """Solve an NLP from the given initial point.

    Returns (z, SolveReport).  Never raises on non-convergence; the report
    status carries the outcome.  `callback(info_dict)` fires once per
    iteration, mainly for diagnostics.
    """
    cfg = config or SolverConfig()
    t_start = time.perf_counter()
    adapter = (
        _CondensedAdapter(problem)
        if hasattr(problem, "interval_data")
        else _FullAdapter(problem)
    )
    z = np.array(z0, dtype=float)
    n_red = adapter.n_red
    H = np.eye(n_red)
    nu_pen = cfg.penalty_init
    prev = None
    prev_lam_eq = prev_lam_in = None
    first_update = True
    no_progress = 0
    delta = cfg.tr_init
    status, message = "max-iter", ""
    kkt = np.nan
    it = 0
    eye_tr = np.eye(n_red)
    A_tr = np.vstack([eye_tr, -eye_tr])

    for it in range(1, cfg.max_iter + 1):
        try:
            B = adapter.build(z)
        except FloatingPointError:
            status, message = "line-search-failure", "non-finite linearization"
            break
        g_red = B["g_red"]

        # damped BFGS update on the reduced variables
        if prev is not None:
            s_c, gL_old = prev
            gL_new = g_red.copy()
            if B["A_eq"].size:
                gL_new -= B["A_eq"].T @ prev_lam_eq
            if B["A_in"].size:
                gL_new -= B["A_in"].T @ prev_lam_in
            y = gL_new - gL_old
            sBs = float(s_c @ (H @ s_c))
            sy = float(s_c @ y)
            if sBs > 1e-16 and np.linalg.norm(s_c, np.inf) > 1e-14:
                if first_update and sy > 1e-12:
                    scale = float(y @ y) / sy
                    if np.isfinite(scale) and scale > 1e-8:
                        H = np.eye(n_red) * min(max(scale, 1e-4), 1e8)
                    first_update = False
                Bs = H @ s_c
                sBs = float(s_c @ Bs)
                if sy < cfg.bfgs_damping * sBs:
                    theta = (1.0 - cfg.bfgs_damping) * sBs / (sBs - sy)
                    y = theta * y + (1.0 - theta) * Bs
                    sy = float(s_c @ y)
                if sy > 1e-16 and sBs > 1e-16:
                    H = H - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
                    H = 0.5 * (H + H.T)
            prev = None

        H_qp = H + cfg.hessian_reg * np.eye(n_red)
        try:
            np.linalg.cholesky(H_qp)
        except np.linalg.LinAlgError:
            H = np.eye(n_red)
            H_qp = H + cfg.hessian_reg * np.eye(n_red)

        infeas0 = B["eq_l1"] + B["viol_l1"]
        accepted = False
        stop = False
        for _tr_round in range(cfg.tr_retries):
            # trust-region rows are algorithmic: appended last, never relaxed
            b_tr = np.full(2 * n_red, -delta)
            A_in = (
                np.vstack([B["A_in"], A_tr]) if B["A_in"].size else A_tr
            )
            b_in = np.concatenate([B["b_in"], b_tr])
            Bq = dict(B, A_in=A_in, b_in=b_in)

            elastic = False
            slack_sum = 0.0
            qp = solve_qp(H_qp, g_red, B["A_eq"], B["b_eq"], A_in, b_in,
                          tol=cfg.qp_tol)
            if qp.status == "infeasible":
                elastic = True
                qp = None
                for rho_scale in (1.0, 10.0, 100.0):
                    cand, s_sum = _elastic_qp(
                        H_qp, Bq, rho=rho_scale * nu_pen, cfg=cfg
                    )
                    if cand is None or cand.status != "optimal":
                        continue
                    qp, slack_sum = cand, s_sum
                    if infeas0 - slack_sum > 1e-8 * max(1.0, infeas0):
                        break
                if qp is None:
                    status, message = "infeasible", "QP subproblem infeasible"
                    stop = True
                    break
            elif qp.status != "optimal":
                status, message = "line-search-failure", "QP did not terminate"
                stop = True
                break

            dz = qp.x
            lam_eq = qp.lam_eq
            lam_in = qp.lam_in[: B["A_in"].shape[0]] if B["A_in"].size else (
                np.zeros(0)
            )

            gL = g_red.copy()
            if B["A_eq"].size:
                gL -= B["A_eq"].T @ lam_eq
            if B["A_in"].size:
                gL -= B["A_in"].T @ lam_in
            if qp.lam_in.size > B["A_in"].shape[0]:
                lam_tr = qp.lam_in[B["A_in"].shape[0]:]
                gL -= A_tr.T @ lam_tr
            kkt = float(np.max(np.abs(gL))) if gL.size else 0.0
            kkt_scale = max(
                1.0, float(np.max(np.abs(g_red))) if g_red.size else 1.0
            )

            if B["max_viol"] <= cfg.feas_tol and (
                kkt <= cfg.opt_tol * kkt_scale
                or float(np.max(np.abs(dz))) <= 1e-14
            ):
                status = "converged"
                stop = True
                break

            if elastic:
                if infeas0 - slack_sum <= 1e-10 * max(1.0, infeas0):
                    no_progress += 1
                    if no_progress >= 5:
                        status = "infeasible"
                        message = "stationary point of constraint violation"
                        stop = True
                        break
                else:
                    no_progress = 0
                if slack_sum > max(cfg.feas_tol, 0.5 * infeas0):
                    nu_pen = min(nu_pen * 2.0, 1e6)
            else:
                no_progress = 0
                lam_max = 0.0
                if lam_eq.size:
                    lam_max = float(np.max(np.abs(lam_eq)))
                if lam_in.size:
                    lam_max = max(lam_max, float(np.max(np.abs(lam_in))))
                if nu_pen < 1.2 * lam_max:
                    nu_pen = 2.0 * lam_max + 0.1

            dz_full = adapter.step_to_full(B, dz)
            d_f = float(B["g_full"] @ dz_full)
            phi0 = B["f"] + nu_pen * infeas0
            d_phi = d_f - nu_pen * (infeas0 - slack_sum)
            if d_phi > -1e-14 * max(1.0, abs(phi0)):
                if (
                    B["max_viol"] <= cfg.feas_tol
                    and kkt <= 10 * cfg.opt_tol * kkt_scale
                ):
                    status = "converged"
                    stop = True
                else:
                    delta *= 0.25
                    if delta < cfg.tr_min:
                        status = "line-search-failure"
                        message = "no descent direction"
                        stop = True
                if stop:
                    break
                continue

            alpha = 1.0
            for _ls in range(cfg.ls_max_steps):
                z_t = z + alpha * dz_full
                f_t, eq_t, viol_t, _ = adapter.merit_parts(z_t)
                phi_t = f_t + nu_pen * (eq_t + viol_t)
                if np.isfinite(phi_t) and phi_t <= phi0 + cfg.armijo * alpha * d_phi:
                    accepted = True
                    break
                alpha *= cfg.backtrack
                if alpha * float(np.max(np.abs(dz_full))) < 1e-14:
                    break
            if accepted:
                z = z + alpha * dz_full
                prev = (alpha * dz, gL.copy())
                prev_lam_eq, prev_lam_in = lam_eq, lam_in
                if alpha >= 0.99:
                    delta = min(delta * 1.6, cfg.tr_max)
                elif alpha < 0.25:
                    delta = max(delta * 0.5, cfg.tr_min)
                if callback is not None:
                    callback({
                        "iter": it, "f": B["f"], "max_viol": B["max_viol"],
                        "kkt": kkt, "alpha": alpha, "d_phi": d_phi,
                        "nu": nu_pen, "elastic": elastic, "delta": delta,
                        "step_inf": float(np.max(np.abs(dz_full))),
                    })
                break
            delta *= 0.25
            if delta < cfg.tr_min:
                status, message = "line-search-failure", "merit line search failed"
                stop = True
                break
        if stop:
            break
        if not accepted and status not in ("converged",):
            if status == "max-iter":
                status, message = "line-search-failure", "trust region collapsed"
            break

    f_fin, _, _, max_v = adapter.merit_parts(z)
    report = SolveReport(
        status=status,
        iterations=it,
        objective=float(f_fin),
        max_violation=float(max_v),
        kkt_residual=float(kkt) if np.isfinite(kkt) else np.nan,
        solve_time=time.perf_counter() - t_start,
        message=message,
    )
    if status == "converged" and max_v > cfg.feas_tol * 10:
        report.status = "line-search-failure"
        report.message = "converged flag with residual violation"
    return z, report


@dataclass
class FunctionalProblem:
    """Adapter for plain-function problems (used in tests and demos)."""

    n: int
    objective: callable
    gradient: callable
    eq: callable = None
    eq_jac: callable = None
    ineq: callable = None
    ineq_jac: callable = None

    def eq_constraints(self, z):
        return self.eq(z) if self.eq else np.zeros(0)

    def eq_jacobian(self, z):
        return self.eq_jac(z) if self.eq_jac else np.zeros((0, self.n))

    def ineq_constraints(self, z):
        return self.ineq(z) if self.ineq else np.zeros(0)

    def ineq_jacobian(self, z):
        return self.ineq_jac(z) if self.ineq_jac else np.zeros((0, self.n))
