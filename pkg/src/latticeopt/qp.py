"""Dense active-set solver for strictly convex quadratic programs.

Implements the dual active-set method of Goldfarb and Idnani: starting from
the unconstrained minimizer, violated constraints are added one at a time,
with dual steps dropping blocking constraints along the way.  No feasible
starting point is needed, which suits SQP subproblems.  Equality rows are
entered first and are never dropped (their multipliers may take any sign).

Problem form:
    minimize 1/2 x'Hx + g'x
    subject to A_eq x  = b_eq
               A_in x >= b_in
with H symmetric positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass
class QPResult:
    x: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    status: str            # optimal | infeasible | maxiter
    iterations: int = 0
    active: list = field(default_factory=list)


class _ActiveSet:
    """Signed active rows with incremental V = H^-1 A' and G = A H^-1 A'."""

    def __init__(self, n):
        self.rows = np.zeros((0, n))
        self.idx: list[int] = []     # original constraint index
        self.sign: list[float] = []
        self.is_eq: list[bool] = []
        self.lam = np.zeros(0)
        self.V = np.zeros((n, 0))
        self.G = np.zeros((0, 0))

    def __len__(self):
        return len(self.idx)

    def add(self, p, a, sign, is_eq, va, lam_p):
        k = len(self.idx)
        Gn = np.empty((k + 1, k + 1))
        Gn[:k, :k] = self.G
        if k:
            Gn[:k, k] = self.rows @ va
            Gn[k, :k] = a @ self.V
        Gn[k, k] = a @ va
        self.G = Gn
        self.V = np.hstack([self.V, va[:, None]])
        self.rows = np.vstack([self.rows, a[None, :]])
        self.idx.append(p)
        self.sign.append(sign)
        self.is_eq.append(is_eq)
        self.lam = np.append(self.lam, lam_p)

    def drop(self, j):
        keep = [i for i in range(len(self.idx)) if i != j]
        self.rows = self.rows[keep]
        self.V = self.V[:, keep]
        self.G = self.G[np.ix_(keep, keep)]
        self.lam = self.lam[keep]
        del self.idx[j]
        del self.sign[j]
        del self.is_eq[j]

    def dual_dir(self, a, va):
        """(z, r): primal direction and multiplier rates when adding row a."""
        if len(self.idx) == 0:
            return va, np.zeros(0)
        try:
            r = np.linalg.solve(self.G, self.rows @ va)
        except np.linalg.LinAlgError:
            r = np.linalg.lstsq(self.G, self.rows @ va, rcond=None)[0]
        return va - self.V @ r, r


def solve_qp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None,
             tol=1e-9, max_iter=None) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_in = np.zeros((0, n)) if A_in is None else np.asarray(A_in, dtype=float)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    m_eq, m_in = A_eq.shape[0], A_in.shape[0]
    if max_iter is None:
        max_iter = 50 * (m_eq + m_in + n) + 200

    cf = cho_factor(H, lower=True)
    x = -cho_solve(cf, g)
    ws = _ActiveSet(n)
    iters = 0
    eq_queue = list(range(m_eq))
    scale_in = np.maximum(1.0, np.abs(b_in)) if m_in else np.zeros(0)

    def result(status):
        lam_eq = np.zeros(m_eq)
        lam_in = np.zeros(m_in)
        for j, p in enumerate(ws.idx):
            if p < m_eq:
                lam_eq[p] = ws.sign[j] * ws.lam[j]
            else:
                lam_in[p - m_eq] = ws.lam[j]
        return QPResult(x, lam_eq, lam_in, status, iters, list(ws.idx))

    while True:
        iters += 1
        if iters > max_iter:
            return result("maxiter")

        # select the next constraint to enforce
        if eq_queue:
            p = eq_queue.pop(0)
            viol = b_eq[p] - A_eq[p] @ x
            sign = 1.0 if viol >= 0 else -1.0
            a = sign * A_eq[p]
            bb = sign * b_eq[p]
            is_eq = True
            if abs(viol) <= tol * max(1.0, abs(b_eq[p])):
                ws.add(p, a, sign, True, cho_solve(cf, a), 0.0)
                continue
        else:
            if m_in == 0:
                break
            s = (A_in @ x - b_in) / scale_in
            for j, p0 in enumerate(ws.idx):
                if p0 >= m_eq:
                    s[p0 - m_eq] = np.inf
            worst = int(np.argmin(s))
            if s[worst] >= -tol:
                break
            p = m_eq + worst
            sign = 1.0
            a = A_in[worst]
            bb = b_in[worst]
            is_eq = False

        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return result("maxiter")
            va = cho_solve(cf, a)
            z, r = ws.dual_dir(a, va)
            az = a @ z
            znorm = float(np.max(np.abs(z))) if n else 0.0

            t1, j1 = np.inf, -1
            for j in range(len(ws)):
                if not ws.is_eq[j] and r[j] > tol:
                    tj = ws.lam[j] / r[j]
                    if tj < t1 - 1e-14:
                        t1, j1 = tj, j
            if znorm > tol and az > 0.0:
                t2 = (bb - a @ x) / az
            else:
                t2 = np.inf

            if not np.isfinite(t1) and not np.isfinite(t2):
                if is_eq and abs(bb - a @ x) <= 1e-8 * max(1.0, abs(bb)):
                    break  # linearly dependent but consistent equality row
                return result("infeasible")

            t = min(t1, t2)
            if np.isfinite(t2) or znorm > tol:
                x = x + t * z
            if len(ws):
                ws.lam = ws.lam - t * r
            lam_p += t
            if t == t2:
                ws.add(p, a, sign, is_eq, cho_solve(cf, a), lam_p)
                break
            ws.drop(j1)

    return result("optimal")
