"""Linear programs and a dense bounded-variable revised simplex.

Problems have the form::

    minimise    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lb <= x <= ub

The in-house solver keeps an explicit basis inverse, updated by elementary
row operations after each pivot and refactorised periodically. Pricing is
Dantzig's rule; after a run of degenerate pivots it falls back to Bland's
rule, which cannot cycle. ``backend="highs"`` hands the same problem to
``scipy.optimize.linprog`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse

Status = Literal["optimal", "infeasible", "unbounded", "error"]


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n(self) -> int:
        return self.c.size

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub, lb, ub)

    def residuals(self, x: np.ndarray) -> tuple[float, float, float]:
        """Worst equality, inequality and bound violation at ``x``."""
        eq = float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0))
        ub = float(np.max(self.A_ub @ x - self.b_ub, initial=0.0))
        bd = float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))
        return eq, max(ub, 0.0), bd


@dataclass(frozen=True)
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = np.nan
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _dense(a) -> np.ndarray:
    return a.toarray() if sparse.issparse(a) else np.asarray(a, float)


def solve_lp(lp: LinearProgram, backend: str = "simplex", **kw) -> LpSolution:
    """Solve ``lp`` with the in-house simplex or HiGHS."""
    if backend == "simplex":
        return RevisedSimplex(lp, **kw).solve()
    if backend == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown LP backend {backend!r}")


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    if np.any(lp.lb > lp.ub):
        return LpSolution("infeasible", message="contradictory bounds")
    res = linprog(
        lp.c,
        A_ub=lp.A_ub if lp.A_ub.shape[0] else None, b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None, b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=np.column_stack([lp.lb, lp.ub]), method="highs",
    )
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    if status != "optimal":
        return LpSolution(status, iterations=int(getattr(res, "nit", 0)), message=res.message)
    return LpSolution("optimal", np.asarray(res.x), float(res.fun), int(res.nit), res.message)


class RevisedSimplex:
    """Two-phase bounded-variable revised simplex on a dense basis inverse."""

    def __init__(self, lp: LinearProgram, *, tol: float = 1e-9, max_iter: int = 50_000,
                 refactor_every: int = 64, bland_after: int = 50):
        self.lp = lp
        self.tol = tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.bland_after = bland_after

    def _setup(self):
        lp = self.lp
        n = lp.n
        A_eq, A_ub = _dense(lp.A_eq), _dense(lp.A_ub)
        m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
        m = m_eq + m_ub
        # structural | slacks | artificials
        A = np.zeros((m, n + m_ub + m))
        A[:m_eq, :n] = A_eq
        A[m_eq:, :n] = A_ub
        A[m_eq:, n:n + m_ub] = np.eye(m_ub)
        b = np.concatenate([lp.b_eq, lp.b_ub]).astype(float)
        lo = np.concatenate([lp.lb, np.zeros(m_ub), np.zeros(m)]).astype(float)
        hi = np.concatenate([lp.ub, np.full(m_ub, np.inf), np.full(m, np.inf)]).astype(float)

        x = np.zeros(A.shape[1])
        for j in range(n):
            x[j] = lo[j] if np.isfinite(lo[j]) else (hi[j] if np.isfinite(hi[j]) else 0.0)
        r = b - A[:, :n] @ x[:n]

        basis = np.empty(m, dtype=int)
        art0 = n + m_ub
        for i in range(m):
            if i >= m_eq and r[i] >= 0:
                basis[i] = n + (i - m_eq)  # slack starts feasible
                x[basis[i]] = r[i]
                hi[art0 + i] = 0.0
            else:
                basis[i] = art0 + i
                A[i, art0 + i] = 1.0 if r[i] >= 0 else -1.0
                x[art0 + i] = abs(r[i])
        self.A = sparse.csc_matrix(A)
        self.AT = self.A.T.tocsr()
        self.b, self.lo, self.hi, self.x = b, lo, hi, x
        self.basis = basis
        self.n, self.m, self.art0 = n, m, art0
        self.is_basic = np.zeros(A.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        xN = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xN)

    def _iterate(self, cost: np.ndarray, phase: int) -> Status | None:
        tol = self.tol
        stall = 0
        best = np.inf
        for it in range(self.max_iter):
            self.iterations += 1
            if self.iterations % self.refactor_every == 0:
                self._refactor()
            y = cost[self.basis] @ self.Binv
            d = cost - self.AT @ y
            d[self.is_basic] = 0.0
            at_lo = self.x <= self.lo + tol
            at_hi = self.x >= self.hi - tol
            fixed = self.hi - self.lo <= tol
            can_up = (d < -tol) & ~at_hi & ~fixed
            can_dn = (d > tol) & ~at_lo & ~fixed
            eligible = np.flatnonzero(can_up | can_dn)
            if eligible.size == 0:
                return None
            use_bland = stall >= self.bland_after
            if use_bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[q] else -1.0

            alpha = self.Binv @ self.A[:, [q]].toarray().ravel()
            # basic i moves by -direction * alpha_i * theta
            move = -direction * alpha
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = move < -tol
            inc = move > tol
            ratios[dec] = (xb[dec] - lob[dec]) / -move[dec]
            ratios[inc] = (hib[inc] - xb[inc]) / move[inc]
            ratios = np.maximum(ratios, 0.0)
            theta_flip = self.hi[q] - self.lo[q]
            theta_basic = ratios.min() if self.m else np.inf
            if not np.isfinite(theta_basic) and not np.isfinite(theta_flip):
                return "unbounded"
            if theta_flip <= theta_basic:
                theta = theta_flip
                self.x[q] += direction * theta
                self.x[self.basis] += move * theta
            else:
                theta = theta_basic
                cand = np.flatnonzero(ratios <= theta + tol)
                if use_bland:
                    r = int(cand[np.argmin(self.basis[cand])])
                else:
                    r = int(cand[np.argmax(np.abs(alpha[cand]))])
                leaving = self.basis[r]
                self.x[q] += direction * theta
                self.x[self.basis] += move * theta
                # snap the leaving variable onto the bound it reached
                self.x[leaving] = lob[r] if move[r] < 0 else hib[r]
                self.basis[r] = q
                self.is_basic[q] = True
                self.is_basic[leaving] = False
                piv = alpha[r]
                if abs(piv) < 1e-12:
                    self._refactor()
                else:
                    row = self.Binv[r] / piv
                    self.Binv -= np.outer(alpha, row)
                    self.Binv[r] = row
            obj = float(cost @ self.x)
            if obj < best - 1e-12 * max(1.0, abs(best) if np.isfinite(best) else 1.0):
                best = obj
                stall = 0
            else:
                stall += 1
        return "error"

    def solve(self) -> LpSolution:
        lp = self.lp
        if np.any(lp.lb > lp.ub + self.tol):
            return LpSolution("infeasible", message="contradictory bounds")
        self.iterations = 0
        try:
            self._setup()
            n_tot = self.A.shape[1]
            c1 = np.zeros(n_tot)
            c1[self.art0:] = 1.0
            status = self._iterate(c1, phase=1)
            if status == "error":
                return LpSolution("error", iterations=self.iterations, message="phase 1 iteration limit")
            self._refactor()
            infeas = float(self.x[self.art0:].sum())
            scale = max(1.0, float(np.abs(self.b).max(initial=0.0)))
            if infeas > 1e-7 * scale:
                return LpSolution("infeasible", iterations=self.iterations,
                                  message=f"phase 1 residual {infeas:.3g}")
            self.hi[self.art0:] = 0.0
            self.x[self.art0:] = np.clip(self.x[self.art0:], 0.0, 0.0)
            c2 = np.zeros(n_tot)
            c2[:self.n] = lp.c
            status = self._iterate(c2, phase=2)
            if status in ("unbounded", "error"):
                return LpSolution(status, iterations=self.iterations)
            self._refactor()
        except np.linalg.LinAlgError as exc:
            return LpSolution("error", iterations=self.iterations, message=f"singular basis: {exc}")
        x = np.clip(self.x[:self.n], lp.lb, lp.ub)
        eq, ub, _ = lp.residuals(x)
        if max(eq, ub) > 1e-6 * max(1.0, float(np.abs(self.b).max(initial=0.0))):
            return LpSolution("error", x, float(lp.c @ x), self.iterations,
                              f"residual too large (eq {eq:.2g}, ub {ub:.2g})")
        return LpSolution("optimal", x, float(lp.c @ x), self.iterations)
