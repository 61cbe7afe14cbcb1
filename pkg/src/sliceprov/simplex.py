"""Dense two-phase primal simplex for LPs with bounded variables.

Solves  minimize c'x  subject to  A x (<=, =, >=) b,  l <= x <= u.

The implementation keeps an explicit tableau (basis-inverse times the
constraint matrix) plus the vector of current basic values, and supports the
standard bounded-variable mechanics: entering variables may move up from
their lower bound or down from their upper bound, and a ratio test can end in
a bound flip instead of a basis exchange.  Dantzig pricing is used until a
configurable run of degenerate pivots, after which Bland's rule guarantees
termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2

_INF = np.inf


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = np.nan
    x: np.ndarray | None = None  # structural variables only
    iterations: int = 0


class _Tableau:
    def __init__(self, A, b, lower, upper, slack_index, pivot_tol, degenerate_limit):
        """``A`` already contains slack columns; ``slack_index[i]`` is the
        slack column of row i.  Rows whose slack value is feasible at the
        crash point start with the slack basic (no phase-1 work); only
        violated rows receive an artificial column."""
        m, n = A.shape
        self.m, self.n = m, n
        self.pivot_tol = pivot_tol
        self.degenerate_limit = degenerate_limit
        x0 = np.where(np.isfinite(lower), lower, 0.0)
        x0[slack_index] = 0.0
        residual = b - A @ x0  # value the row-i basic column must absorb
        slack_sign = A[np.arange(m), slack_index]  # +/-1
        slack_value = residual * slack_sign
        slack_ok = (slack_value >= -pivot_tol) & (
            slack_value <= upper[slack_index] + pivot_tol
        )
        # One artificial per infeasible row, signed so its basic value is >= 0.
        self.ncols = n + m
        self.lower = np.concatenate([lower, np.zeros(m)])
        self.upper = np.concatenate([upper, np.zeros(m)])
        self.upper[n:][~slack_ok] = _INF
        art_sign = np.where(residual < 0, -1.0, 1.0)
        self.T = np.hstack([A, np.zeros((m, m))])
        self.T[np.arange(m), n + np.arange(m)] = art_sign
        self.status = np.full(self.ncols, AT_LOWER, dtype=np.int8)
        self.basis = np.where(slack_ok, slack_index, n + np.arange(m))
        self.xB = np.where(
            slack_ok,
            np.clip(slack_value, 0.0, np.where(np.isfinite(upper[slack_index]),
                                               upper[slack_index], _INF)),
            np.abs(residual),
        )
        # Normalize rows so every basic column is +e_i (basis inverse is a
        # +/-1 diagonal matrix).
        row_scale = np.where(
            slack_ok, slack_sign, art_sign
        )
        self.T *= row_scale[:, None]
        self.status[self.basis] = BASIC
        self.has_artificials = bool(np.any(~slack_ok))
        self.iterations = 0

    def nonbasic_values(self):
        vals = np.where(self.status == AT_UPPER, self.upper, self.lower)
        vals[~np.isfinite(vals)] = 0.0
        vals[self.status == BASIC] = 0.0
        return vals

    def solution(self):
        x = self.nonbasic_values()
        x[self.basis] = self.xB
        return x

    def _price(self, c):
        y = c[self.basis] @ self.T
        rc = c - y
        rc[self.basis] = 0.0
        return rc

    def _choose_entering(self, rc, bland):
        tol = 1e-9
        movable = self.upper - self.lower > 0
        down = (self.status == AT_UPPER) & (rc > tol) & movable
        up = (self.status == AT_LOWER) & (rc < -tol) & movable
        candidates = np.where(down | up)[0]
        if candidates.size == 0:
            return None, 0
        if bland:
            j = candidates[0]
        else:
            j = candidates[np.argmax(np.abs(rc[candidates]))]
        direction = 1 if self.status[j] == AT_LOWER else -1
        return int(j), direction

    def _ratio_test(self, j, direction, bland):
        # Moving x_j by +t*direction changes basics by -t*direction*d.
        d = self.T[:, j] * direction
        t_max = self.upper[j] - self.lower[j]  # bound-flip distance
        tol = self.pivot_tol
        lower_b = self.lower[self.basis]
        upper_b = self.upper[self.basis]
        ratios = np.full(self.m, np.inf)
        pos = d > tol
        ratios[pos] = (self.xB[pos] - lower_b[pos]) / d[pos]
        neg = (d < -tol) & np.isfinite(upper_b)
        ratios[neg] = (upper_b[neg] - self.xB[neg]) / (-d[neg])
        i_min = int(np.argmin(ratios)) if self.m else -1
        t_min = ratios[i_min] if i_min >= 0 else np.inf
        if t_min >= t_max:
            return t_max, -1, d
        # Among rows within tolerance of the minimum ratio, pick the largest
        # |pivot| for stability (or the smallest basis index under Bland).
        close = np.where(ratios <= t_min + 1e-12)[0]
        if bland:
            limit_row = int(close[np.argmin(self.basis[close])])
        else:
            limit_row = int(close[np.argmax(np.abs(d[close]))])
        return max(t_min, 0.0), limit_row, d

    def step(self, c, bland):
        rc = self._price(c)
        j, direction = self._choose_entering(rc, bland)
        if j is None:
            return "optimal"
        t, row, d = self._ratio_test(j, direction, bland)
        if not np.isfinite(t):
            return "unbounded"
        self.xB -= t * d
        if row < 0:
            # Bound flip: the entering variable traverses its whole range.
            self.status[j] = AT_UPPER if direction > 0 else AT_LOWER
            return "flip" if t > self.pivot_tol else "degenerate"
        leaving = self.basis[row]
        entering_value = (self.lower[j] if direction > 0 else self.upper[j]) + direction * t
        # d is already direction-adjusted: basics move by -t*d, so a positive
        # component means the leaving variable dropped to its lower bound.
        if d[row] > 0:
            self.status[leaving] = AT_LOWER
        else:
            self.status[leaving] = AT_UPPER
        pivot = self.T[row, j]
        self.T[row] /= pivot
        col = self.T[:, j].copy()
        col[row] = 0.0
        self.T -= np.outer(col, self.T[row])
        self.basis[row] = j
        self.status[j] = BASIC
        self.xB[row] = entering_value
        return "pivot" if t > self.pivot_tol else "degenerate"

    def run(self, c, iteration_limit):
        degenerate_run = 0
        bland = False
        while self.iterations < iteration_limit:
            outcome = self.step(c, bland)
            self.iterations += 1
            if outcome == "optimal":
                return "optimal"
            if outcome == "unbounded":
                return "unbounded"
            if outcome == "degenerate":
                degenerate_run += 1
                if degenerate_run >= self.degenerate_limit:
                    bland = True
            else:
                degenerate_run = 0
        return "iteration_limit"


def solve_lp(
    A,
    b,
    relations,
    c,
    lower,
    upper,
    pivot_tol=1e-9,
    feas_tol=1e-7,
):
    """Minimize c'x subject to row relations and variable bounds.

    ``relations`` is a sequence of "<=", "=", ">=" per row.  Rows are
    normalized to equalities by adding slack columns with the appropriate
    bounds, then solved with a two-phase method using artificial columns.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m, n = A.shape
    slack_cols = []
    slack_lower = []
    slack_upper = []
    for i, rel in enumerate(relations):
        col = np.zeros(m)
        if rel == "<=":
            col[i] = 1.0
            slack_upper.append(_INF)
        elif rel == ">=":
            col[i] = -1.0
            slack_upper.append(_INF)
        elif rel == "=":
            col[i] = 1.0
            slack_upper.append(0.0)
        else:
            raise ValueError(f"unknown relation {rel!r}")
        slack_lower.append(0.0)
        slack_cols.append(col)
    A_full = np.hstack([A, np.column_stack(slack_cols)]) if slack_cols else A
    lower_full = np.concatenate([lower, slack_lower])
    upper_full = np.concatenate([upper, slack_upper])
    n_full = A_full.shape[1]
    slack_index = n + np.arange(m)

    tab = _Tableau(
        A_full, b, lower_full, upper_full, slack_index, pivot_tol,
        degenerate_limit=10 * n_full,
    )
    iteration_limit = 2000 * (m + n_full)

    if tab.has_artificials:
        # Phase 1: drive the artificial columns to zero.
        c1 = np.zeros(tab.ncols)
        c1[n_full:] = 1.0
        status = tab.run(c1, iteration_limit)
        if status == "iteration_limit":
            raise RuntimeError("simplex iteration limit exceeded in phase 1")
        infeasibility = float(np.sum(tab.solution()[n_full:]))
        if infeasibility > feas_tol * (1.0 + abs(b).max(initial=0.0)):
            return LpResult(status="infeasible", iterations=tab.iterations)

    # Phase 2: pin artificials at zero and optimize the true objective.
    # Basic artificials may linger at a sub-tolerance value; snap them to 0.
    tab.upper[n_full:] = 0.0
    artificial_basic = tab.basis >= n_full
    tab.xB[artificial_basic] = 0.0
    c2 = np.zeros(tab.ncols)
    c2[:n] = c
    status = tab.run(c2, iteration_limit)
    if status == "iteration_limit":
        raise RuntimeError("simplex iteration limit exceeded in phase 2")
    if status == "unbounded":
        return LpResult(status="unbounded", iterations=tab.iterations)
    x = tab.solution()
    return LpResult(
        status="optimal",
        objective=float(c @ x[:n]),
        x=x[:n].copy(),
        iterations=tab.iterations,
    )
