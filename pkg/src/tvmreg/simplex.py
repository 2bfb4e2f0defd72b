"""Dense tableau simplex for small linear programs.

Minimizes c @ x subject to A_ub @ x <= b_ub with x >= 0 except for
variables flagged free (split internally as differences of nonnegatives).
Phase 1 uses artificials only on rows whose slack start would be
infeasible. Pricing is Dantzig's rule, switching permanently to Bland's
rule after a stall so cycling cannot occur. Dense arithmetic is fine at
the problem sizes used here (a few thousand rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
STALL_LIMIT = 40


@dataclass(frozen=True, eq=False)
class LpProblem:
    objective: np.ndarray        # (nvar,)
    a_ub: np.ndarray             # (nrow, nvar)
    b_ub: np.ndarray             # (nrow,)
    free: np.ndarray | None = None  # bool mask of sign-unrestricted variables

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        a = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        b = np.asarray(self.b_ub, dtype=float).ravel()
        if a.shape != (b.shape[0], c.shape[0]):
            raise ConfigError(
                f"LP dimensions disagree: A {a.shape}, b {b.shape}, c {c.shape}"
            )
        free = self.free
        if free is not None:
            free = np.asarray(free, dtype=bool).ravel()
            if free.shape[0] != c.shape[0]:
                raise ConfigError("free-variable mask length mismatch")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "a_ub", a)
        object.__setattr__(self, "b_ub", b)
        object.__setattr__(self, "free", free)


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray
    value: float
    status: str  # "optimal" | "infeasible" | "unbounded" | "stalled"
    n_pivots: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Simplex tableau: rows = constraints plus one objective row."""

    def __init__(self, table: np.ndarray, basis: np.ndarray):
        self.t = table
        self.basis = basis
        self.n_pivots = 0
        self._stall = 0
        self._bland = False

    def pivot(self, row: int, col: int):
        t = self.t
        piv = t[row, col]
        t[row] /= piv
        column = t[:, col].copy()
        column[row] = 0.0
        t -= np.outer(column, t[row])
        # Snap tiny residue in the pivot column for numerical hygiene.
        t[:, col] = 0.0
        t[row, col] = 1.0
        self.basis[row] = col
        self.n_pivots += 1

    def run(self, max_pivots: int) -> str:
        t = self.t
        m = t.shape[0] - 1
        while self.n_pivots < max_pivots:
            cost = t[-1, :-1]
            if self._bland:
                neg = np.where(cost < -COST_TOL)[0]
                if neg.size == 0:
                    return "optimal"
                col = int(neg[0])
            else:
                col = int(np.argmin(cost))
                if cost[col] >= -COST_TOL:
                    return "optimal"
            column = t[:m, col]
            rhs = t[:m, -1]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(column > PIVOT_TOL, rhs / column, np.inf)
            row = int(np.argmin(ratios))
            if not np.isfinite(ratios[row]):
                return "unbounded"
            before = t[-1, -1]
            self.pivot(row, col)
            if t[-1, -1] >= before - 1e-13 * (1.0 + abs(before)):
                self._stall += 1
                if self._stall > STALL_LIMIT:
                    self._bland = True
            else:
                self._stall = 0
        return "stalled"


def solve_lp(problem: LpProblem, max_pivots: int | None = None) -> LpSolution:
    """Two-phase simplex. Returns a solution with status rather than
    raising, so callers can decide how hard a failure is."""
    c = problem.objective
    a = problem.a_ub
    b = problem.b_ub
    nrow, nvar = a.shape

    if problem.free is not None and np.any(problem.free):
        split = np.where(problem.free)[0]
        a = np.hstack([a, -a[:, split]])
        c = np.concatenate([c, -c[split]])
    else:
        split = np.zeros(0, dtype=int)
    ncol = c.shape[0]

    flip = b < 0.0
    a = np.where(flip[:, None], -a, a)
    b = np.where(flip, -b, b)
    slack_sign = np.where(flip, -1.0, 1.0)

    n_art = int(flip.sum())
    if max_pivots is None:
        max_pivots = 200 * (nrow + ncol) + 1000

    # Layout: structural | slacks | artificials | rhs.
    width = ncol + nrow + n_art + 1
    table = np.zeros((nrow + 1, width))
    table[:nrow, :ncol] = a
    table[:nrow, ncol : ncol + nrow] = np.diag(slack_sign)
    art_cols = np.full(nrow, -1, dtype=int)
    art = np.where(flip)[0]
    for j, row in enumerate(art):
        table[row, ncol + nrow + j] = 1.0
        art_cols[row] = ncol + nrow + j
    table[:nrow, -1] = b

    basis = np.where(flip, art_cols, ncol + np.arange(nrow))
    tab = _Tableau(table, basis)

    if n_art:
        # Phase 1: minimize the sum of artificials.
        table[-1, :] = 0.0
        table[-1, ncol + nrow : -1] = 1.0
        for row in art:
            table[-1] -= table[row]
        status = tab.run(max_pivots)
        if status != "optimal":
            return LpSolution(np.full(nvar, np.nan), np.nan, status, tab.n_pivots)
        if table[-1, -1] < -1e-7:
            return LpSolution(np.full(nvar, np.nan), np.nan, "infeasible", tab.n_pivots)
        # Pivot lingering artificials out of the basis where possible.
        for row in range(nrow):
            if tab.basis[row] >= ncol + nrow:
                candidates = np.where(np.abs(table[row, : ncol + nrow]) > PIVOT_TOL)[0]
                if candidates.size:
                    tab.pivot(row, int(candidates[0]))
        table[:, ncol + nrow : -1] = 0.0

    # Phase 2 objective row in terms of the current basis.
    table[-1, :] = 0.0
    table[-1, :ncol] = c
    for row in range(nrow):
        col = tab.basis[row]
        if col < ncol and abs(c[col]) > 0.0:
            table[-1] -= c[col] * table[row]
    status = tab.run(max_pivots)
    if status != "optimal":
        return LpSolution(np.full(nvar, np.nan), np.nan, status, tab.n_pivots)

    full = np.zeros(ncol)
    in_basis = tab.basis < ncol
    full[tab.basis[in_basis]] = table[:nrow, -1][in_basis]
    x = full[:nvar]
    if split.size:
        x = x.copy()
        x[split] -= full[nvar:]
    return LpSolution(x, float(problem.objective @ x), "optimal", tab.n_pivots)
