"""Dense revised simplex for small linear programs.

The solver works on the bounded-variable form

    minimize c'y  subject to  A y = b,  l <= y <= u

where every structural variable has a finite lower bound after
preprocessing (free columns are split, upper-bounded-only columns are
mirrored). Row inequalities get slack columns, each row gets an artificial
column, and feasibility is reached with a classic two-phase scheme: phase 1
minimizes the sum of artificials, after which they are pinned to [0, 0] and
phase 2 runs on the true objective from the same basis.

The entering column is the lowest-index eligible one (Bland). The leaving
row comes from a Harris two-pass ratio test, which trades a 1e-9 bound
tolerance for the largest available pivot; after a long run of degenerate
pivots the test falls back to Bland's smallest-index rule, which cannot
cycle. The basis inverse is kept explicitly, updated by rank-one eta
transforms and refactorized periodically or whenever a small pivot or
drift in the basic solution shows up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DimensionError, SolverStallError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
REFACTOR_EVERY = 40
SMALL_PIVOT = 1e-5
HARRIS_TOL = 1e-9
BLAND_AFTER = 50

LE, EQ, GE = "<=", "=", ">="

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LPProblem:
    """minimize objective @ y subject to tagged rows and variable bounds."""

    objective: np.ndarray
    rows: np.ndarray
    senses: list
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        m = self.rows.shape[0]
        if len(self.senses) != m or self.rhs.size != m:
            raise DimensionError("row count, senses and right-hand side disagree")
        if self.lower.size != n or self.upper.size != n:
            raise DimensionError("bounds must match the objective width")
        if np.any(self.lower > self.upper):
            raise DimensionError("variable lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise DimensionError("variable bounds must admit a finite value")
        bad = set(self.senses) - {LE, EQ, GE}
        if bad:
            raise DimensionError(f"unknown row senses {sorted(bad)}")

    @property
    def shape(self):
        return self.rows.shape

    def index(self, name):
        return self.names[name]

    def max_violation(self, y):
        """Largest absolute violation of any row or bound at point ``y``."""
        y = np.asarray(y, dtype=float)
        worst = 0.0
        if self.rows.size:
            lhs = self.rows @ y
            for sense, a, b in zip(self.senses, lhs, self.rhs):
                if sense == LE:
                    worst = max(worst, a - b)
                elif sense == GE:
                    worst = max(worst, b - a)
                else:
                    worst = max(worst, abs(a - b))
        worst = max(worst, float(np.max(self.lower - y, initial=0.0)))
        worst = max(worst, float(np.max(y - self.upper, initial=0.0)))
        return worst


class LPBuilder:
    """Incremental construction of an LPProblem by variable names."""

    def __init__(self):
        self._names = {}
        self._lower = []
        self._upper = []
        self._cost = []
        self._rows = []

    def add_var(self, name, lower=-np.inf, upper=np.inf, cost=0.0):
        if name in self._names:
            raise ValueError(f"duplicate variable {name!r}")
        self._names[name] = len(self._lower)
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._cost.append(float(cost))
        return self._names[name]

    def add_row(self, coeffs, sense, rhs):
        self._rows.append((dict(coeffs), sense, float(rhs)))

    def build(self):
        n = len(self._lower)
        A = np.zeros((len(self._rows), n))
        for i, (coeffs, _, _) in enumerate(self._rows):
            for j, a in coeffs.items():
                A[i, j] += a
        return LPProblem(
            objective=np.array(self._cost),
            rows=A,
            senses=[s for _, s, _ in self._rows],
            rhs=np.array([r for _, _, r in self._rows]),
            lower=np.array(self._lower),
            upper=np.array(self._upper),
            names=dict(self._names),
        )


@dataclass
class LPSolution:
    status: str
    objective_value: Optional[float] = None
    variable_values: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, problem, name):
        return float(self.variable_values[problem.index(name)])


class _StandardForm:
    """Maps the user problem onto columns with finite lower bounds."""

    def __init__(self, problem: LPProblem):
        m, n = problem.shape
        cols, lo, hi, cost = [], [], [], []
        # recover[j] = list of (column, sign); y_j = sum(sign * column value)
        self.recover = []
        A = problem.rows
        c = problem.objective
        for j in range(n):
            lj, uj = problem.lower[j], problem.upper[j]
            if np.isfinite(lj):
                self.recover.append([(len(cols), 1.0)])
                cols.append(A[:, j]); lo.append(lj); hi.append(uj); cost.append(c[j])
            elif np.isfinite(uj):
                # y = -w with w >= -u
                self.recover.append([(len(cols), -1.0)])
                cols.append(-A[:, j]); lo.append(-uj); hi.append(np.inf); cost.append(-c[j])
            else:
                self.recover.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
                cols.append(A[:, j]); lo.append(0.0); hi.append(np.inf); cost.append(c[j])
                cols.append(-A[:, j]); lo.append(0.0); hi.append(np.inf); cost.append(-c[j])
        for i, sense in enumerate(problem.senses):
            if sense == EQ:
                continue
            col = np.zeros(m)
            col[i] = 1.0 if sense == LE else -1.0
            cols.append(col); lo.append(0.0); hi.append(np.inf); cost.append(0.0)
        self.A = np.column_stack(cols) if cols else np.zeros((m, 0))
        self.b = problem.rhs.astype(float).copy()
        # row equilibration; scaling a row does not move the feasible set
        scale = np.max(np.abs(self.A), axis=1, initial=0.0)
        scale[scale == 0] = 1.0
        self.A = self.A / scale[:, None]
        self.b = self.b / scale
        # column equilibration: column k holds w_k / colscale_k
        colscale = np.max(np.abs(self.A), axis=0, initial=0.0)
        colscale[colscale == 0] = 1.0
        self.colscale = colscale
        self.A = self.A / colscale
        self.lower = np.array(lo, dtype=float) * colscale
        self.upper = np.array(hi, dtype=float) * colscale
        self.cost = np.array(cost, dtype=float) / colscale

    def original(self, w):
        w = w / self.colscale
        y = np.empty(len(self.recover))
        for j, parts in enumerate(self.recover):
            y[j] = sum(sign * w[k] for k, sign in parts)
        return y


class _Simplex:
    def __init__(self, A, b, lower, upper, max_iter):
        self.A = A
        self.b = b
        self.lower = lower
        self.upper = upper
        self.max_iter = max_iter
        self.iterations = 0
        m, n = A.shape
        self.m = m
        self.n = n
        self.basis = None
        self.at_upper = np.zeros(n, dtype=bool)
        self.Binv = None
        self._since_refactor = 0

    def nonbasic_values(self):
        x = np.where(self.at_upper, self.upper, self.lower)
        x[self.basis] = 0.0
        return x

    def basic_values(self):
        return self.Binv @ (self.b - self.A @ self.nonbasic_values())

    def point(self):
        x = self.nonbasic_values()
        x[self.basis] = self.basic_values()
        return x

    def refactor(self):
        try:
            self.Binv = np.linalg.inv(self.A[:, self.basis])
        except np.linalg.LinAlgError:
            raise SolverStallError("basis became numerically singular", self.iterations) from None
        self._since_refactor = 0

    def run(self, cost):
        """Iterate to optimality for ``cost``. Returns OPTIMAL or UNBOUNDED."""
        in_basis = np.zeros(self.n, dtype=bool)
        degenerate_run = 0
        while True:
            if self.iterations >= self.max_iter:
                raise SolverStallError(
                    f"simplex exceeded {self.max_iter} iterations", self.iterations)
            in_basis[:] = False
            in_basis[self.basis] = True
            rhs = self.b - self.A @ self.nonbasic_values()
            xB = self.Binv @ rhs
            drift = np.max(np.abs(self.A[:, self.basis] @ xB - rhs), initial=0.0)
            if self._since_refactor and drift > 1e-10 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
                self.refactor()
                xB = self.Binv @ rhs
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            movable = (~in_basis) & (self.upper > self.lower)
            increase = movable & ~self.at_upper & (d < -PIVOT_TOL)
            decrease = movable & self.at_upper & (d > PIVOT_TOL)
            eligible = np.flatnonzero(increase | decrease)
            if eligible.size == 0:
                return OPTIMAL
            q = int(eligible[0])
            direction = 1.0 if increase[q] else -1.0
            w = self.Binv @ self.A[:, q]
            # basic values move as xB - direction * theta * w
            theta = self.upper[q] - self.lower[q]
            leave = -1
            leave_to_upper = False
            rate = direction * w
            lB = self.lower[self.basis]
            uB = self.upper[self.basis]
            pivot_tol = PIVOT_TOL * max(1.0, float(np.max(np.abs(w), initial=0.0)))
            cand = np.flatnonzero(np.abs(rate) > pivot_tol)
            cand = cand[(rate[cand] > 0) | np.isfinite(uB[cand])]
            up = rate[cand] > 0
            room = np.where(up, xB[cand] - lB[cand], uB[cand] - xB[cand])
            steps = np.maximum(room, 0.0) / np.abs(rate[cand])
            if cand.size:
                if degenerate_run > BLAND_AFTER:
                    # long degenerate stretch: strict Bland rule, which cannot cycle
                    best = float(np.min(steps))
                    ties = np.flatnonzero(steps <= best + PIVOT_TOL)
                else:
                    # Harris two-pass: among near-minimal ratios take the largest pivot
                    relaxed = float(np.min((np.maximum(room, 0.0) + HARRIS_TOL) / np.abs(rate[cand])))
                    ties = np.flatnonzero(steps <= relaxed)
                    big = np.abs(rate[cand[ties]])
                    ties = ties[big >= big.max() * (1 - 1e-12)]
                k = ties[np.argmin(self.basis[cand[ties]])]
                if steps[k] < theta - PIVOT_TOL:
                    theta, leave, leave_to_upper = float(steps[k]), int(cand[k]), not bool(up[k])
            degenerate_run = degenerate_run + 1 if theta <= PIVOT_TOL else 0
            if not np.isfinite(theta):
                return UNBOUNDED
            if leave >= 0 and self._since_refactor and \
                    abs(w[leave]) < SMALL_PIVOT * np.max(np.abs(w)):
                # small pivots are only trusted when computed from a fresh inverse
                self.refactor()
                continue
            self.iterations += 1
            if leave < 0:
                # bound flip: the entering column runs into its own opposite bound
                self.at_upper[q] = not self.at_upper[q]
                continue
            out = self.basis[leave]
            self.at_upper[out] = leave_to_upper
            self.at_upper[q] = False
            self.basis[leave] = q
            self._since_refactor += 1
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
            else:
                pivot = w[leave]
                row = self.Binv[leave] / pivot
                self.Binv -= np.outer(w, row)
                self.Binv[leave] = row


def solve_lp(problem: LPProblem, max_iter: int = 50_000) -> LPSolution:
    """Solve ``problem`` to optimality or detect infeasibility/unboundedness.

    Raises SolverStallError when ``max_iter`` pivots are exhausted.
    """
    sf = _StandardForm(problem)
    m, n = sf.A.shape
    x0 = np.where(np.isfinite(sf.lower), sf.lower, 0.0)
    residual = sf.b - sf.A @ x0
    signs = np.where(residual >= 0, 1.0, -1.0)
    A = np.hstack([sf.A, np.diag(signs)])
    lower = np.concatenate([sf.lower, np.zeros(m)])
    upper = np.concatenate([sf.upper, np.full(m, np.inf)])
    simplex = _Simplex(A, sf.b, lower, upper, max_iter)
    simplex.basis = np.arange(n, n + m)
    simplex.Binv = np.diag(signs)

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    simplex.run(phase1)
    # judged row by row, so a small row is not excused by a large one elsewhere
    residual = simplex.point()[n:]
    if np.any(residual > FEAS_TOL * np.maximum(1.0, np.abs(sf.b))):
        return LPSolution(INFEASIBLE, iterations=simplex.iterations)

    # pin artificials at zero; any still basic leave through degenerate pivots
    simplex.upper[n:] = 0.0
    simplex.at_upper[n:] = False
    simplex.refactor()
    phase2 = np.concatenate([sf.cost, np.zeros(m)])
    status = simplex.run(phase2)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=simplex.iterations)
    w = simplex.point()[:n]
    y = sf.original(w)
    # snap onto bounds that rounding pushed marginally outside
    y = np.clip(y, problem.lower, problem.upper)
    return LPSolution(
        OPTIMAL,
        objective_value=float(problem.objective @ y),
        variable_values=y,
        iterations=simplex.iterations,
    )
