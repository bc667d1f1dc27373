"""LP problem container and a dense two-phase tableau simplex."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import InfeasibleError, NumericalError, Solution, SolverError, UnboundedError

LE, EQ, GE = "<=", "=", ">="

OPT_TOL = 1e-7  # reduced-cost optimality
PIVOT_TOL = 1e-9  # smallest admissible pivot element
FEAS_TOL = 1e-6
DROP_TOL = 1e-13  # pivot-column round-off below this is not propagated
PRICING_RULES = ("dantzig", "steepest-edge")
BLAND_AFTER = 50  # consecutive degenerate pivots before switching to Bland's rule
REFACTOR_AFTER = 1000  # pivots a cached tableau may accumulate before it is rebuilt from its basis


@dataclass
class LpProblem:
    """min c.x  s.t.  A x (senses) rhs,  lower <= x <= upper.

    Upper bounds may be ``inf``; lower bounds must be finite.
    """

    objective: np.ndarray
    A: np.ndarray
    senses: tuple
    rhs: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.senses = tuple(self.senses)
        if self.A.shape[0] != self.rhs.shape[0] or len(self.senses) != self.rhs.shape[0]:
            raise ValueError("constraint rows, senses and rhs disagree in length")
        bad = set(self.senses) - {LE, EQ, GE}
        if bad:
            raise ValueError(f"unknown relation(s) {bad}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        self.upper = np.ones(n) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        if not (np.all(np.isfinite(self.objective)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("LP data must be finite")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_rows(cls, objective, rows, bounds=None):
        """Build from ``[(coefficients, relation, rhs), ...]`` and ``[(lo, hi), ...]``."""
        objective = np.asarray(objective, dtype=float)
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), objective.shape[0])
        senses = tuple(r[1] for r in rows)
        rhs = np.array([r[2] for r in rows], dtype=float)
        lower = upper = None
        if bounds is not None:
            lower = np.array([b[0] for b in bounds], dtype=float)
            upper = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        return cls(objective, A, senses, rhs, lower, upper)

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    @property
    def m(self) -> int:
        return self.rhs.shape[0]

    def with_objective(self, objective) -> "LpProblem":
        p = LpProblem(objective, self.A, self.senses, self.rhs, self.lower, self.upper, self.names)
        p._structure = self.structure()
        return p

    def structure(self) -> "_StandardForm":
        """Standard form of the constraints, cached; only objective copies share it."""
        sf = getattr(self, "_structure", None)
        if sf is None:
            sf = _standard_form(self)
            self._structure = sf
        return sf

    def with_bounds(self, lower, upper) -> "LpProblem":
        return LpProblem(self.objective, self.A, self.senses, self.rhs, lower, upper, self.names)

    def with_row(self, coefficients, relation, rhs) -> "LpProblem":
        return LpProblem(self.objective, np.vstack([self.A, coefficients]), self.senses + (relation,),
                         np.append(self.rhs, rhs), self.lower, self.upper, self.names)

    def violation(self, x) -> float:
        """Largest constraint or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        ax = self.A @ x
        worst = 0.0
        for i, s in enumerate(self.senses):
            if s == LE:
                worst = max(worst, ax[i] - self.rhs[i])
            elif s == GE:
                worst = max(worst, self.rhs[i] - ax[i])
            else:
                worst = max(worst, abs(ax[i] - self.rhs[i]))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst


@dataclass(frozen=True)
class SimplexBasis:
    """Basic column indices of the augmented standard form, plus its shape."""

    basic_variable_indices: tuple
    signature: tuple = ()
    # B^-1 [M | b] at the time the basis was produced; lets a warm start skip refactorization
    tableau: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    age: int = field(default=0, compare=False, repr=False)  # pivots since the tableau was factorized

    def __post_init__(self):
        idx = tuple(int(i) for i in self.basic_variable_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("basis indices must be distinct")
        object.__setattr__(self, "basic_variable_indices", idx)


@dataclass
class _StandardForm:
    """min c.y  s.t.  M y = b, y >= 0, built from an LpProblem.

    Columns: free structural variables, then one slack/surplus per
    inequality row, then one artificial per '=' or '>=' row (after rhs sign
    normalization). The layout depends only on the constraints, so a basis
    stays meaningful when just the objective changes.
    """

    M: np.ndarray
    b: np.ndarray
    n_struct: int
    art_start: int
    free: np.ndarray
    shift: np.ndarray
    initial_basis: np.ndarray
    signature: tuple = field(default=())

    def cost(self, objective: np.ndarray) -> np.ndarray:
        c = np.zeros(self.M.shape[1])
        c[:self.n_struct] = objective[self.free]
        return c


def _implied_upper(A, senses, rhs, free_cols) -> np.ndarray:
    """Per free column, the tightest bound implied by nonnegative '=' rows."""
    implied = np.full(len(free_cols), np.inf)
    for i, s in enumerate(senses):
        if s != EQ:
            continue
        row = A[i, free_cols]
        if np.any(row < 0) or rhs[i] < 0:
            continue
        pos = row > 0
        bound = np.full(len(free_cols), np.inf)
        bound[pos] = rhs[i] / row[pos]
        np.minimum(implied, bound, out=implied)
    return implied


def _standard_form(problem: LpProblem) -> _StandardForm:
    lo, up = problem.lower, problem.upper
    fixed = np.isclose(lo, up, rtol=0.0, atol=1e-12)
    free = np.flatnonzero(~fixed)
    fixed_idx = np.flatnonzero(fixed)

    A = problem.A
    rhs = problem.rhs - A[:, fixed_idx] @ lo[fixed_idx] - A[:, free] @ lo[free]
    Af = A[:, free]
    senses = list(problem.senses)
    width = up[free] - lo[free]

    implied = _implied_upper(Af, senses, rhs, np.arange(len(free)))
    rows = [Af]
    rhs_list = [rhs]
    for k in np.flatnonzero(np.isfinite(width) & (implied > width + 1e-9)):
        e = np.zeros((1, len(free)))
        e[0, k] = 1.0
        rows.append(e)
        rhs_list.append(np.array([width[k]]))
        senses.append(LE)
    Af = np.vstack(rows)
    rhs = np.concatenate(rhs_list)

    neg = rhs < 0
    Af = np.where(neg[:, None], -Af, Af)
    rhs = np.abs(rhs)
    flip = {LE: GE, GE: LE, EQ: EQ}
    senses = [flip[s] if ng else s for s, ng in zip(senses, neg)]

    m = len(senses)
    n_struct = len(free)
    ineq = [i for i, s in enumerate(senses) if s != EQ]
    needs_art = [i for i, s in enumerate(senses) if s != LE]
    ncols = n_struct + len(ineq) + len(needs_art)
    M = np.zeros((m, ncols))
    M[:, :n_struct] = Af
    basis = np.full(m, -1)
    for k, i in enumerate(ineq):
        col = n_struct + k
        M[i, col] = 1.0 if senses[i] == LE else -1.0
        if senses[i] == LE:
            basis[i] = col
    art_start = n_struct + len(ineq)
    for k, i in enumerate(needs_art):
        M[i, art_start + k] = 1.0
        basis[i] = art_start + k
    return _StandardForm(M=M, b=rhs, n_struct=n_struct, art_start=art_start, free=free,
                         shift=lo.copy(), initial_basis=basis, signature=(m, ncols, n_struct))


class _Tableau:
    """Dense tableau: rows 0..m-1 are constraints, row m holds reduced costs."""

    def __init__(self, T: np.ndarray, basis: np.ndarray, age: int = 0):
        self.T = T
        self.basis = basis
        self.iterations = 0
        self.age = age

    @classmethod
    def from_basis(cls, sf: _StandardForm, basis: np.ndarray, cost: np.ndarray) -> "_Tableau":
        m = sf.M.shape[0]
        B = sf.M[:, basis]
        body = np.linalg.solve(B, np.hstack([sf.M, sf.b[:, None]]))
        T = np.empty((m + 1, body.shape[1]))
        T[:m] = body
        T[m, :-1] = cost - cost[basis] @ body[:, :-1]
        T[m, -1] = -cost[basis] @ body[:, -1]
        return cls(T, basis.copy())

    def set_cost(self, cost: np.ndarray):
        m = len(self.basis)
        self.T[m, :-1] = cost - cost[self.basis] @ self.T[:m, :-1]
        self.T[m, -1] = -cost[self.basis] @ self.T[:m, -1]

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(np.abs(col) > DROP_TOL)
        T[nz] -= np.outer(col[nz], T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1
        self.age += 1

    def run(self, allowed: np.ndarray, max_iter: int, pricing: str = "dantzig"):
        """Pivot to optimality over the ``allowed`` entering columns.

        ``dantzig`` enters the most negative reduced cost; ``steepest-edge``
        divides it by the norm of the column's edge direction, read off the
        tableau. Both fall back to Bland's rule after a run of degenerate
        pivots.
        """
        T = self.T
        m = len(self.basis)
        degenerate = 0
        bland = False
        while True:
            d = T[m, :-1]
            cand = allowed & (d < -OPT_TOL)
            if not cand.any():
                return
            if bland:
                j = int(np.flatnonzero(cand)[0])
            elif pricing == "steepest-edge":
                idx = np.flatnonzero(cand)
                C = T[:m, idx]
                j = int(idx[np.argmin(d[idx] / np.sqrt(1.0 + np.einsum("ij,ij->j", C, C)))])
            else:
                j = int(np.argmin(np.where(cand, d, np.inf)))
            colj = T[:m, j]
            rows = np.flatnonzero(colj > PIVOT_TOL)
            if rows.size == 0:
                raise UnboundedError("LP is unbounded")
            ratios = T[rows, -1] / colj[rows]
            best = ratios.min()
            if best < -FEAS_TOL:
                raise NumericalError("tableau lost primal feasibility")
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            if best <= 1e-12:
                degenerate += 1
                if degenerate >= BLAND_AFTER:
                    bland = True
            else:
                degenerate = 0
            self.pivot(r, j)
            if self.iterations > max_iter:
                raise SolverError(f"simplex exceeded {max_iter} iterations")


def _cold_start(sf: _StandardForm, c: np.ndarray, max_iter: int, pricing: str) -> _Tableau:
    m, ncols = sf.M.shape
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :ncols] = sf.M
    T[:m, -1] = sf.b
    tab = _Tableau(T, sf.initial_basis.copy())
    if sf.art_start < ncols:
        phase1 = np.zeros(ncols)
        phase1[sf.art_start:] = 1.0
        tab.set_cost(phase1)
        tab.run(np.ones(ncols, dtype=bool), max_iter, pricing)
        if -tab.T[m, -1] > FEAS_TOL:
            raise InfeasibleError(f"LP is infeasible (phase-1 residual {-tab.T[m, -1]:.3g})")
        # pivot zero-level artificials out; rows where that is impossible are redundant
        for r in range(m):
            if tab.basis[r] >= sf.art_start:
                row = np.abs(tab.T[r, :sf.art_start])
                j = int(np.argmax(row))
                if row[j] > PIVOT_TOL:
                    tab.pivot(r, j)
    tab.set_cost(c)
    return tab


def _run_refactoring(tab: _Tableau, sf: _StandardForm, c: np.ndarray, allowed: np.ndarray, max_iter: int,
                     pricing: str) -> _Tableau:
    """Run phase 2; on numerical breakdown rebuild the tableau from the current basis once and resume."""
    try:
        tab.run(allowed, max_iter, pricing)
        return tab
    except NumericalError:
        done = tab.iterations
    try:
        fresh = _Tableau.from_basis(sf, tab.basis, c)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular basis after numerical breakdown") from exc
    xb = fresh.T[:-1, -1]
    if np.any(xb < -FEAS_TOL):
        raise NumericalError("basis infeasible after refactorization")
    np.maximum(xb, 0.0, out=xb)
    fresh.iterations = done
    fresh.run(allowed, max_iter, pricing)
    return fresh


def _warm_start(sf: _StandardForm, c: np.ndarray, basis: SimplexBasis) -> Optional[_Tableau]:
    if basis.signature != sf.signature:
        return None
    idx = np.asarray(basis.basic_variable_indices, dtype=int)
    if idx.shape[0] != sf.M.shape[0]:
        return None
    m = len(idx)
    if (basis.tableau is not None and basis.tableau.shape == (m, sf.M.shape[1] + 1)
            and basis.age <= REFACTOR_AFTER):
        T = np.empty((m + 1, basis.tableau.shape[1]))
        T[:m] = basis.tableau
        tab = _Tableau(T, idx.copy(), basis.age)
        tab.set_cost(c)
    else:
        try:
            tab = _Tableau.from_basis(sf, idx, c)
        except np.linalg.LinAlgError:
            return None
    xb = tab.T[:m, -1]
    if np.any(xb < -FEAS_TOL) or not np.all(np.isfinite(tab.T)):
        return None
    if np.any((idx >= sf.art_start) & (np.abs(xb) > FEAS_TOL)):
        return None
    np.maximum(xb, 0.0, out=xb)
    return tab


def solve_lp(problem: LpProblem, start_basis: Optional[SimplexBasis] = None,
             max_iter: Optional[int] = None, pricing: str = "dantzig"):
    """Solve ``problem`` to optimality; returns ``(Solution, SimplexBasis)``.

    When ``start_basis`` came from a problem with the same constraints and
    is still primal feasible, phase 1 is skipped and pivoting resumes from
    it. Otherwise the solve silently falls back to a cold start.
    """
    if pricing not in PRICING_RULES:
        raise ValueError(f"pricing must be one of {PRICING_RULES}")
    t0 = time.perf_counter()
    sf = problem.structure()
    c = sf.cost(problem.objective)
    m, ncols = sf.M.shape
    if max_iter is None:
        max_iter = 50 * (m + ncols) + 1000
    tab = None
    warm = False
    if start_basis is not None:
        tab = _warm_start(sf, c, start_basis)
        warm = tab is not None
    allowed = np.zeros(ncols, dtype=bool)
    allowed[:sf.art_start] = True
    if tab is not None:
        try:
            _run_refactoring(tab, sf, c, allowed, min(max_iter, 2 * m + 100), pricing)
        except SolverError:  # includes UnboundedError; a drifted or stalled warm start is not trusted
            tab, warm = None, False
    if tab is None:
        tab = _cold_start(sf, c, max_iter, pricing)
        tab = _run_refactoring(tab, sf, c, allowed, max_iter, pricing)

    y = np.zeros(ncols)
    try:
        y[tab.basis] = np.linalg.solve(sf.M[:, tab.basis], sf.b)
    except np.linalg.LinAlgError:
        y[tab.basis] = tab.T[:m, -1]
    np.maximum(y, 0.0, out=y)
    x = sf.shift.copy()
    x[sf.free] += y[:sf.n_struct]
    x = np.clip(x, problem.lower, problem.upper)
    sol = Solution(assignment=x, objective=float(problem.objective @ x), solved_with="simplex",
                   seconds=time.perf_counter() - t0,
                   info={"iterations": tab.iterations, "warm": warm})
    cached = tab.T[:m].copy()
    cached[np.abs(cached) < PIVOT_TOL] = 0.0  # drop round-off fill-in so warm pivots stay sparse
    return sol, SimplexBasis(tuple(int(i) for i in tab.basis), sf.signature, cached, tab.age)
