"""Linear-program core: problem container, embedded simplex, solver plugins.

Every LP in the toolkit (synthesis, controller interpolation, support
functions, redundancy and verification checks) is expressed as a
:class:`LinearProgram` and dispatched either to the embedded two-phase
simplex (:func:`solve`) or to a registered external backend
(:func:`solve_external`). The embedded method keeps small problems exact,
deterministic and dependency-light, and reports infeasibility as a
first-class outcome; the scipy/HiGHS plugin carries the large synthesis
programs that a pure-Python simplex cannot turn around quickly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


class NumericalBreakdown(RuntimeError):
    """Basis factorization or residual checks failed; distinct from infeasible."""


class PluginUnavailable(KeyError):
    """Requested external solver id has not been registered."""


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iterations: Optional[int] = None  # default 50 * (rows + vars)
    refactor_every: int = 100
    stall_limit: int = 60
    cond_limit: float = 1e13
    pivot_tol: float = 1e-9


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray]
    objective_value: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class LinearProgram:
    """min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    A_ub: Optional[sp.csr_matrix] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[sp.csr_matrix] = None
    b_eq: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.A_ub is not None and self.A_ub.shape[0] == 0:
            self.A_ub, self.b_ub = None, None
        if self.A_eq is not None and self.A_eq.shape[0] == 0:
            self.A_eq, self.b_eq = None, None
        if self.A_ub is not None:
            self.A_ub = sp.csr_matrix(self.A_ub)
            self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
            if self.A_ub.shape != (self.b_ub.size, n):
                raise ValueError("A_ub/b_ub shape mismatch")
        if self.A_eq is not None:
            self.A_eq = sp.csr_matrix(self.A_eq)
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
            if self.A_eq.shape != (self.b_eq.size, n):
                raise ValueError("A_eq/b_eq shape mismatch")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound length mismatch")
        if np.isnan(self.c).any():
            raise ValueError("NaN in objective")
        for A in (self.A_ub, self.A_eq):
            if A is not None and np.isnan(A.data).any():
                raise ValueError("NaN in constraint matrix")
        for b in (self.b_ub, self.b_eq):
            if b is not None and not np.isfinite(b).all():
                raise ValueError("constraint rhs must be finite")
        if (self.lb > self.ub).any():
            raise ValueError("lb > ub for some variable")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        m = 0
        if self.A_ub is not None:
            m += self.A_ub.shape[0]
        if self.A_eq is not None:
            m += self.A_eq.shape[0]
        return m


class LPBuilder:
    """Row-oriented incremental construction of a LinearProgram."""

    def __init__(self, n_vars: int):
        self.n = n_vars
        self.c = np.zeros(n_vars)
        self.lb = np.full(n_vars, -np.inf)
        self.ub = np.full(n_vars, np.inf)
        self._ub_rows: list[tuple[np.ndarray, np.ndarray]] = []
        self._ub_rhs: list[float] = []
        self._eq_rows: list[tuple[np.ndarray, np.ndarray]] = []
        self._eq_rhs: list[float] = []

    def minimize(self, idx, vals) -> "LPBuilder":
        self.c[np.asarray(idx, dtype=int)] = np.asarray(vals, dtype=float)
        return self

    def bound(self, j: int, lo: float, hi: float) -> "LPBuilder":
        self.lb[j], self.ub[j] = lo, hi
        return self

    def add_ub(self, idx, vals, rhs: float) -> "LPBuilder":
        self._ub_rows.append((np.asarray(idx, dtype=int), np.asarray(vals, dtype=float)))
        self._ub_rhs.append(float(rhs))
        return self

    def add_eq(self, idx, vals, rhs: float) -> "LPBuilder":
        self._eq_rows.append((np.asarray(idx, dtype=int), np.asarray(vals, dtype=float)))
        self._eq_rhs.append(float(rhs))
        return self

    @staticmethod
    def _rows_to_csr(rows, n) -> Optional[sp.csr_matrix]:
        if not rows:
            return None
        indptr = np.zeros(len(rows) + 1, dtype=int)
        for i, (idx, _) in enumerate(rows):
            indptr[i + 1] = indptr[i] + idx.size
        indices = np.concatenate([idx for idx, _ in rows]) if rows else np.zeros(0, dtype=int)
        data = np.concatenate([v for _, v in rows]) if rows else np.zeros(0)
        return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n))

    def build(self) -> LinearProgram:
        return LinearProgram(
            c=self.c,
            A_ub=self._rows_to_csr(self._ub_rows, self.n),
            b_ub=np.asarray(self._ub_rhs) if self._ub_rhs else None,
            A_eq=self._rows_to_csr(self._eq_rows, self.n),
            b_eq=np.asarray(self._eq_rhs) if self._eq_rhs else None,
            lb=self.lb,
            ub=self.ub,
        )


# ---------------------------------------------------------------------------
# embedded two-phase simplex with bounded variables
# ---------------------------------------------------------------------------

_AT_LB, _AT_UB, _BASIC, _FREE_NB = 0, 1, 2, 3


class _Tableau:
    """Revised simplex working state over columns [x, slacks, artificials]."""

    def __init__(self, lp: LinearProgram, opts: SolveOptions):
        self.opts = opts
        n = lp.n_vars
        m_ub = 0 if lp.A_ub is None else lp.A_ub.shape[0]
        m_eq = 0 if lp.A_eq is None else lp.A_eq.shape[0]
        m = m_ub + m_eq
        blocks = []
        if m_ub:
            blocks.append(sp.hstack([lp.A_ub, sp.eye(m_ub, format="csr"),
                                     sp.csr_matrix((m_ub, 0))], format="csr"))
        if m_eq:
            pad = sp.csr_matrix((m_eq, m_ub))
            blocks.append(sp.hstack([lp.A_eq, pad], format="csr"))
        if blocks:
            self.A = sp.vstack(blocks, format="csc")
        else:
            self.A = sp.csc_matrix((0, n + m_ub))
        self.b = np.concatenate([x for x in (lp.b_ub, lp.b_eq) if x is not None]) if m else np.zeros(0)
        self.m = m
        self.n_real = n
        self.n_struct = n + m_ub  # structural + slack columns
        self.lb = np.concatenate([lp.lb, np.zeros(m_ub), np.zeros(m)])
        self.ub = np.concatenate([lp.ub, np.full(m_ub, np.inf), np.full(m, np.inf)])
        self.ncols = self.n_struct + m  # artificials appended at the end

        # nonbasic start: finite lower bound, else finite upper, else 0 (free)
        x0 = np.where(np.isfinite(self.lb[:self.n_struct]), self.lb[:self.n_struct],
                      np.where(np.isfinite(self.ub[:self.n_struct]), self.ub[:self.n_struct], 0.0))
        r = self.b - self.A @ x0
        self.art_sign = np.where(r >= 0.0, 1.0, -1.0)
        self.xval = np.concatenate([x0, np.abs(r)])
        self.vstat = np.empty(self.ncols, dtype=np.int8)
        struct = np.arange(self.n_struct)
        self.vstat[struct] = np.where(
            np.isfinite(self.lb[struct]), _AT_LB,
            np.where(np.isfinite(self.ub[struct]), _AT_UB, _FREE_NB))
        self.vstat[self.n_struct:] = _BASIC
        self.basis = np.arange(self.n_struct, self.ncols)
        self.B_inv = np.diag(self.art_sign) if m else np.zeros((0, 0))
        self.iterations = 0

    def col(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        if j < self.n_struct:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            out[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        else:
            out[j - self.n_struct] = self.art_sign[j - self.n_struct]
        return out

    def reduced_costs(self, c_full: np.ndarray) -> np.ndarray:
        y = self.B_inv.T @ c_full[self.basis] if self.m else np.zeros(0)
        d = c_full.copy()
        if self.m:
            d[:self.n_struct] -= self.A.T @ y
            d[self.n_struct:] -= self.art_sign * y
        return d

    def refactor(self):
        if self.m == 0:
            return
        B = np.column_stack([self.col(j) for j in self.basis])
        cond = np.linalg.cond(B)
        if not np.isfinite(cond) or cond > self.opts.cond_limit:
            raise NumericalBreakdown(f"basis condition {cond:.3e} exceeds limit")
        self.B_inv = np.linalg.inv(B)
        # resync basic values against the nonbasic ones
        x_nb = self.xval.copy()
        x_nb[self.basis] = 0.0
        rhs = self.b - self.A @ x_nb[:self.n_struct] - self.art_sign * x_nb[self.n_struct:]
        self.xval[self.basis] = self.B_inv @ rhs

    def run_phase(self, c_full: np.ndarray, max_iter: int) -> str:
        opts = self.opts
        bland = False
        stall = 0
        last_obj = np.inf
        movable = (self.ub - self.lb) > 0.0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            self.iterations += 1
            if self.iterations % opts.refactor_every == 0:
                self.refactor()
            d = self.reduced_costs(c_full)
            at_lb = (self.vstat == _AT_LB) & movable & (d < -opts.opt_tol)
            at_ub = (self.vstat == _AT_UB) & movable & (d > opts.opt_tol)
            free = (self.vstat == _FREE_NB) & (np.abs(d) > opts.opt_tol)
            eligible = np.where(at_lb | at_ub | free)[0]
            if eligible.size == 0:
                return OPTIMAL
            if bland:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(d[eligible]))])
            sigma = 1.0
            if self.vstat[j] == _AT_UB or (self.vstat[j] == _FREE_NB and d[j] > 0):
                sigma = -1.0

            u = self.B_inv @ self.col(j) if self.m else np.zeros(0)
            w = sigma * u
            xB = self.xval[self.basis]
            lbB, ubB = self.lb[self.basis], self.ub[self.basis]
            t_rows = np.full(self.m, np.inf)
            pos = w > opts.pivot_tol
            neg = w < -opts.pivot_tol
            with np.errstate(invalid="ignore"):
                t_rows[pos] = (xB[pos] - lbB[pos]) / w[pos]
                t_rows[neg] = (xB[neg] - ubB[neg]) / w[neg]
            t_rows[t_rows < 0.0] = 0.0  # degeneracy guard against round-off
            span = self.ub[j] - self.lb[j]
            t_bound = span if np.isfinite(span) else np.inf
            t_min_rows = t_rows.min() if self.m else np.inf
            t = min(t_min_rows, t_bound)
            if not np.isfinite(t):
                return UNBOUNDED

            # apply step
            if self.m:
                self.xval[self.basis] = xB - t * w
            self.xval[j] += sigma * t
            obj = float(c_full @ self.xval)
            if obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
                stall = 0
            else:
                stall += 1
                if stall > opts.stall_limit:
                    bland = True
            last_obj = obj

            if t_bound <= t_min_rows:
                # bound flip, basis unchanged
                self.vstat[j] = _AT_UB if self.vstat[j] == _AT_LB else _AT_LB
                continue

            ties = np.where(t_rows <= t + 1e-15)[0]
            if bland:
                leave = int(ties[np.argmin(self.basis[ties])])
            else:
                leave = int(ties[np.argmax(np.abs(w[ties]))])
            piv = u[leave]
            if abs(piv) < opts.pivot_tol:
                self.refactor()
                u = self.B_inv @ self.col(j)
                piv = u[leave]
                if abs(piv) < opts.pivot_tol:
                    raise NumericalBreakdown("vanishing pivot after refactorization")
            leaving = self.basis[leave]
            self.vstat[leaving] = _AT_LB if w[leave] > 0 else _AT_UB
            self.xval[leaving] = self.lb[leaving] if w[leave] > 0 else self.ub[leaving]
            self.vstat[j] = _BASIC
            self.basis[leave] = j
            # product-form update of the explicit inverse
            self.B_inv[leave, :] /= piv
            others = np.arange(self.m) != leave
            self.B_inv[others, :] -= np.outer(u[others], self.B_inv[leave, :])


def _solve_unconstrained(lp: LinearProgram) -> LPResult:
    x = np.zeros(lp.n_vars)
    for j in range(lp.n_vars):
        if lp.c[j] > 0:
            if not np.isfinite(lp.lb[j]):
                return LPResult(UNBOUNDED, None, -np.inf, 0)
            x[j] = lp.lb[j]
        elif lp.c[j] < 0:
            if not np.isfinite(lp.ub[j]):
                return LPResult(UNBOUNDED, None, -np.inf, 0)
            x[j] = lp.ub[j]
        else:
            x[j] = lp.lb[j] if np.isfinite(lp.lb[j]) else min(lp.ub[j], 0.0) if np.isfinite(lp.ub[j]) else 0.0
    return LPResult(OPTIMAL, x, float(lp.c @ x), 0)


def solve(lp: LinearProgram, opts: Optional[SolveOptions] = None) -> LPResult:
    """Embedded deterministic two-phase simplex (bounded variables, Bland fallback)."""
    opts = opts or SolveOptions()
    if lp.n_vars == 0:
        # no variables: feasible iff rhs admits the zero assignment
        ok = True
        if lp.b_ub is not None and (lp.b_ub < -opts.feas_tol).any():
            ok = False
        if lp.b_eq is not None and (np.abs(lp.b_eq) > opts.feas_tol).any():
            ok = False
        return LPResult(OPTIMAL if ok else INFEASIBLE, np.zeros(0), 0.0, 0)
    if lp.n_rows == 0:
        return _solve_unconstrained(lp)

    tab = _Tableau(lp, opts)
    max_iter = opts.max_iterations or 50 * (tab.m + lp.n_vars)

    # phase 1: drive artificial infeasibility to zero
    c1 = np.zeros(tab.ncols)
    c1[tab.n_struct:] = 1.0
    status = tab.run_phase(c1, max_iter)
    if status == ITERATION_LIMIT:
        return LPResult(ITERATION_LIMIT, None, np.nan, tab.iterations)
    if status == UNBOUNDED:
        raise NumericalBreakdown("phase-1 objective reported unbounded")
    tab.refactor()
    infeas = float(c1 @ tab.xval)
    scale = 1.0 + (np.abs(tab.b).max() if tab.m else 0.0)
    if infeas > opts.feas_tol * scale:
        return LPResult(INFEASIBLE, None, np.nan, tab.iterations)

    # phase 2: pin artificials at zero and optimize the real objective
    tab.ub[tab.n_struct:] = 0.0
    tab.refactor()
    c2 = np.zeros(tab.ncols)
    c2[:lp.n_vars] = lp.c
    status = tab.run_phase(c2, max_iter)
    if status == ITERATION_LIMIT:
        return LPResult(ITERATION_LIMIT, None, np.nan, tab.iterations)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, -np.inf, tab.iterations)
    tab.refactor()
    x = tab.xval[:lp.n_vars].copy()

    # certify the returned point
    if lp.A_ub is not None:
        if (lp.A_ub @ x - lp.b_ub).max(initial=-np.inf) > opts.feas_tol * scale * 10:
            raise NumericalBreakdown("primal residual above tolerance on inequalities")
    if lp.A_eq is not None:
        if np.abs(lp.A_eq @ x - lp.b_eq).max(initial=0.0) > opts.feas_tol * scale * 10:
            raise NumericalBreakdown("primal residual above tolerance on equalities")
    return LPResult(OPTIMAL, x, float(lp.c @ x), tab.iterations)


# ---------------------------------------------------------------------------
# external solver plugins
# ---------------------------------------------------------------------------

_PLUGINS: dict[str, Callable[[LinearProgram, SolveOptions], LPResult]] = {}


def register_solver(solver_id: str, fn: Callable[[LinearProgram, SolveOptions], LPResult]) -> None:
    _PLUGINS[solver_id] = fn


def available_solvers() -> list[str]:
    return sorted(_PLUGINS)


def solve_external(lp: LinearProgram, solver_id: str,
                   opts: Optional[SolveOptions] = None) -> LPResult:
    """Dispatch to a registered plugin; same result contract as :func:`solve`."""
    if solver_id not in _PLUGINS:
        raise PluginUnavailable(f"no LP solver plugin registered under {solver_id!r}")
    return _PLUGINS[solver_id](lp, opts or SolveOptions())


def _scipy_plugin(lp: LinearProgram, opts: SolveOptions) -> LPResult:
    from scipy.optimize import linprog

    if lp.n_vars == 0:
        return solve(lp, opts)
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lb, lp.ub)]
    res = linprog(
        lp.c,
        A_ub=lp.A_ub, b_ub=lp.b_ub,
        A_eq=lp.A_eq, b_eq=lp.b_eq,
        bounds=bounds,
        method="highs",
        options={
            "presolve": True,
            "primal_feasibility_tolerance": min(opts.feas_tol, 1e-9),
            "dual_feasibility_tolerance": min(opts.opt_tol, 1e-9),
        },
    )
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return LPResult(OPTIMAL, np.asarray(res.x), float(res.fun), nit)
    if res.status == 1:
        return LPResult(ITERATION_LIMIT, None, np.nan, nit)
    if res.status == 2:
        # HiGHS presolve occasionally folds "unbounded" into this code; a
        # feasibility probe tells the two apart reliably.
        probe = linprog(np.zeros(lp.n_vars), A_ub=lp.A_ub, b_ub=lp.b_ub,
                        A_eq=lp.A_eq, b_eq=lp.b_eq, bounds=bounds, method="highs")
        if probe.status == 0:
            return LPResult(UNBOUNDED, None, -np.inf, nit)
        return LPResult(INFEASIBLE, None, np.nan, nit)
    if res.status == 3:
        return LPResult(UNBOUNDED, None, -np.inf, nit)
    raise NumericalBreakdown(f"external solver reported numerical failure: {res.message}")


register_solver("scipy", _scipy_plugin)
register_solver("embedded", lambda lp, opts: solve(lp, opts))


def pick_solver(lp: LinearProgram, preferred: str = "auto") -> str:
    """Route big assembled programs to the external backend, small ones inline."""
    if preferred != "auto":
        return preferred
    if lp.n_rows > 1500 or lp.n_vars > 3000:
        return "scipy" if "scipy" in _PLUGINS else "embedded"
    return "embedded"


def solve_auto(lp: LinearProgram, solver: str = "auto",
               opts: Optional[SolveOptions] = None) -> LPResult:
    sid = pick_solver(lp, solver)
    if sid == "embedded":
        return solve(lp, opts)
    return solve_external(lp, sid, opts)


# ---------------------------------------------------------------------------
# debugging export
# ---------------------------------------------------------------------------

def write_mps(lp: LinearProgram, path: str, name: str = "CCRCI") -> None:
    """Dump the program in fixed MPS format for inspection in external tools."""
    n = lp.n_vars
    rows: list[str] = [f"NAME          {name}", "ROWS", " N  COST"]
    m_ub = 0 if lp.A_ub is None else lp.A_ub.shape[0]
    m_eq = 0 if lp.A_eq is None else lp.A_eq.shape[0]
    for i in range(m_ub):
        rows.append(f" L  R{i + 1:07d}")
    for i in range(m_eq):
        rows.append(f" E  E{i + 1:07d}")

    col_entries: list[list[tuple[str, float]]] = [[] for _ in range(n)]
    for j in range(n):
        if lp.c[j] != 0.0:
            col_entries[j].append(("COST", lp.c[j]))
    for prefix, A in (("R", lp.A_ub), ("E", lp.A_eq)):
        if A is None:
            continue
        Ac = A.tocoo()
        for r, cidx, v in zip(Ac.row, Ac.col, Ac.data):
            col_entries[cidx].append((f"{prefix}{r + 1:07d}", v))
    rows.append("COLUMNS")
    for j in range(n):
        for rname, v in col_entries[j]:
            rows.append(f"    X{j + 1:07d}  {rname:<8}  {v:.17g}")
    rows.append("RHS")
    for prefix, b in (("R", lp.b_ub), ("E", lp.b_eq)):
        if b is None:
            continue
        for i, v in enumerate(b):
            if v != 0.0:
                rows.append(f"    RHS       {prefix}{i + 1:07d}  {v:.17g}")
    rows.append("BOUNDS")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        name_j = f"X{j + 1:07d}"
        if not np.isfinite(lo) and not np.isfinite(hi):
            rows.append(f" FR BND       {name_j}")
        else:
            if np.isfinite(lo) and lo != 0.0:
                rows.append(f" LO BND       {name_j}  {lo:.17g}")
            elif not np.isfinite(lo):
                rows.append(f" MI BND       {name_j}")
            if np.isfinite(hi):
                rows.append(f" UP BND       {name_j}  {hi:.17g}")
    rows.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
