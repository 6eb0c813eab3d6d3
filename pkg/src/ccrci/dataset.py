"""Trajectory ingestion, data-matrix assembly, and the feasible model set.

One measured state-input-scheduling trajectory is turned into the stacked
data matrices, checked for excitation (full row rank of the regressor
matrix), and converted into the inequality description of every model matrix
consistent with the data under the disturbance bound. The description can be
pruned to an irredundant row subset, which is what keeps the synthesis
program's multiplier count manageable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ccrci import lp_core
from ccrci.linops import kron, numerical_rank
from ccrci.lp_core import LPBuilder
from ccrci.polytope import Empty, Polytope, try_symmetric_form


class ShapeMismatch(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class ParseError(ValueError):
    pass


class AsymmetricDisturbanceSet(ValueError):
    """Disturbance polytope is not in the two-sided symmetric form -g <= G w <= g."""


class SchedulingOutsideP(ValueError):
    """A measured scheduling sample is not a convex combination of the P vertices."""


@dataclass
class TrajectoryData:
    states: np.ndarray     # (T+1, n)
    inputs: np.ndarray     # (T, m)
    schedules: np.ndarray  # (T, s)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.schedules = np.atleast_2d(np.asarray(self.schedules, dtype=float))
        T = self.inputs.shape[0]
        if self.states.shape[0] != T + 1:
            raise LengthMismatch(
                f"{self.states.shape[0]} states for {T} inputs; need T+1 states")
        if self.schedules.shape[0] != T:
            raise LengthMismatch(
                f"{self.schedules.shape[0]} schedules for {T} inputs")
        for arr, name in ((self.states, "states"), (self.inputs, "inputs"),
                          (self.schedules, "schedules")):
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in {name}")

    @property
    def T(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def s(self) -> int:
        return self.schedules.shape[1]

    def prefix(self, T: int) -> "TrajectoryData":
        """First T transitions of the trajectory."""
        if not 1 <= T <= self.T:
            raise ValueError(f"prefix length {T} outside 1..{self.T}")
        return TrajectoryData(self.states[:T + 1], self.inputs[:T],
                              self.schedules[:T])


@dataclass
class DataMatrices:
    X_plus: np.ndarray  # (n, T)
    X_pu: np.ndarray    # ((n+m)s, T)
    n: int
    m: int
    s: int

    @property
    def T(self) -> int:
        return self.X_plus.shape[1]


def build_data_matrices(traj: TrajectoryData) -> DataMatrices:
    """Stack successor states and the scheduled regressors column by column."""
    n, m, s, T = traj.n, traj.m, traj.s, traj.T
    X_plus = traj.states[1:].T.copy()
    X_pu = np.empty(((n + m) * s, T))
    for t in range(T):
        p = traj.schedules[t]
        X_pu[: n * s, t] = kron(p.reshape(-1, 1), traj.states[t].reshape(-1, 1)).ravel()
        X_pu[n * s:, t] = kron(p.reshape(-1, 1), traj.inputs[t].reshape(-1, 1)).ravel()
    if X_plus.shape != (n, T):
        raise ShapeMismatch("successor-state matrix has wrong shape")
    return DataMatrices(X_plus=X_plus, X_pu=X_pu, n=n, m=m, s=s)


def excitation_check(D: DataMatrices, H_w: np.ndarray, tol: float = 1e-9) -> bool:
    """Rank conditions for a bounded feasible model set.

    The regressor matrix must have full row rank (n+m)s and the disturbance
    normal matrix full column rank n.
    """
    H_w = np.atleast_2d(np.asarray(H_w, dtype=float))
    full = (D.n + D.m) * D.s
    return (numerical_rank(D.X_pu, tol) == full
            and numerical_rank(H_w, tol) == D.n)


@dataclass
class FeasibleModelSet:
    """Stacked description {vec(M) : H_bar vec(M) <= h_bar} of data-consistent models."""

    H_bar: np.ndarray
    h_bar: np.ndarray
    n: int
    m: int
    s: int
    T: int
    n_w: int
    reduced_rows: Optional[list[int]] = field(default=None)

    @property
    def n_params(self) -> int:
        return self.n * (self.n + self.m) * self.s

    def effective(self) -> tuple[np.ndarray, np.ndarray]:
        """Reduced rows when available, else the full description."""
        if self.reduced_rows is None:
            return self.H_bar, self.h_bar
        idx = list(self.reduced_rows)
        return self.H_bar[idx], self.h_bar[idx]

    def contains(self, vec_m, tol: float = 1e-7) -> bool:
        vec_m = np.asarray(vec_m, dtype=float).ravel()
        scale = 1.0 + np.abs(self.h_bar).max(initial=0.0)
        return bool((self.H_bar @ vec_m <= self.h_bar + tol * scale).all())


def build_feasible_model_set(D: DataMatrices, W: Polytope) -> FeasibleModelSet:
    """Assemble the two-sided inequality description from data and the disturbance set."""
    sym = try_symmetric_form(W)
    if sym is None:
        raise AsymmetricDisturbanceSet(
            "disturbance set must be given as a 0-symmetric polytope -g <= G w <= g")
    H_w, h_w = sym
    if H_w.shape[1] != D.n:
        raise ShapeMismatch("disturbance set dimension differs from the state dimension")
    n_w = H_w.shape[0]
    T = D.T
    H_M = kron(D.X_pu.T, H_w)                 # (T n_w, n (n+m) s)
    h_M = (H_w @ D.X_plus).ravel(order="F")   # stacks H_w x_{t+1} over t
    vec_h_w = np.tile(h_w, T)
    H_bar = np.vstack([H_M, -H_M])
    h_bar = np.concatenate([vec_h_w + h_M, vec_h_w - h_M])
    return FeasibleModelSet(H_bar=H_bar, h_bar=h_bar, n=D.n, m=D.m, s=D.s,
                            T=T, n_w=n_w)


def reduce_model_set(F: FeasibleModelSet, tol: float = 1e-9,
                     solver: str = "scipy") -> FeasibleModelSet:
    """Greedy irredundant row selection; the feasible region is unchanged.

    Each row is tested by maximizing it subject to the rows still retained:
    it is dropped iff the maximum stays within tol of its own offset. Rows
    are unit-normalized for the tests only; retained indices refer to the
    original stacked description.
    """
    rows, dim = F.H_bar.shape
    norms = np.linalg.norm(F.H_bar, axis=1)
    keep_flags = np.ones(rows, dtype=bool)

    # zero rows: 0 <= h is vacuous, 0 <= h < 0 is an inconsistency
    for r in np.where(norms == 0.0)[0]:
        if F.h_bar[r] >= -tol:
            keep_flags[r] = False
        else:
            raise Empty("model set contains an unsatisfiable zero row")

    Hn = F.H_bar / np.where(norms == 0.0, 1.0, norms)[:, None]
    hn = F.h_bar / np.where(norms == 0.0, 1.0, norms)

    # identical normals: only the smallest offset can bind
    order = np.lexsort(np.round(Hn, 12).T)
    for a, b in zip(order[:-1], order[1:]):
        if not (keep_flags[a] and keep_flags[b]):
            continue
        if np.abs(Hn[a] - Hn[b]).max() <= 1e-12:
            drop = a if hn[a] >= hn[b] else b
            keep_flags[drop] = False

    # feasibility gate before the per-row LPs
    active = np.where(keep_flags)[0]
    feas = _region_lp(Hn[active], hn[active], np.zeros(dim), solver)
    if feas.status == lp_core.INFEASIBLE:
        raise Empty("feasible model set is empty; data and disturbance bound disagree")

    for r in list(np.where(keep_flags)[0]):
        others = np.where(keep_flags)[0]
        others = others[others != r]
        if others.size == 0:
            continue
        res = _region_lp(Hn[others], hn[others], -Hn[r], solver)
        if res.status == lp_core.UNBOUNDED:
            continue  # row is load-bearing for boundedness
        if not res.ok:
            continue
        if -res.objective_value <= hn[r] + tol:
            keep_flags[r] = False

    retained = [int(r) for r in np.where(keep_flags)[0]]
    return replace(F, reduced_rows=retained)


def _region_lp(H: np.ndarray, h: np.ndarray, c: np.ndarray, solver: str) -> lp_core.LPResult:
    import scipy.sparse as sp

    lp = lp_core.LinearProgram(c=c, A_ub=sp.csr_matrix(H), b_ub=h)
    if solver == "embedded":
        return lp_core.solve(lp)
    return lp_core.solve_external(lp, solver)


def validate_scheduling(traj: TrajectoryData, P_vertices: np.ndarray,
                        tol: float = 1e-7) -> None:
    """Require every measured scheduling sample to lie in ConvHull(P_vertices)."""
    P = np.atleast_2d(np.asarray(P_vertices, dtype=float))
    v_p, s = P.shape
    if s != traj.s:
        raise ShapeMismatch("scheduling dimension differs from the vertex set")
    for t, p in enumerate(traj.schedules):
        builder = LPBuilder(v_p)
        for row in range(s):
            builder.add_eq(np.arange(v_p), P[:, row], p[row])
        builder.add_eq(np.arange(v_p), np.ones(v_p), 1.0)
        for j in range(v_p):
            builder.bound(j, 0.0, 1.0)
        res = lp_core.solve(builder.build(), lp_core.SolveOptions(feas_tol=tol))
        if res.status != lp_core.OPTIMAL:
            raise SchedulingOutsideP(
                f"scheduling sample at t={t} is outside the scheduling set")


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def save_trajectory(traj: TrajectoryData, path: str) -> None:
    """Single-file CSV: T rows with full fields, one final state-only row."""
    n, m, s, T = traj.n, traj.m, traj.s, traj.T
    header = (["t"] + [f"x{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(s)])
    fmt = lambda v: f"{v:.17g}"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(T):
            writer.writerow([t] + [fmt(v) for v in traj.states[t]]
                            + [fmt(v) for v in traj.inputs[t]]
                            + [fmt(v) for v in traj.schedules[t]])
        writer.writerow([T] + [fmt(v) for v in traj.states[T]]
                        + [""] * (m + s))


def load_trajectory(path: str) -> TrajectoryData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        n = sum(1 for c in header if c.startswith("x"))
        m = sum(1 for c in header if c.startswith("u"))
        s = sum(1 for c in header if c.startswith("p"))
        expected = (["t"] + [f"x{i + 1}" for i in range(n)]
                    + [f"u{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(s)])
        if header != expected or n == 0 or m == 0 or s == 0:
            raise ParseError(f"{path}: line 1: malformed header {header}")
        states, inputs, schedules = [], [], []
        saw_final = False
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1 + n + m + s:
                raise ParseError(f"{path}: line {lineno}: expected "
                                 f"{1 + n + m + s} fields, got {len(row)}")
            if saw_final:
                raise LengthMismatch(
                    f"{path}: line {lineno}: rows after the final-state row")
            try:
                x = [float(v) for v in row[1:1 + n]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            tail = row[1 + n:]
            if all(v == "" for v in tail):
                saw_final = True
                states.append(x)
                continue
            try:
                u = [float(v) for v in tail[:m]]
                p = [float(v) for v in tail[m:]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            states.append(x)
            inputs.append(u)
            schedules.append(p)
    if not states:
        raise ParseError(f"{path}: no data rows")
    if not saw_final:
        raise LengthMismatch(f"{path}: missing the final state-only row")
    return TrajectoryData(np.array(states), np.array(inputs), np.array(schedules))
