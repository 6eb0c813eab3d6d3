"""Invariant-set synthesis: one LP over offsets, vertex inputs and multipliers.

The program couples four constraint groups: the template cone (which pins the
vertex maps), state/input constraints at the vertices, a robust one-step
invariance condition expressed through nonnegative multipliers against the
feasible model set (strong LP duality turns the "for all models" quantifier
into existence of multipliers), and an epigraph encoding of the set-size
objective. The model-based variant replaces the multiplier blocks with direct
successor-state inequalities for a fixed model matrix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ccrci import lp_core
from ccrci.cc_template import CCTemplate
from ccrci.dataset import FeasibleModelSet
from ccrci.linops import kron
from ccrci.polytope import (DegenerateHull, Polytope, VertexSet,
                            enumerate_vertices, support_vector, volume_2d)


class SynthesisInfeasible(RuntimeError):
    """No invariant set exists for this template/data/constraint combination."""

    def __init__(self, message: str, group_violations: Optional[dict] = None):
        super().__init__(message)
        self.group_violations = group_violations or {}


class EmptyModelSet(ValueError):
    pass


@dataclass
class SynthesisProblem:
    template: CCTemplate
    X: Polytope
    U: Polytope
    W: Polytope
    P_vertices: np.ndarray                       # (v_p, s)
    F: Optional[FeasibleModelSet] = None         # data-driven mode
    M_true: Optional[np.ndarray] = None          # model-based mode
    D: Optional[np.ndarray] = None               # size-metric directions, defaults to C
    X_vertices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.P_vertices = np.atleast_2d(np.asarray(self.P_vertices, dtype=float))
        if self.P_vertices.shape[0] == 0:
            raise ValueError("P_vertices must be nonempty")
        if self.D is None:
            self.D = self.template.C.copy()
        else:
            self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if self.X_vertices is None:
            self.X_vertices = enumerate_vertices(self.X).points
        else:
            self.X_vertices = np.atleast_2d(np.asarray(self.X_vertices, dtype=float))

    @property
    def n(self) -> int:
        return self.template.dim

    @property
    def m(self) -> int:
        return self.U.dim

    @property
    def s(self) -> int:
        return self.P_vertices.shape[1]

    @property
    def v_p(self) -> int:
        return self.P_vertices.shape[0]


@dataclass
class RCISolution:
    q: np.ndarray
    vertex_states: np.ndarray                    # (v_s, n)
    vertex_inputs: np.ndarray                    # (v_s, m)
    epsilon: np.ndarray
    objective: float
    multipliers: Optional[np.ndarray] = None     # (v_s, v_p, n_c, retained)
    problem: Optional[SynthesisProblem] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def set_polytope(self) -> Polytope:
        return Polytope(self.problem.template.C, self.q)

    def volume(self) -> Optional[float]:
        """Planar volume of the synthesized set; None outside dim 2."""
        if self.vertex_states.shape[1] != 2:
            return None
        pts: list[np.ndarray] = []
        for v in self.vertex_states:
            if all(np.abs(v - w).max() > 1e-9 for w in pts):
                pts.append(v)
        try:
            return volume_2d(VertexSet(np.array(pts)))
        except DegenerateHull:
            return 0.0


# ---------------------------------------------------------------------------
# variable layout and row blocks
# ---------------------------------------------------------------------------

@dataclass
class VariableLayout:
    n_c: int
    v_s: int
    v_p: int
    n: int
    m: int
    m_d: int
    v_x: int
    lam_cols: int  # retained model-set rows per multiplier row; 0 in model mode

    @property
    def off_q(self) -> int:
        return 0

    @property
    def off_u(self) -> int:
        return self.n_c

    @property
    def off_lam(self) -> int:
        return self.off_u + self.v_s * self.m

    @property
    def lam_total(self) -> int:
        return self.v_s * self.v_p * self.n_c * self.lam_cols

    @property
    def off_z(self) -> int:
        return self.off_lam + self.lam_total

    @property
    def off_s(self) -> int:
        return self.off_z + self.v_x * self.n

    @property
    def off_eps(self) -> int:
        return self.off_s + self.v_x * self.n

    @property
    def off_tau(self) -> int:
        return self.off_eps + self.m_d

    @property
    def total(self) -> int:
        return self.off_tau + self.m_d

    def u_slice(self, i: int) -> np.ndarray:
        return self.off_u + i * self.m + np.arange(self.m)

    def lam_base(self, i: int, j: int) -> int:
        return self.off_lam + (i * self.v_p + j) * self.n_c * self.lam_cols


class RowBlock:
    """COO triplets plus rhs for one constraint group."""

    def __init__(self, label: str, kind: str):
        assert kind in ("ub", "eq")
        self.label = label
        self.kind = kind
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.n_rows = 0

    def extend(self, rows, cols, vals, rhs, n_rows: int):
        self.rows.append(np.asarray(rows, dtype=np.int64) + self.n_rows)
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))
        self.rhs.append(np.asarray(rhs, dtype=float).ravel())
        self.n_rows += n_rows

    def add_dense_rows(self, mat: np.ndarray, col_index: np.ndarray, rhs):
        """Append rows of a dense coefficient matrix mapped onto global columns."""
        mat = np.atleast_2d(mat)
        r, c = np.nonzero(mat)
        self.extend(r, col_index[c], mat[r, c], rhs, mat.shape[0])


def assemble_config_constraints(template: CCTemplate,
                                layout: VariableLayout) -> RowBlock:
    """Cone rows E q <= 0 keeping the vertex maps valid for the decision offset."""
    block = RowBlock("config", "ub")
    block.add_dense_rows(template.E, np.arange(layout.n_c) + layout.off_q,
                         np.zeros(template.E.shape[0]))
    return block


def assemble_system_constraints(template: CCTemplate, X: Polytope, U: Polytope,
                                layout: VariableLayout) -> RowBlock:
    """Vertex-wise state constraints H_x V_i q <= h_x and input constraints."""
    block = RowBlock("system", "ub")
    q_cols = np.arange(layout.n_c) + layout.off_q
    for Vi in template.V_maps:
        block.add_dense_rows(X.H @ Vi, q_cols, X.h)
    for i in range(layout.v_s):
        block.add_dense_rows(U.H, layout.u_slice(i), U.h)
    return block


def _scheduled_maps(template: CCTemplate, p: np.ndarray, i: int,
                    m: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear maps q -> p (x) V_i q and u_i -> p (x) u_i."""
    Wq = kron(p.reshape(-1, 1), template.V_maps[i])      # (s n, n_c)
    Wu = kron(p.reshape(-1, 1), np.eye(m))               # (s m, m)
    return Wq, Wu


def assemble_invariance_constraints(template: CCTemplate, F: FeasibleModelSet,
                                    P_vertices: np.ndarray, d: np.ndarray,
                                    layout: VariableLayout
                                    ) -> tuple[RowBlock, RowBlock, np.ndarray]:
    """Multiplier certificate blocks for every (set vertex, scheduling vertex) pair.

    For each pair: n_c inequality rows  Lam h_bar <= q - d  and
    n_c * n(n+m)s equality rows  Lam H_bar = (z' (x) C_k)  with z linear in
    (q, u_i). Multiplier columns are indexed against the retained model-set
    rows, unit-normalized for conditioning; returns the norms used so the
    multipliers can be mapped back to the raw rows.
    """
    H_red, h_red = F.effective()
    if H_red.shape[0] == 0:
        raise EmptyModelSet("feasible model set has no rows")
    norms = np.linalg.norm(H_red, axis=1)
    if (norms == 0.0).any():
        raise EmptyModelSet("model set contains zero rows; reduce it first")
    Hn = H_red / norms[:, None]
    hn = h_red / norms

    n_c, n, m = layout.n_c, layout.n, layout.m
    N = layout.lam_cols
    K = F.n_params
    if N != H_red.shape[0]:
        raise ValueError("layout multiplier width disagrees with model set")
    C = template.C

    ineq = RowBlock("invariance_ineq", "ub")
    eq = RowBlock("invariance_eq", "eq")

    # shared sparsity patterns for one (i, j) pair
    k_of_row = np.repeat(np.arange(n_c), K)
    c_of_row = np.tile(np.arange(K), n_c)
    a_of_row = c_of_row // n
    b_of_row = c_of_row % n
    lam_rows = np.repeat(np.arange(n_c * K), N)
    lam_cols_rel = (k_of_row[:, None] * N + np.arange(N)[None, :]).ravel()
    lam_vals = np.tile(Hn.T.ravel(), n_c)

    ineq_rows = np.repeat(np.arange(n_c), N)
    ineq_cols_rel = lam_cols_rel[: n_c * N].reshape(n_c, N)  # same k-major pattern
    ineq_lam_vals = np.tile(hn, n_c)

    sn = layout.n * P_vertices.shape[1]
    state_rows_mask = a_of_row < sn

    for i in range(layout.v_s):
        for j in range(layout.v_p):
            p = P_vertices[j]
            base = layout.lam_base(i, j)
            Wq, Wu = _scheduled_maps(template, p, i, m)

            # inequality block: Lam h - q <= -d
            rows = ineq_rows
            cols = base + ineq_cols_rel.ravel()
            vals = ineq_lam_vals
            q_rows = np.arange(n_c)
            q_cols = layout.off_q + np.arange(n_c)
            ineq.extend(np.concatenate([rows, q_rows]),
                        np.concatenate([cols, q_cols]),
                        np.concatenate([vals, -np.ones(n_c)]),
                        -d, n_c)

            # equality block: Lam H - C[k,b] z_a(q, u_i) = 0
            rows_parts = [lam_rows]
            cols_parts = [base + lam_cols_rel]
            vals_parts = [lam_vals]

            st = np.where(state_rows_mask)[0]
            if st.size:
                coeff = -C[k_of_row[st], b_of_row[st]]
                Wrows = Wq[a_of_row[st]]                      # (n_st, n_c)
                rr, cc = np.nonzero(Wrows)
                rows_parts.append(st[rr])
                cols_parts.append(layout.off_q + cc)
                vals_parts.append(coeff[rr] * Wrows[rr, cc])

            iu = np.where(~state_rows_mask)[0]
            if iu.size:
                coeff = -C[k_of_row[iu], b_of_row[iu]]
                Wrows = Wu[a_of_row[iu] - sn]                 # (n_iu, m)
                rr, cc = np.nonzero(Wrows)
                rows_parts.append(iu[rr])
                cols_parts.append(layout.off_u + i * m + cc)
                vals_parts.append(coeff[rr] * Wrows[rr, cc])

            eq.extend(np.concatenate(rows_parts), np.concatenate(cols_parts),
                      np.concatenate(vals_parts), np.zeros(n_c * K), n_c * K)

    return ineq, eq, norms


def assemble_model_invariance(template: CCTemplate, M: np.ndarray,
                              P_vertices: np.ndarray, d: np.ndarray,
                              layout: VariableLayout) -> RowBlock:
    """Direct successor constraints C M z <= q - d for a fixed model matrix."""
    n_c, n, m = layout.n_c, layout.n, layout.m
    s = P_vertices.shape[1]
    G = template.C @ M                                 # (n_c, (n+m)s)
    G_state = G[:, : n * s].reshape(n_c, s, n)
    G_input = G[:, n * s:].reshape(n_c, s, m)
    block = RowBlock("invariance_model", "ub")
    q_cols = layout.off_q + np.arange(n_c)
    for i in range(layout.v_s):
        Vi = template.V_maps[i]
        for j in range(layout.v_p):
            p = P_vertices[j]
            Gp = np.einsum("ksb,s->kb", G_state, p)    # (n_c, n)
            Gu = np.einsum("ksg,s->kg", G_input, p)    # (n_c, m)
            mat_q = Gp @ Vi - np.eye(n_c)
            rows_q, cols_q = np.nonzero(mat_q)
            rows_u, cols_u = np.nonzero(Gu)
            block.extend(np.concatenate([rows_q, rows_u]),
                         np.concatenate([q_cols[cols_q],
                                         layout.off_u + i * m + cols_u]),
                         np.concatenate([mat_q[rows_q, cols_q], Gu[rows_u, cols_u]]),
                         -d, n_c)
    return block


def assemble_volume_objective(template: CCTemplate, D: np.ndarray,
                              X_vertices: np.ndarray, layout: VariableLayout
                              ) -> tuple[RowBlock, RowBlock, np.ndarray]:
    """Size-metric encoding: split each X vertex as z + s with D z <= eps, C s <= q.

    The 1-norm of eps is linearized through tau >= eps, tau >= -eps with
    objective sum(tau); eps itself stays free in sign.
    """
    n_c, n, m_d, v_x = layout.n_c, layout.n, layout.m_d, layout.v_x
    ub = RowBlock("volume", "ub")
    eq = RowBlock("volume_split", "eq")
    for l in range(v_x):
        z_cols = layout.off_z + l * n + np.arange(n)
        s_cols = layout.off_s + l * n + np.arange(n)
        # y_l = z_l + s_l
        eq.extend(np.concatenate([np.arange(n), np.arange(n)]),
                  np.concatenate([z_cols, s_cols]),
                  np.ones(2 * n), X_vertices[l], n)
        # D z_l - eps <= 0
        rows_d, cols_d = np.nonzero(D)
        ub.extend(np.concatenate([rows_d, np.arange(m_d)]),
                  np.concatenate([z_cols[cols_d], layout.off_eps + np.arange(m_d)]),
                  np.concatenate([D[rows_d, cols_d], -np.ones(m_d)]),
                  np.zeros(m_d), m_d)
        # C s_l - q <= 0
        rows_c, cols_c = np.nonzero(template.C)
        ub.extend(np.concatenate([rows_c, np.arange(n_c)]),
                  np.concatenate([s_cols[cols_c], layout.off_q + np.arange(n_c)]),
                  np.concatenate([template.C[rows_c, cols_c], -np.ones(n_c)]),
                  np.zeros(n_c), n_c)
    # eps - tau <= 0 and -eps - tau <= 0
    eps_cols = layout.off_eps + np.arange(m_d)
    tau_cols = layout.off_tau + np.arange(m_d)
    for sign in (1.0, -1.0):
        ub.extend(np.concatenate([np.arange(m_d), np.arange(m_d)]),
                  np.concatenate([eps_cols, tau_cols]),
                  np.concatenate([sign * np.ones(m_d), -np.ones(m_d)]),
                  np.zeros(m_d), m_d)
    objective = np.zeros(layout.total)
    objective[tau_cols] = 1.0
    return ub, eq, objective


def _stack_blocks(blocks: list[RowBlock], n_vars: int
                  ) -> tuple[Optional[sp.csr_matrix], Optional[np.ndarray], dict]:
    mats, rhs, spans = [], [], {}
    row0 = 0
    for blk in blocks:
        if blk.n_rows == 0:
            continue
        rows = np.concatenate(blk.rows) if blk.rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(blk.cols) if blk.cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(blk.vals) if blk.vals else np.zeros(0)
        mats.append(sp.coo_matrix((vals, (rows, cols)),
                                  shape=(blk.n_rows, n_vars)))
        rhs.append(np.concatenate(blk.rhs))
        spans[blk.label] = (row0, row0 + blk.n_rows)
        row0 += blk.n_rows
    if not mats:
        return None, None, spans
    return sp.vstack(mats, format="csr"), np.concatenate(rhs), spans


def _build_lp(prob: SynthesisProblem, mode: str
              ) -> tuple[lp_core.LinearProgram, VariableLayout, dict, np.ndarray]:
    t = prob.template
    d = support_vector(t.C, prob.W)
    lam_cols = 0
    if mode == "data":
        if prob.F is None:
            raise ValueError("data-driven synthesis needs a feasible model set")
        lam_cols = prob.F.effective()[0].shape[0]
    layout = VariableLayout(n_c=t.n_c, v_s=t.v_s, v_p=prob.v_p, n=prob.n,
                            m=prob.m, m_d=prob.D.shape[0],
                            v_x=prob.X_vertices.shape[0], lam_cols=lam_cols)

    ub_blocks = [assemble_config_constraints(t, layout),
                 assemble_system_constraints(t, prob.X, prob.U, layout)]
    eq_blocks: list[RowBlock] = []
    norms = np.ones(0)
    if mode == "data":
        inv_ub, inv_eq, norms = assemble_invariance_constraints(
            t, prob.F, prob.P_vertices, d, layout)
        ub_blocks.append(inv_ub)
        eq_blocks.append(inv_eq)
    else:
        if prob.M_true is None:
            raise ValueError("model-based synthesis needs the true model matrix")
        M = np.atleast_2d(np.asarray(prob.M_true, dtype=float))
        expect = (prob.n, (prob.n + prob.m) * prob.s)
        if M.shape != expect:
            raise ValueError(f"model matrix must be {expect}, got {M.shape}")
        ub_blocks.append(assemble_model_invariance(t, M, prob.P_vertices, d, layout))
    vol_ub, vol_eq, objective = assemble_volume_objective(
        t, prob.D, prob.X_vertices, layout)
    ub_blocks.append(vol_ub)
    eq_blocks.append(vol_eq)

    A_ub, b_ub, ub_spans = _stack_blocks(ub_blocks, layout.total)
    A_eq, b_eq, eq_spans = _stack_blocks(eq_blocks, layout.total)
    lb = np.full(layout.total, -np.inf)
    ub = np.full(layout.total, np.inf)
    if layout.lam_total:
        lb[layout.off_lam: layout.off_lam + layout.lam_total] = 0.0
    lp = lp_core.LinearProgram(c=objective, A_ub=A_ub, b_ub=b_ub,
                               A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub)
    spans = {"ub": ub_spans, "eq": eq_spans}
    return lp, layout, spans, norms


def _diagnose_infeasibility(lp: lp_core.LinearProgram, spans: dict,
                            solver: str) -> dict:
    """Elastic relaxation: per-group violation mass at the closest-to-feasible point."""
    n = lp.n_vars
    m_ub = 0 if lp.A_ub is None else lp.A_ub.shape[0]
    m_eq = 0 if lp.A_eq is None else lp.A_eq.shape[0]
    if m_ub + m_eq > 200_000:
        return {}
    A_ub = sp.hstack([lp.A_ub, -sp.eye(m_ub), sp.csr_matrix((m_ub, 2 * m_eq))],
                     format="csr") if m_ub else None
    A_eq = None
    if m_eq:
        A_eq = sp.hstack([lp.A_eq, sp.csr_matrix((m_eq, m_ub)),
                          sp.eye(m_eq), -sp.eye(m_eq)], format="csr")
    extra = m_ub + 2 * m_eq
    c = np.concatenate([np.zeros(n), np.ones(extra)])
    lb = np.concatenate([lp.lb, np.zeros(extra)])
    ubv = np.concatenate([lp.ub, np.full(extra, np.inf)])
    relaxed = lp_core.LinearProgram(c=c, A_ub=A_ub, b_ub=lp.b_ub,
                                    A_eq=A_eq, b_eq=lp.b_eq, lb=lb, ub=ubv)
    res = lp_core.solve_auto(relaxed, solver)
    if not res.ok:
        return {}
    viol = res.x[n:]
    out = {}
    for label, (lo, hi) in spans["ub"].items():
        out[label] = float(viol[lo:hi].sum())
    for label, (lo, hi) in spans["eq"].items():
        v = viol[m_ub + lo: m_ub + hi] + viol[m_ub + m_eq + lo: m_ub + m_eq + hi]
        out[label] = out.get(label, 0.0) + float(v.sum())
    return out


def _extract_solution(prob: SynthesisProblem, mode: str, res, layout: VariableLayout,
                      norms: np.ndarray, diagnostics: dict) -> RCISolution:
    t = prob.template
    x = res.x
    q = x[layout.off_q: layout.off_q + layout.n_c].copy()
    u = x[layout.off_u: layout.off_u + layout.v_s * layout.m].reshape(
        layout.v_s, layout.m).copy()
    eps = x[layout.off_eps: layout.off_eps + layout.m_d].copy()
    lam = None
    if mode == "data" and layout.lam_total:
        lam = x[layout.off_lam: layout.off_lam + layout.lam_total].reshape(
            layout.v_s, layout.v_p, layout.n_c, layout.lam_cols).copy()
        lam /= norms[None, None, None, :]   # back to the raw model-set rows
        diagnostics["lambda_min_raw"] = float(lam.min())
        lam = np.maximum(lam, 0.0)          # clip solver-tolerance negatives
    vertices = t.vertices_of(q)

    # certificate residuals, recorded for the caller
    cert = {
        "cone": float((t.E @ q).max(initial=-np.inf)),
        "state": float(max((prob.X.H @ v - prob.X.h).max() for v in vertices)),
        "input": float(max((prob.U.H @ ui - prob.U.h).max() for ui in u)),
    }
    diagnostics["certificate_max_violation"] = cert

    sol = RCISolution(q=q, vertex_states=vertices, vertex_inputs=u,
                      epsilon=eps, objective=float(res.objective_value),
                      multipliers=lam, problem=prob, diagnostics=diagnostics)
    return sol


def _synthesize(prob: SynthesisProblem, mode: str, solver: str,
                opts: Optional[lp_core.SolveOptions], diagnose: bool) -> RCISolution:
    t0 = time.perf_counter()
    lp, layout, spans, norms = _build_lp(prob, mode)
    t_build = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = lp_core.solve_auto(lp, solver, opts)
    t_solve = time.perf_counter() - t0
    diagnostics = {
        "mode": mode,
        "solver": lp_core.pick_solver(lp, solver),
        "status": res.status,
        "iterations": res.iterations,
        "n_vars": lp.n_vars,
        "n_rows": lp.n_rows,
        "lam_cols": layout.lam_cols,
        "build_seconds": t_build,
        "solve_seconds": t_solve,
        "row_groups": {k: dict(v) for k, v in spans.items()},
    }
    if res.status == lp_core.INFEASIBLE:
        groups = _diagnose_infeasibility(lp, spans, solver) if diagnose else {}
        raise SynthesisInfeasible(
            "no invariant set for this template/data combination "
            f"(violation mass by group: {groups})", groups)
    if res.status == lp_core.UNBOUNDED:
        raise lp_core.NumericalBreakdown(
            "synthesis LP reported unbounded; the size metric should prevent this")
    if res.status == lp_core.ITERATION_LIMIT:
        raise lp_core.NumericalBreakdown("LP iteration limit reached")
    return _extract_solution(prob, mode, res, layout, norms, diagnostics)


def synthesize(prob: SynthesisProblem, solver: str = "auto",
               opts: Optional[lp_core.SolveOptions] = None,
               diagnose: bool = True) -> RCISolution:
    """Data-driven synthesis against every model in the feasible set.

    Callers are expected to have run the excitation check on the dataset;
    an unbounded model set surfaces here as infeasibility or breakdown.
    """
    return _synthesize(prob, "data", solver, opts, diagnose)


def synthesize_model_based(prob: SynthesisProblem, M_true=None,
                           solver: str = "auto",
                           opts: Optional[lp_core.SolveOptions] = None,
                           diagnose: bool = True) -> RCISolution:
    """Synthesis with the model matrix fixed; no multiplier variables."""
    if M_true is not None:
        prob = SynthesisProblem(template=prob.template, X=prob.X, U=prob.U,
                                W=prob.W, P_vertices=prob.P_vertices, F=prob.F,
                                M_true=np.asarray(M_true, dtype=float),
                                D=prob.D, X_vertices=prob.X_vertices)
    return _synthesize(prob, "model", solver, opts, diagnose)


# ---------------------------------------------------------------------------
# independent verification oracle
# ---------------------------------------------------------------------------

@dataclass
class InvarianceReport:
    slacks: np.ndarray            # (v_s, v_p, n_c)
    tol: float

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min())

    @property
    def worst_per_facet(self) -> np.ndarray:
        return self.slacks.min(axis=(0, 1))

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tol

    @property
    def worst_index(self) -> tuple[int, int, int]:
        i, j, k = np.unravel_index(int(np.argmin(self.slacks)), self.slacks.shape)
        return int(i), int(j), int(k)


def verify_invariance(sol: RCISolution, prob: Optional[SynthesisProblem] = None,
                      tol: float = 1e-6, rows: str = "full",
                      solver: str = "scipy") -> InvarianceReport:
    """Re-derive worst-case successor support values, independent of the multipliers.

    For every (vertex, scheduling vertex, facet) triple the oracle maximizes
    the facet value of the successor state over the feasible model set by LP
    (or evaluates it directly for a fixed model) and compares against the
    tightened offset q - d.
    """
    prob = prob or sol.problem
    t = prob.template
    d = support_vector(t.C, prob.W)
    v_s, v_p, n_c = t.v_s, prob.v_p, t.n_c
    slacks = np.empty((v_s, v_p, n_c))

    mode_model = prob.F is None
    if not mode_model:
        H, h = prob.F.effective() if rows == "reduced" else (prob.F.H_bar, prob.F.h_bar)
        A_ub = sp.csr_matrix(H)

    for i in range(v_s):
        xi = sol.vertex_states[i]
        ui = sol.vertex_inputs[i]
        for j in range(v_p):
            p = prob.P_vertices[j]
            z = np.concatenate([
                kron(p.reshape(-1, 1), xi.reshape(-1, 1)).ravel(),
                kron(p.reshape(-1, 1), ui.reshape(-1, 1)).ravel()])
            if mode_model:
                worst = prob.M_true @ z
                slacks[i, j] = (sol.q - d) - t.C @ worst
                continue
            for k in range(n_c):
                obj = -kron(z.reshape(1, -1), t.C[k].reshape(1, -1)).ravel()
                lp = lp_core.LinearProgram(c=obj, A_ub=A_ub, b_ub=h)
                res = (lp_core.solve(lp) if solver == "embedded"
                       else lp_core.solve_external(lp, solver))
                if res.status == lp_core.UNBOUNDED:
                    slacks[i, j, k] = -np.inf
                    continue
                if not res.ok:
                    raise lp_core.NumericalBreakdown(
                        f"verification LP ({i},{j},{k}) ended with {res.status}")
                slacks[i, j, k] = (sol.q[k] - d[k]) + res.objective_value
    return InvarianceReport(slacks=slacks, tol=tol)
