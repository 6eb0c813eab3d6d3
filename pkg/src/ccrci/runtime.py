"""Online vertex-interpolation controller and closed-loop LPV simulator.

The controller solves a small interpolation LP at every step: write the
current state as a combination of the invariant set's vertices and blend the
precomputed vertex inputs with the same weights. The simulator drives the
true plant (known only here) under random scheduling and disturbance
realizations and audits set membership along the way.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ccrci import lp_core
from ccrci.dataset import TrajectoryData
from ccrci.lp_core import LPBuilder
from ccrci.polytope import Polytope, contains, enumerate_vertices, sample_uniform


class StateOutsideSet(RuntimeError):
    """Interpolation LP infeasible: the queried state left the invariant set."""


@dataclass
class PlantModel:
    """True LPV dynamics x+ = sum_j p_j (A_j x + B_j u) + w; simulator-only knowledge."""

    A_blocks: list[np.ndarray]
    B_blocks: list[np.ndarray]
    s: int
    P_vertices: Optional[np.ndarray] = None
    W: Optional[Polytope] = None

    def __post_init__(self):
        self.A_blocks = [np.atleast_2d(np.asarray(A, dtype=float)) for A in self.A_blocks]
        self.B_blocks = [np.atleast_2d(np.asarray(B, dtype=float)) for B in self.B_blocks]
        if len(self.A_blocks) != self.s or len(self.B_blocks) != self.s:
            raise ValueError("need exactly s A-blocks and s B-blocks")
        if self.P_vertices is not None:
            self.P_vertices = np.atleast_2d(np.asarray(self.P_vertices, dtype=float))

    @property
    def n(self) -> int:
        return self.A_blocks[0].shape[0]

    @property
    def m(self) -> int:
        return self.B_blocks[0].shape[1]

    @property
    def M(self) -> np.ndarray:
        """Stacked true model matrix [A_1 .. A_s B_1 .. B_s]."""
        return np.hstack(self.A_blocks + self.B_blocks)

    def step(self, x, u, p, w) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        p = np.asarray(p, dtype=float).ravel()
        w = np.asarray(w, dtype=float).ravel()
        out = w.copy()
        for j in range(self.s):
            out = out + p[j] * (self.A_blocks[j] @ x + self.B_blocks[j] @ u)
        return out


SchedulingSampler = Union[str, Callable[[np.ndarray, np.random.Generator], np.ndarray]]


@dataclass
class SamplerSpec:
    """Randomness sources for one closed-loop run; reproducible under seed."""

    scheduling: SchedulingSampler = "uniform"   # "uniform" | "vertices" | callable(x, rng)
    disturbance: str = "uniform"                # "uniform" | "vertex"
    seed: int = 0


@dataclass
class ClosedLoopTrace:
    states: np.ndarray          # (steps+1, n)
    inputs: np.ndarray          # (steps, m)
    schedules: np.ndarray       # (steps, s)
    disturbances: np.ndarray    # (steps, n)
    state_ok: np.ndarray        # (steps+1,) bool, x_t in S(q)
    input_ok: np.ndarray        # (steps,) bool, u_t in U
    clipped_p: np.ndarray       # (steps,) bool, scheduling sample projected into P
    terminated_early: bool = False

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_violations(self) -> int:
        return int((~self.state_ok).sum() + (~self.input_ok).sum())

    def to_csv(self, path: str) -> None:
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        s = self.schedules.shape[1]
        header = (["t"] + [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(m)]
                  + [f"p{i+1}" for i in range(s)] + [f"w{i+1}" for i in range(n)]
                  + ["in_S", "in_U", "clipped_p"])
        fmt = lambda v: f"{v:.17g}"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.steps):
                writer.writerow(
                    [t] + [fmt(v) for v in self.states[t]]
                    + [fmt(v) for v in self.inputs[t]]
                    + [fmt(v) for v in self.schedules[t]]
                    + [fmt(v) for v in self.disturbances[t]]
                    + [int(self.state_ok[t]), int(self.input_ok[t]),
                       int(self.clipped_p[t])])
            writer.writerow([self.steps] + [fmt(v) for v in self.states[-1]]
                            + [""] * (m + s + n)
                            + [int(self.state_ok[-1]), "", ""])


def vertex_controller(x, sol, mode: str = "convex",
                      tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation weights and blended input for a state inside the set.

    mode="convex" (default) additionally enforces sum(lambda) = 1, which is
    the combination the invariance argument actually uses; mode="paper" runs
    the bare interpolation program (min sum lambda, no sum-to-one row).
    """
    x = np.asarray(x, dtype=float).ravel()
    S = Polytope(sol.problem.template.C, sol.q)
    if not contains(S, x, tol):
        raise StateOutsideSet("state is outside the invariant set")
    verts = sol.vertex_states
    v_s, n = verts.shape
    builder = LPBuilder(v_s)
    builder.minimize(np.arange(v_s), np.ones(v_s))
    for row in range(n):
        builder.add_eq(np.arange(v_s), verts[:, row], x[row])
    if mode == "convex":
        builder.add_eq(np.arange(v_s), np.ones(v_s), 1.0)
    elif mode != "paper":
        raise ValueError(f"unknown controller mode {mode!r}")
    for i in range(v_s):
        builder.bound(i, 0.0, 1.0)
    res = lp_core.solve(builder.build())
    if res.status != lp_core.OPTIMAL:
        raise StateOutsideSet(
            f"interpolation LP ended with {res.status}; state not representable")
    lam = np.maximum(res.x, 0.0)
    u = lam @ sol.vertex_inputs
    return u, lam


def _project_to_hull(p: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Closest (Chebyshev) convex combination; used to clip scheduling samples."""
    v_p, s = vertices.shape
    builder = LPBuilder(v_p + 1)  # weights + distance bound
    builder.minimize([v_p], [1.0])
    for row in range(s):
        builder.add_ub(list(range(v_p)) + [v_p],
                       list(vertices[:, row]) + [-1.0], p[row])
        builder.add_ub(list(range(v_p)) + [v_p],
                       list(-vertices[:, row]) + [-1.0], -p[row])
    builder.add_eq(np.arange(v_p), np.ones(v_p), 1.0)
    for j in range(v_p):
        builder.bound(j, 0.0, 1.0)
    builder.bound(v_p, 0.0, np.inf)
    res = lp_core.solve(builder.build())
    if res.status != lp_core.OPTIMAL:
        raise RuntimeError("scheduling projection LP failed")
    return res.x[:v_p] @ vertices


def _sample_scheduling(spec: SamplerSpec, P_vertices: np.ndarray, x: np.ndarray,
                       rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    if callable(spec.scheduling):
        p = np.asarray(spec.scheduling(x, rng), dtype=float).ravel()
        inside = _hull_membership(p, P_vertices)
        if inside:
            return p, False
        return _project_to_hull(p, P_vertices), True
    if spec.scheduling == "uniform":
        alpha = rng.dirichlet(np.ones(P_vertices.shape[0]))
        return alpha @ P_vertices, False
    if spec.scheduling == "vertices":
        j = int(rng.integers(P_vertices.shape[0]))
        return P_vertices[j].copy(), False
    raise ValueError(f"unknown scheduling sampler {spec.scheduling!r}")


def _hull_membership(p: np.ndarray, vertices: np.ndarray, tol: float = 1e-9) -> bool:
    v_p, s = vertices.shape
    builder = LPBuilder(v_p)
    for row in range(s):
        builder.add_eq(np.arange(v_p), vertices[:, row], p[row])
    builder.add_eq(np.arange(v_p), np.ones(v_p), 1.0)
    for j in range(v_p):
        builder.bound(j, 0.0, 1.0)
    return lp_core.solve(builder.build(), lp_core.SolveOptions(feas_tol=tol)).ok


def _sample_disturbance(spec: SamplerSpec, W: Polytope, w_vertices: Optional[np.ndarray],
                        rng: np.random.Generator) -> np.ndarray:
    if spec.disturbance == "uniform":
        return sample_uniform(W, 1, rng)[0]
    if spec.disturbance == "vertex":
        j = int(rng.integers(w_vertices.shape[0]))
        return w_vertices[j].copy()
    raise ValueError(f"unknown disturbance sampler {spec.disturbance!r}")


def simulate_closed_loop(plant: PlantModel, sol, steps: int,
                         sampler: Optional[SamplerSpec] = None,
                         x0=None, mode: str = "convex",
                         audit: bool = True,
                         membership_tol: float = 1e-7) -> ClosedLoopTrace:
    """Run the vertex controller on the true plant and audit set membership.

    In audit mode a controller failure (state escaped the set) flags the step
    and truncates the trace instead of raising; states past the failure would
    not be meaningful.
    """
    sampler = sampler or SamplerSpec()
    prob = sol.problem
    S = Polytope(prob.template.C, sol.q)
    P_vertices = (plant.P_vertices if plant.P_vertices is not None
                  else prob.P_vertices)
    W = plant.W if plant.W is not None else prob.W
    rng = np.random.default_rng(sampler.seed)
    w_vertices = (enumerate_vertices(W).points
                  if sampler.disturbance == "vertex" else None)

    x = np.asarray(x0, dtype=float).ravel() if x0 is not None else sol.vertex_states[0].copy()
    n, m, s = plant.n, plant.m, P_vertices.shape[1]
    states = [x.copy()]
    inputs, schedules, disturbances = [], [], []
    state_ok, input_ok, clipped = [], [], []
    truncated = False
    for _ in range(steps):
        state_ok.append(contains(S, x, membership_tol))
        p, was_clipped = _sample_scheduling(sampler, P_vertices, x, rng)
        try:
            u, _ = vertex_controller(x, sol, mode=mode, tol=membership_tol)
        except StateOutsideSet:
            if not audit:
                raise
            truncated = True
            state_ok[-1] = False
            break
        w = _sample_disturbance(sampler, W, w_vertices, rng)
        x_next = plant.step(x, u, p, w)
        inputs.append(u)
        schedules.append(p)
        disturbances.append(w)
        input_ok.append(contains(prob.U, u, membership_tol))
        clipped.append(was_clipped)
        states.append(x_next)
        x = x_next
    if not truncated:
        state_ok.append(contains(S, x, membership_tol))
    return ClosedLoopTrace(
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, m),
        schedules=np.array(schedules).reshape(-1, s),
        disturbances=np.array(disturbances).reshape(-1, n),
        state_ok=np.array(state_ok, dtype=bool),
        input_ok=np.array(input_ok, dtype=bool),
        clipped_p=np.array(clipped, dtype=bool),
        terminated_early=truncated)


# ---------------------------------------------------------------------------
# benchmark plants
# ---------------------------------------------------------------------------

def van_der_pol_scheduling(mu: float = 2.0, Ts: float = 0.1):
    """State-dependent scheduling of the oscillator embedding; may leave P."""
    def sample(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p1 = 1.0 - mu * Ts * (1.0 - x[0] ** 2)
        return np.array([p1, 1.0 - p1])
    return sample


def build_example_plant(which: str) -> tuple[PlantModel, dict]:
    """Benchmark plants with their constraint sets and template defaults."""
    if which == "double_integrator":
        A1 = np.array([[1.25, 1.25], [0.0, 1.25]])
        A2 = np.array([[0.75, 0.75], [0.0, 0.75]])
        B1 = np.array([[0.0], [1.25]])
        B2 = np.array([[0.0], [0.75]])
        P = np.array([[1.0, 0.0], [0.0, 1.0]])
        W = Polytope.box([0.25, 0.0])
        plant = PlantModel([A1, A2], [B1, B2], s=2, P_vertices=P, W=W)
        defaults = {
            "X": Polytope.box([5.0, 5.0]),
            "U": Polytope.box([1.0]),
            "W": W,
            "P_vertices": P,
            "n_c": 50,
            "input_range": (-1.0, 1.0),
            "closed_loop_scheduling": "uniform",
        }
        return plant, defaults
    if which == "van_der_pol":
        Ts, mu = 0.1, 2.0
        A1 = np.array([[1.0, Ts], [-Ts, 1.0]])
        A2 = np.array([[1.0, Ts], [-Ts, 2.0]])
        B = np.array([[0.0], [Ts]])
        P = np.array([[1.0, 0.0], [1.0 - mu * Ts, mu * Ts]])
        W = Polytope.box([1e-3, 1e-3])
        plant = PlantModel([A1, A2], [B, B.copy()], s=2, P_vertices=P, W=W)
        defaults = {
            "X": Polytope.box([1.0, 1.0]),
            "U": Polytope.box([1.0]),
            "W": W,
            "P_vertices": P,
            "n_c": 30,
            "input_range": (-1.0, 1.0),
            "closed_loop_scheduling": van_der_pol_scheduling(mu, Ts),
        }
        return plant, defaults
    raise ValueError(f"unknown example plant {which!r}")


def generate_experiment_data(plant: PlantModel, T: int,
                             input_range: tuple[float, float] = (-1.0, 1.0),
                             seed: int = 0, x0=None) -> TrajectoryData:
    """Open-loop excitation: uniform inputs, random scheduling in P, random w in W."""
    if T < 1:
        raise ValueError("need at least one transition")
    if plant.P_vertices is None or plant.W is None:
        raise ValueError("plant needs P_vertices and W to generate data")
    rng = np.random.default_rng(seed)
    n, m = plant.n, plant.m
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    states = [x.copy()]
    inputs, schedules = [], []
    lo, hi = input_range
    for _ in range(T):
        alpha = rng.dirichlet(np.ones(plant.P_vertices.shape[0]))
        p = alpha @ plant.P_vertices
        u = rng.uniform(lo, hi, size=m)
        w = sample_uniform(plant.W, 1, rng)[0]
        x = plant.step(x, u, p, w)
        inputs.append(u)
        schedules.append(p)
        states.append(x.copy())
    return TrajectoryData(np.array(states), np.array(inputs), np.array(schedules))
