"""H-representation polytopes: vertex enumeration, support functions, 2-D volume.

The geometric substrate for the state/input/disturbance constraint sets and
for the synthesized invariant sets. Vertex enumeration is deliberately
combinatorial (all n-row subsets): the sets handled here are low-dimensional
with modest facet counts, where exactness beats asymptotic cleverness.
Polytope values are treated as immutable once constructed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ccrci import lp_core
from ccrci.lp_core import LPBuilder, LPResult


class Empty(ValueError):
    """The polytope has no feasible point."""


class Unbounded(ValueError):
    """Some support direction is unbounded over the polytope."""


class DimensionTooLarge(ValueError):
    """Combinatorial enumeration budget exceeded."""


class DegenerateHull(ValueError):
    """Vertex set is collinear; no planar area is defined."""


@dataclass
class Polytope:
    """{x : H x <= h}, with an optional cached vertex list."""

    H: np.ndarray
    h: np.ndarray
    vertices: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.H.shape[0] != self.h.size:
            raise ValueError("H and h row counts disagree")
        if not (np.isfinite(self.H).all() and np.isfinite(self.h).all()):
            raise ValueError("polytope data must be finite")

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    @classmethod
    def box(cls, half_widths) -> "Polytope":
        """Symmetric box {x : |x_i| <= b_i}."""
        b = np.asarray(half_widths, dtype=float).ravel()
        n = b.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([b, b]))

    @classmethod
    def from_bounds(cls, lower, upper) -> "Polytope":
        lo = np.asarray(lower, dtype=float).ravel()
        hi = np.asarray(upper, dtype=float).ravel()
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))


@dataclass
class VertexSet:
    points: np.ndarray  # (k, n)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    def __len__(self) -> int:
        return self.points.shape[0]


def contains(P: Polytope, x, tol: float = 1e-8) -> bool:
    """Elementwise H x <= h + tol."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != P.dim:
        raise ValueError("dimension mismatch")
    return bool((P.H @ x <= P.h + tol).all())


def _support_lp(c: np.ndarray, P: Polytope) -> LPResult:
    builder = LPBuilder(P.dim)
    builder.minimize(np.arange(P.dim), -c)
    for i in range(P.n_rows):
        idx = np.nonzero(P.H[i])[0]
        builder.add_ub(idx, P.H[i, idx], P.h[i])
    return lp_core.solve(builder.build())


def _box_bounds(P: Polytope) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Per-axis (lb, ub) when every row constrains a single coordinate, else None."""
    n = P.dim
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    for i in range(P.n_rows):
        nz = np.nonzero(P.H[i])[0]
        if nz.size != 1:
            return None
        j = nz[0]
        coef = P.H[i, j]
        if coef > 0:
            ub[j] = min(ub[j], P.h[i] / coef)
        else:
            lb[j] = max(lb[j], P.h[i] / coef)
    if not (np.isfinite(lb).all() and np.isfinite(ub).all()):
        return None
    if (lb > ub).any():
        raise Empty("box bounds cross")
    return lb, ub


def support_vector(C, P: Polytope) -> np.ndarray:
    """Row-wise support values d_k = max{C_k w : w in P}.

    Boxes are detected and handled in closed form; general polytopes get one
    LP per row.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != P.dim:
        raise ValueError("direction/polytope dimension mismatch")
    box = _box_bounds(P)
    if box is not None:
        lb, ub = box
        return np.where(C >= 0, C * ub, C * lb).sum(axis=1)
    out = np.empty(C.shape[0])
    for k in range(C.shape[0]):
        res = _support_lp(C[k], P)
        if res.status == lp_core.UNBOUNDED:
            raise Unbounded(f"support direction {k} unbounded")
        if res.status == lp_core.INFEASIBLE:
            raise Empty("polytope is empty")
        if not res.ok:
            raise lp_core.NumericalBreakdown(f"support LP ended with {res.status}")
        out[k] = -res.objective_value
    return out


def _check_bounded_nonempty(P: Polytope) -> None:
    feas = _support_lp(np.zeros(P.dim), P)
    if feas.status == lp_core.INFEASIBLE:
        raise Empty("polytope is empty")
    for j in range(P.dim):
        for sgn in (1.0, -1.0):
            e = np.zeros(P.dim)
            e[j] = sgn
            if _support_lp(e, P).status == lp_core.UNBOUNDED:
                raise Unbounded(f"polytope unbounded along axis {j}")


def enumerate_vertices(P: Polytope, tol: float = 1e-8,
                       dedup_tol: float = 1e-7,
                       budget: int = 2_000_000,
                       check: bool = True) -> VertexSet:
    """All vertices of a bounded nonempty polytope by n-subset enumeration.

    Every size-n row subset with a well-conditioned square system H_I v = h_I
    is solved; v is kept iff it satisfies the full system within tol.
    """
    m, n = P.n_rows, P.dim
    if math.comb(m, n) > budget:
        raise DimensionTooLarge(f"C({m},{n}) subsets exceed budget {budget}")
    if check:
        _check_bounded_nonempty(P)
    found: list[np.ndarray] = []
    for rows in itertools.combinations(range(m), n):
        HI = P.H[list(rows)]
        try:
            cond = np.linalg.cond(HI)
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(cond) or cond > 1e12:
            continue
        v = np.linalg.solve(HI, P.h[list(rows)])
        scale = 1.0 + np.abs(P.h).max(initial=0.0)
        if (P.H @ v <= P.h + tol * scale).all():
            if all(np.abs(v - w).max() > dedup_tol for w in found):
                found.append(v)
    if not found:
        raise Empty("no vertices found; polytope may be empty or degenerate")
    return VertexSet(np.array(found))


def volume_2d(V: VertexSet) -> float:
    """Shoelace area of a planar vertex set, ordered counterclockwise."""
    pts = V.points
    if pts.shape[1] != 2:
        raise ValueError("volume_2d requires planar points")
    if pts.shape[0] < 3:
        raise DegenerateHull("need at least 3 points")
    centered = pts - pts.mean(axis=0)
    # collinear point sets have rank < 2 after centering
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateHull("points are collinear")
    order = np.argsort(np.arctan2(centered[:, 1], centered[:, 0]))
    x, y = pts[order, 0], pts[order, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return float(area)


def bounding_box(P: Polytope) -> tuple[np.ndarray, np.ndarray]:
    box = _box_bounds(P)
    if box is not None:
        return box
    n = P.dim
    hi = support_vector(np.eye(n), P)
    lo = -support_vector(-np.eye(n), P)
    return lo, hi


def sample_uniform(P: Polytope, count: int, rng: np.random.Generator,
                   max_tries: int = 10_000) -> np.ndarray:
    """Uniform samples via rejection from the bounding box.

    Degenerate axes (zero width) are handled by pinning the coordinate.
    """
    lo, hi = bounding_box(P)
    out = np.empty((count, P.dim))
    got = 0
    for _ in range(max_tries):
        block = rng.uniform(lo, hi, size=(max(64, count), P.dim))
        ok = (block @ P.H.T <= P.h + 1e-12).all(axis=1)
        take = block[ok][: count - got]
        out[got:got + take.shape[0]] = take
        got += take.shape[0]
        if got == count:
            return out
    raise RuntimeError("rejection sampling failed; polytope may be thin relative to its box")


def volume_monte_carlo(P: Polytope, samples: int = 200_000,
                       seed: int = 0) -> float:
    """Monte-Carlo volume estimate for dim != 2; approximate by construction."""
    rng = np.random.default_rng(seed)
    lo, hi = bounding_box(P)
    widths = hi - lo
    box_vol = float(np.prod(widths))
    if box_vol == 0.0:
        return 0.0
    pts = rng.uniform(lo, hi, size=(samples, P.dim))
    frac = float(((pts @ P.H.T <= P.h).all(axis=1)).mean())
    return frac * box_vol


def try_symmetric_form(P: Polytope, tol: float = 1e-9) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Split H into (G, g) with P = {x : -g <= G x <= g}, or None if not pairable.

    Rows are matched into exact +/- pairs with equal offsets; the
    first-occurring row of each pair supplies the retained orientation.
    """
    m = P.n_rows
    used = np.zeros(m, dtype=bool)
    G_rows, g_vals = [], []
    for i in range(m):
        if used[i]:
            continue
        match = -1
        for j in range(i + 1, m):
            if used[j]:
                continue
            if np.abs(P.H[j] + P.H[i]).max() <= tol and abs(P.h[j] - P.h[i]) <= tol:
                match = j
                break
        if match < 0:
            return None
        used[i] = used[match] = True
        G_rows.append(P.H[i])
        g_vals.append(P.h[i])
    if not G_rows:
        return None
    return np.array(G_rows), np.array(g_vals)
