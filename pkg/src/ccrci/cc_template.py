"""Configuration-constrained polytope machinery built from a facet-normal matrix.

Given facet normals C and a template offset sigma for which {x : C x <= sigma}
is an entirely simple polytope, this module derives the vertex index sets, the
per-vertex maps V_k sending an offset q to the k-th vertex, and the cone
matrix E. For any offset q with E q <= 0 the polytope {x : C x <= q} equals
the convex hull of {V_k q}, which is what lets the synthesis LP reason about
vertices of a set whose offsets are decision variables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ccrci.linops import numerical_rank
from ccrci.polytope import Polytope, enumerate_vertices

# geometric preconditions surface through the polytope module's errors
from ccrci.polytope import Empty, Unbounded  # noqa: F401  (re-exported)


class BadComplexity(ValueError):
    """Requested facet count cannot describe a planar template."""


class NotEntirelySimple(ValueError):
    """Template violates the entirely-simple requirement (or is too ill-conditioned)."""


class BudgetExceeded(RuntimeError):
    """Exhaustive face enumeration exceeded its subset budget."""


@dataclass
class CCTemplate:
    C: np.ndarray                       # (n_c, n) facet normals
    sigma: np.ndarray                   # (n_c,) template offset
    vertex_index_sets: list[tuple[int, ...]]
    V_maps: list[np.ndarray]            # each (n, n_c)
    E: np.ndarray                       # (n_c * v_s, n_c)

    @property
    def n_c(self) -> int:
        return self.C.shape[0]

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def v_s(self) -> int:
        return len(self.vertex_index_sets)

    def vertices_of(self, q) -> np.ndarray:
        """Stack of V_k q over all vertex maps, shape (v_s, n)."""
        q = np.asarray(q, dtype=float).ravel()
        return np.array([V @ q for V in self.V_maps])

    def in_cone(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float).ravel()
        return bool((self.E @ q <= tol).all())


def build_circular_template(n_c: int) -> np.ndarray:
    """Planar template with n_c unit normals equally spaced on the circle."""
    if n_c < 3:
        raise BadComplexity("a planar template needs at least 3 facets")
    i = np.arange(n_c)
    ang = 2.0 * np.pi * i / n_c
    return np.column_stack([np.cos(ang), np.sin(ang)])


def find_vertex_index_sets(C, sigma, tol: float = 1e-8) -> list[tuple[int, ...]]:
    """All size-n row subsets whose facets meet at a point of the template polytope.

    Each candidate subset I is tested by solving C_I x = sigma_I and checking
    C x <= sigma + tol; singular subsets are skipped (they define no vertex).
    Returned index sets are sorted lexicographically, which fixes the vertex
    ordering used by every downstream array.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    sigma = np.asarray(sigma, dtype=float).ravel()
    n_c, n = C.shape
    S = Polytope(C, sigma)
    enumerate_vertices(S, tol=tol)  # raises Empty/Unbounded when ill-posed
    scale = 1.0 + np.abs(sigma).max(initial=0.0)
    out: list[tuple[int, ...]] = []
    for rows in itertools.combinations(range(n_c), n):
        CI = C[list(rows)]
        try:
            cond = np.linalg.cond(CI)
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(cond) or cond > 1e12:
            continue
        x = np.linalg.solve(CI, sigma[list(rows)])
        if (C @ x <= sigma + tol * scale).all():
            out.append(tuple(rows))
    return sorted(out)


def check_entirely_simple(C, sigma, tol: float = 1e-8,
                          method: str = "vertex",
                          budget: int = 2_000_000,
                          max_subset_size: int | None = None) -> bool:
    """True iff every nonempty face of {x : C x <= sigma} has independent active normals.

    method="vertex" uses the fact that every nonempty face of a bounded
    polytope contains a vertex, so it suffices to check the active normal set
    at each vertex (subsets of an independent set stay independent). This is
    exact and fast. method="exhaustive" literally enumerates index subsets up
    to max_subset_size (default: full) and LP-tests each face for emptiness;
    it exists as an independent cross-check for small templates.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    sigma = np.asarray(sigma, dtype=float).ravel()
    n_c, n = C.shape
    S = Polytope(C, sigma)
    scale = 1.0 + np.abs(sigma).max(initial=0.0)

    if method == "vertex":
        verts = enumerate_vertices(S, tol=tol, budget=budget)
        for v in verts.points:
            active = np.where(np.abs(C @ v - sigma) <= tol * scale)[0]
            if active.size > n:
                return False
            if numerical_rank(C[active]) < active.size:
                return False
        return True

    if method == "exhaustive":
        from ccrci import lp_core
        from ccrci.lp_core import LPBuilder

        enumerate_vertices(S, tol=tol, budget=budget)  # precondition check
        limit = max_subset_size or n_c
        total = sum(math.comb(n_c, k) for k in range(1, limit + 1))
        if total > budget:
            raise BudgetExceeded(f"{total} subsets exceed budget {budget}")
        for size in range(1, limit + 1):
            for rows in itertools.combinations(range(n_c), size):
                builder = LPBuilder(n)
                for i in range(n_c):
                    idx = np.nonzero(C[i])[0]
                    builder.add_ub(idx, C[i, idx], sigma[i])
                for i in rows:
                    idx = np.nonzero(C[i])[0]
                    builder.add_ub(idx, -C[i, idx], -sigma[i])
                res = lp_core.solve(builder.build())
                if res.status == lp_core.INFEASIBLE:
                    continue  # empty face
                if numerical_rank(C[list(rows)]) < len(rows):
                    return False
        return True

    raise ValueError(f"unknown method {method!r}")


def build_cc_machinery(C, sigma=None, tol: float = 1e-8,
                       cond_limit: float = 1e10) -> CCTemplate:
    """Construct vertex index sets, vertex maps and the cone matrix for C.

    sigma defaults to the all-ones offset. The template polytope must be
    entirely simple; each vertex map is obtained by an explicit solve against
    the selected facet rows, rejected if the facet basis is ill-conditioned.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n_c, n = C.shape
    sigma = np.ones(n_c) if sigma is None else np.asarray(sigma, dtype=float).ravel()
    if sigma.size != n_c:
        raise ValueError("sigma length must match facet count")
    if not check_entirely_simple(C, sigma, tol=tol):
        raise NotEntirelySimple("template polytope is not entirely simple")

    index_sets = find_vertex_index_sets(C, sigma, tol=tol)
    if not index_sets:
        raise NotEntirelySimple("no vertex index sets found")
    V_maps: list[np.ndarray] = []
    for rows in index_sets:
        CI = C[list(rows)]
        cond = np.linalg.cond(CI)
        if not np.isfinite(cond) or cond > cond_limit:
            raise NotEntirelySimple(
                f"facet basis {rows} has condition {cond:.3e} > {cond_limit:.0e}")
        V = np.zeros((n, n_c))
        V[:, list(rows)] = np.linalg.inv(CI)
        V_maps.append(V)

    E = np.vstack([C @ V - np.eye(n_c) for V in V_maps])
    slack = E @ sigma
    if slack.max(initial=0.0) > tol * (1.0 + np.abs(sigma).max()):
        raise NotEntirelySimple("constructed cone rejects its own template offset")
    return CCTemplate(C=C, sigma=sigma, vertex_index_sets=index_sets,
                      V_maps=V_maps, E=E)
