"""Dense linear-algebra helpers: Kronecker products, vectorization, numerical rank.

These primitives carry the vectorization identity vec(ABC) = (C' kron A) vec(B)
that the whole data-driven pipeline rests on, so they are kept in one place and
property-tested hard rather than being inlined at call sites.
"""

from __future__ import annotations

import numpy as np


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product A (x) B with block (i, j) equal to A[i, j] * B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not (np.isfinite(A).all() and np.isfinite(B).all()):
        raise ValueError("kron requires finite inputs")
    return np.kron(A, B)


def vec(A: np.ndarray) -> np.ndarray:
    """Column-major vectorization: stacks the columns of A into one vector."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.isfinite(A).all():
        raise ValueError("vec requires finite input")
    return A.flatten(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a length rows*cols vector column-major."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def numerical_rank(A: np.ndarray, tol: float = 1e-9) -> int:
    """Number of singular values above tol times the largest singular value.

    A relative threshold keeps the answer stable when the input carries
    measurement-scale magnitudes (trajectory data columns can span several
    orders of magnitude).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
