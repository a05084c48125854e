"""Matrix exponentials e^{tA} and their action on vectors.

Everything downstream works with small dense matrices (d <= 16 enforced),
so the exponential is computed by scaling-and-squaring with the degree-13
Pade kernel as implemented in :func:`scipy.linalg.expm`. A precomputed
grid of propagators is provided for the quadrature loops, where the same
e^{p*dt*A} is contracted against many vectors.

For matrices with nonnegative off-diagonal entries the exponential has
nonnegative entries, which the moment recursions rely on.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["MAX_DIM", "MatrixShapeError", "ExpOverflowError", "expm", "expm_action", "expm_row", "PropagatorGrid"]

MAX_DIM = 16


class MatrixShapeError(ValueError):
    """Input is not a small square real matrix."""


class ExpOverflowError(FloatingPointError):
    """Entries of e^{tA} exceeded the representable range."""


def _checked(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MatrixShapeError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_DIM:
        raise MatrixShapeError(f"dimension {A.shape[0]} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(A)):
        raise MatrixShapeError("matrix entries must be finite")
    return A


def expm(A, t: float = 1.0) -> np.ndarray:
    """e^{tA} for a small dense real matrix."""
    A = _checked(A)
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    if t == 0.0:
        return np.eye(A.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(out)):
        raise ExpOverflowError(f"e^(tA) overflowed for t={t}")
    return out


def expm_action(A, t: float, v) -> np.ndarray:
    """e^{tA} v."""
    return expm(A, t) @ np.asarray(v, dtype=float)


def expm_row(A, t: float, j: int) -> np.ndarray:
    """Row j of e^{tA}, i.e. e_j^T e^{tA}."""
    return expm(A, t)[j, :]


class PropagatorGrid:
    """Propagators e^{p*dt*A} for p = 0..count on a uniform grid.

    Each node is exponentiated directly (no repeated squaring chains), so
    every entry carries only one expm's worth of rounding error.
    """

    def __init__(self, A, dt: float, count: int):
        A = _checked(A)
        self.A = A
        self.dt = float(dt)
        self.count = int(count)
        d = A.shape[0]
        mats = np.empty((self.count + 1, d, d))
        mats[0] = np.eye(d)
        for p in range(1, self.count + 1):
            mats[p] = expm(A, p * self.dt)
        mats.setflags(write=False)
        self.matrices = mats  # (count+1, d, d)

    def transpose_apply(self, w) -> np.ndarray:
        """Stack of (e^{p*dt*A})^T w over p, shape (count+1, d)."""
        return np.einsum("pij,i->pj", self.matrices, np.asarray(w, dtype=float))

    def apply(self, v) -> np.ndarray:
        """Stack of e^{p*dt*A} v over p, shape (count+1, d)."""
        return np.einsum("pij,j->pi", self.matrices, np.asarray(v, dtype=float))
