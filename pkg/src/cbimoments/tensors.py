"""Symmetric moment tensors, trajectories on a time grid, and initial laws.

A mixed moment of order k over d types is a symmetric array indexed by a
sorted multi-index (i_1 <= ... <= i_k). Storage is dense of shape (d,)*k
with every permutation of a sorted index holding the same value, which
keeps contractions with vectors a plain einsum; the sorted-index view is
the canonical access path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod

import numpy as np

__all__ = [
    "multi_indices",
    "fill_symmetric",
    "MomentTensor",
    "MomentTrajectory",
    "InitialLaw",
    "LawError",
    "write_moments_csv",
    "format_float",
]


def multi_indices(d: int, k: int):
    """All sorted multi-indices of order k over {0, ..., d-1}."""
    return list(itertools.combinations_with_replacement(range(d), k))


def fill_symmetric(dense: np.ndarray, idx: tuple, value) -> None:
    """Assign ``value`` at every permutation of ``idx`` (leading axes broadcast)."""
    lead = dense.ndim - len(idx)
    for perm in set(itertools.permutations(idx)):
        dense[(slice(None),) * lead + perm] = value


@dataclass(frozen=True)
class MomentTensor:
    """Symmetric order-k moment tensor over d types.

    ``array`` is dense of shape (d,)*k; the order-0 tensor is the scalar 1
    (shape ()). Values are accessed by sorted multi-index.
    """

    order: int
    dim: int
    array: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.array, dtype=float)
        if a.shape != (self.dim,) * self.order:
            raise ValueError(f"tensor array has shape {a.shape}, expected {(self.dim,) * self.order}")
        a.setflags(write=False)
        object.__setattr__(self, "array", a)

    def value(self, *indices: int) -> float:
        if len(indices) != self.order:
            raise ValueError(f"expected {self.order} indices, got {len(indices)}")
        return float(self.array[tuple(indices)]) if self.order else float(self.array)

    def items(self):
        """Yield (sorted multi-index, value) pairs, one per distinct entry."""
        for idx in multi_indices(self.dim, self.order):
            yield idx, self.value(*idx)

    def contract(self, *vectors) -> float:
        """Full contraction with ``order`` vectors."""
        out = self.array
        for v in vectors:
            out = out @ np.asarray(v, dtype=float)
        return float(out)


class MomentTrajectory:
    """Moment tensors of every order 0..q at each node of a uniform grid.

    ``kind`` is ``"raw"`` for E[X_{i_1} ... X_{i_k}] or ``"central"`` for
    the same products of X - E[X]. Internally each order is a stacked
    dense array of shape (M+1,) + (d,)*k.
    """

    def __init__(self, grid: np.ndarray, dim: int, kind: str, stacks):
        if kind not in ("raw", "central"):
            raise ValueError(f"kind must be 'raw' or 'central', got {kind!r}")
        grid = np.asarray(grid, dtype=float)
        grid.setflags(write=False)
        self.grid = grid
        self.dim = int(dim)
        self.kind = kind
        self.stacks = []
        for k, s in enumerate(stacks):
            s = np.asarray(s, dtype=float)
            if s.shape != (grid.size,) + (self.dim,) * k:
                raise ValueError(f"order-{k} stack has shape {s.shape}")
            s.setflags(write=False)
            self.stacks.append(s)

    @property
    def max_order(self) -> int:
        return len(self.stacks) - 1

    def node_index(self, t: float) -> int:
        m = int(round((t - self.grid[0]) / (self.grid[1] - self.grid[0]))) if self.grid.size > 1 else 0
        if not (0 <= m < self.grid.size) or abs(self.grid[m] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a grid node")
        return m

    def tensor(self, m: int, k: int) -> MomentTensor:
        return MomentTensor(order=k, dim=self.dim, array=self.stacks[k][m])

    def value(self, m: int, k: int, idx: tuple = ()) -> float:
        return float(self.stacks[k][(m,) + tuple(idx)])

    def rows(self):
        """Yield (t, order, sorted-index, value) for all orders >= 1."""
        for m, t in enumerate(self.grid):
            for k in range(1, self.max_order + 1):
                for idx in multi_indices(self.dim, k):
                    yield t, k, idx, self.value(m, k, idx)


class LawError(ValueError):
    """Invalid initial-law specification."""


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution: a point mass or a finite mixture of point masses.

    ``points`` is (n, d) with nonnegative support, ``probs`` is (n,) summing
    to one. Moments E[X_0^{(x) k}] are exact probability-weighted sums.
    """

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pr = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if pts.ndim != 2 or pr.ndim != 1 or pts.shape[0] != pr.shape[0] or pts.shape[0] == 0:
            raise LawError(f"inconsistent law arrays: points {pts.shape}, probs {pr.shape}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(pr))):
            raise LawError("law entries must be finite")
        if np.any(pts < 0.0):
            raise LawError("initial support must be componentwise nonnegative")
        if np.any(pr <= 0.0) or abs(float(np.sum(pr)) - 1.0) > 1e-12:
            raise LawError("probabilities must be positive and sum to 1")
        pts.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def deterministic(cls, x0) -> "InitialLaw":
        x0 = np.asarray(x0, dtype=float).reshape(1, -1)
        return cls(points=x0, probs=np.array([1.0]))

    @classmethod
    def mixture(cls, components) -> "InitialLaw":
        """Build from an iterable of (x0, probability) pairs."""
        components = list(components)
        pts = np.array([np.asarray(x, dtype=float).reshape(-1) for x, _ in components])
        pr = np.array([float(p) for _, p in components])
        return cls(points=pts, probs=pr)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_degenerate(self) -> bool:
        """True when the law is a single point mass (zero spread)."""
        return self.points.shape[0] == 1 or bool(np.all(self.points == self.points[0]))

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def weighted_power(self, U: np.ndarray, k: int) -> np.ndarray:
        """E[(u . X_0)^k] for each row u of U, exactly."""
        U = np.asarray(U, dtype=float)
        dots = U @ self.points.T  # (..., n)
        return (dots**k) @ self.probs

    def tensor(self, k: int) -> np.ndarray:
        """E[X_0^{(x) k}] as a dense array of shape (d,)*k."""
        if k == 0:
            return np.array(1.0)
        letters = "abcdef"[:k]
        sub = ",".join("n" + ch for ch in letters)
        return np.einsum(f"n,{sub}->{letters}", self.probs, *([self.points] * k))


def format_float(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def _index_label(idx: tuple) -> str:
    return ".".join(str(i + 1) for i in idx)


def write_moments_csv(traj: MomentTrajectory, fileobj) -> None:
    """Write ``t,order,index,value`` rows; indices are 1-based, dot-joined."""
    fileobj.write("t,order,index,value\n")
    for t, k, idx, val in traj.rows():
        fileobj.write(f"{format_float(t)},{k},{_index_label(idx)},{format_float(val)}\n")
