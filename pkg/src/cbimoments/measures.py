"""Finite atomic measures on the punctured orthant U_d = R_+^d \\ {0}.

Every jump measure handled by this package is a finite weighted point set,
so all integrals reduce to exact finite sums over atoms. The atom list is
canonicalized (lexicographic order on the atom coordinates, ties broken by
weight) so that equality is structural and accumulation order, hence the
floating-point result, is reproducible bit for bit.

Boundary conventions: an atom with Euclidean norm exactly 1 counts as a
"big" jump; truncation at level K removes atoms with norm >= K. Indicators
are evaluated on squared norms to avoid a square root at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AtomicMeasure",
    "MeasureError",
    "poly_integral",
    "outer_integral",
    "total_mass",
    "tail_mass",
    "big_jump_mean",
    "mean_vector",
    "small_jump_mean",
    "tail_norm_moment",
]


class MeasureError(ValueError):
    """Raised when an atom list violates the U_d constraints."""


def _as_atoms(z, w, dim=None):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if z.size == 0:
        z = z.reshape(0, dim if dim is not None else z.shape[-1] or 1)
    if z.ndim != 2 or w.ndim != 1 or z.shape[0] != w.shape[0]:
        raise MeasureError(f"atom arrays have inconsistent shapes {z.shape} vs {w.shape}")
    return z, w


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite weighted point set on U_d.

    Parameters
    ----------
    z : (n, d) array
        Atom locations, componentwise nonnegative and nonzero.
    w : (n,) array
        Strictly positive atom weights.
    """

    z: np.ndarray
    w: np.ndarray
    dim: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        z, w = _as_atoms(self.z, self.w, self.dim)
        dim = self.dim if self.dim is not None else z.shape[1]
        if z.shape[1] != dim:
            raise MeasureError(f"atoms have dimension {z.shape[1]}, expected {dim}")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
            raise MeasureError("atoms and weights must be finite")
        if np.any(z < 0.0):
            raise MeasureError("atom components must be nonnegative")
        if z.shape[0] and np.any(np.all(z == 0.0, axis=1)):
            raise MeasureError("atoms must be nonzero (the origin is excluded from U_d)")
        if np.any(w <= 0.0):
            raise MeasureError("atom weights must be strictly positive")
        if z.shape[0] > 1:
            order = np.lexsort(np.column_stack([z, w[:, None]]).T[::-1])
            z, w = z[order], w[order]
        z.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def empty(cls, dim: int) -> "AtomicMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), dim)

    @classmethod
    def from_atoms(cls, atoms, dim: int) -> "AtomicMeasure":
        """Build from an iterable of (z, w) pairs."""
        atoms = list(atoms)
        if not atoms:
            return cls.empty(dim)
        z = np.array([a[0] for a in atoms], dtype=float).reshape(len(atoms), -1)
        w = np.array([a[1] for a in atoms], dtype=float)
        return cls(z, w, dim)

    @property
    def n_atoms(self) -> int:
        return self.z.shape[0]

    @property
    def norms_sq(self) -> np.ndarray:
        return np.einsum("ad,ad->a", self.z, self.z)

    def restrict(self, keep: np.ndarray) -> "AtomicMeasure":
        """Sub-measure keeping the atoms selected by the boolean mask."""
        return AtomicMeasure(self.z[keep], self.w[keep], self.dim)

    def scaled(self, factor: float) -> "AtomicMeasure":
        if self.n_atoms == 0:
            return self
        return AtomicMeasure(self.z, self.w * factor, self.dim)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.z.shape == other.z.shape
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.w, other.w)
        )

    def __hash__(self):
        return hash((self.dim, self.z.tobytes(), self.w.tobytes()))


def poly_integral(m: AtomicMeasure, w, p: int) -> np.ndarray | float:
    """Integral of (w . z)**p against the measure, exactly as a finite sum.

    ``w`` may be a single vector of length d or an array of shape (..., d);
    the result has the corresponding leading shape.
    """
    w = np.asarray(w, dtype=float)
    if p < 0:
        raise ValueError("power must be a nonnegative integer")
    if m.n_atoms == 0:
        out = np.zeros(w.shape[:-1])
        return float(out) if out.ndim == 0 else out
    dots = w @ m.z.T  # (..., n_atoms)
    out = (dots**p) @ m.w
    return float(out) if out.ndim == 0 else out


def outer_integral(m: AtomicMeasure) -> np.ndarray:
    """Second-moment matrix of the measure: sum of w * z z^T over atoms."""
    if m.n_atoms == 0:
        return np.zeros((m.dim, m.dim))
    return np.einsum("a,ai,aj->ij", m.w, m.z, m.z)


def total_mass(m: AtomicMeasure) -> float:
    return float(np.sum(m.w))


def tail_mass(m: AtomicMeasure, K: float) -> float:
    """Mass of atoms with Euclidean norm >= K."""
    if m.n_atoms == 0:
        return 0.0
    return float(np.sum(m.w[m.norms_sq >= K * K]))


def mean_vector(m: AtomicMeasure) -> np.ndarray:
    """First-moment vector: sum of w * z over all atoms."""
    if m.n_atoms == 0:
        return np.zeros(m.dim)
    return m.w @ m.z


def big_jump_mean(m: AtomicMeasure) -> np.ndarray:
    """Sum of w * z over atoms with norm >= 1."""
    if m.n_atoms == 0:
        return np.zeros(m.dim)
    big = m.norms_sq >= 1.0
    return m.w[big] @ m.z[big]


def small_jump_mean(m: AtomicMeasure) -> np.ndarray:
    """Sum of w * z over atoms with norm < 1."""
    if m.n_atoms == 0:
        return np.zeros(m.dim)
    small = m.norms_sq < 1.0
    return m.w[small] @ m.z[small]


def tail_norm_moment(m: AtomicMeasure, q: int) -> float:
    """Integral of ||z||**q over atoms with norm >= 1 (always finite here)."""
    if m.n_atoms == 0:
        return 0.0
    n2 = m.norms_sq
    big = n2 >= 1.0
    return float(np.sum(m.w[big] * n2[big] ** (q / 2.0)))
