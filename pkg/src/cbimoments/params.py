"""Parameter tuple for multi-type branching processes with immigration.

A process of dimension d is specified by the tuple (d, c, beta, B, nu, mu):

* ``c``    -- nonnegative diffusion coefficients, one per type,
* ``beta`` -- nonnegative immigration drift,
* ``B``    -- drift matrix with nonnegative off-diagonal entries,
* ``nu``   -- immigration jump measure on U_d (finite atomic),
* ``mu``   -- one branching jump measure per type (finite atomic).

From these we derive the matrices that drive every computation downstream:

* ``mean_drift``       -- B plus the positive part of the branching jump
                          means; the linear generator of the first-moment
                          flow ``m'(t) = mean_drift m(t) + mean_immigration``.
* ``mean_immigration`` -- beta plus the mean of nu.
* ``sde_drift``        -- mean_drift minus the big-jump (norm >= 1) means;
                          the linear drift of the jump SDE in which big
                          jumps are applied uncompensated.

All derived quantities are exact finite sums over atoms in canonical order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measures import AtomicMeasure, MeasureError, mean_vector, tail_norm_moment

__all__ = [
    "AdmissibleParams",
    "DerivedParams",
    "MomentConditionReport",
    "Violation",
    "ValidationError",
    "InvalidKError",
    "validate",
    "derive",
    "check_moment_condition",
    "truncate",
    "load_params",
    "params_to_dict",
]


@dataclass(frozen=True)
class Violation:
    """One violated admissibility condition, with the offending location."""

    code: str
    where: tuple
    message: str

    def __str__(self):
        return f"{self.code}{self.where}: {self.message}"


class ValidationError(ValueError):
    """Raised by :func:`validate`; carries the complete violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "parameter set is not admissible:\n  "
            + "\n  ".join(str(v) for v in self.violations)
        )


class InvalidKError(ValueError):
    """Truncation level must lie in (1, inf]."""


@dataclass(frozen=True)
class AdmissibleParams:
    """Validated parameter tuple of a d-type branching process with immigration."""

    d: int
    c: np.ndarray
    beta: np.ndarray
    B: np.ndarray
    nu: AtomicMeasure
    mu: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(self.d)
        beta = np.asarray(self.beta, dtype=float).reshape(self.d)
        B = np.asarray(self.B, dtype=float).reshape(self.d, self.d)
        c.setflags(write=False)
        beta.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "mu", tuple(self.mu))

    def __eq__(self, other):
        if not isinstance(other, AdmissibleParams):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.B, other.B)
            and self.nu == other.nu
            and self.mu == other.mu
        )

    def __hash__(self):
        return hash((self.d, self.c.tobytes(), self.beta.tobytes(), self.B.tobytes(), self.nu, self.mu))


@dataclass(frozen=True)
class DerivedParams:
    """Drift matrices and vectors derived from an admissible parameter set."""

    mean_drift: np.ndarray        # (d, d), nonnegative off-diagonal entries
    mean_immigration: np.ndarray  # (d,), componentwise >= 0
    sde_drift: np.ndarray         # (d, d), nonnegative off-diagonal entries

    def __post_init__(self):
        for name in ("mean_drift", "mean_immigration", "sde_drift"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class MomentConditionReport:
    """Tail norm moments entering the order-q moment condition.

    For finite atomic measures these are always finite; the report exists so
    callers can log the constants that control moment growth.
    """

    q: int
    nu_tail: float
    mu_tail: tuple

    @property
    def all_finite(self) -> bool:
        return bool(np.isfinite(self.nu_tail) and np.all(np.isfinite(self.mu_tail)))

    def as_dict(self) -> dict:
        return {"q": self.q, "nu_tail": self.nu_tail, "mu_tail": list(self.mu_tail)}


def _validate_measure(obj, d, where, violations):
    """Check one raw measure description; return an AtomicMeasure or None."""
    if isinstance(obj, AtomicMeasure):
        atoms = [(z, w) for z, w in zip(obj.z, obj.w)]
    elif isinstance(obj, dict):
        atoms = [(a.get("z"), a.get("w")) for a in obj.get("atoms", [])]
    elif obj is None:
        atoms = []
    else:
        atoms = list(obj)
    ok = True
    checked = []
    for idx, (z, w) in enumerate(atoms):
        z = np.asarray(z, dtype=float).reshape(-1)
        w = float(w)
        if z.shape != (d,):
            violations.append(
                Violation("DimensionMismatch", where + (idx,), f"atom has dimension {z.shape[0]}, expected {d}")
            )
            ok = False
            continue
        if not (np.all(np.isfinite(z)) and np.isfinite(w)):
            violations.append(Violation("NonFiniteValue", where + (idx,), "atom or weight is not finite"))
            ok = False
            continue
        if np.any(z < 0.0):
            violations.append(Violation("NegativeAtomComponent", where + (idx,), f"atom {z.tolist()} leaves R_+^d"))
            ok = False
        if np.all(z == 0.0):
            violations.append(Violation("AtomAtOrigin", where + (idx,), "the origin is excluded from U_d"))
            ok = False
        if w <= 0.0:
            violations.append(Violation("NonpositiveWeight", where + (idx,), f"weight {w} must be > 0"))
            ok = False
        checked.append((z, w))
    if not ok:
        return None
    try:
        return AtomicMeasure.from_atoms(checked, d)
    except MeasureError as exc:  # pragma: no cover - guarded above
        violations.append(Violation("DimensionMismatch", where, str(exc)))
        return None


def validate(candidate) -> AdmissibleParams:
    """Validate a raw candidate and return an :class:`AdmissibleParams`.

    The candidate may be a dict in the JSON layout
    ``{"d":.., "c":[..], "beta":[..], "B":[[..]], "nu":{"atoms":[..]}, "mu":[..]}``
    or an already-typed parameter object. All violated conditions are
    collected and reported together in a :class:`ValidationError`.
    """
    violations: list[Violation] = []
    get = candidate.get if isinstance(candidate, dict) else lambda k, d=None: getattr(candidate, k, d)

    d = get("d")
    try:
        d = int(d)
    except (TypeError, ValueError):
        raise ValidationError([Violation("DimensionMismatch", (), f"d={d!r} is not a positive integer")])
    if d < 1:
        raise ValidationError([Violation("DimensionMismatch", (), f"d={d} must be >= 1")])

    def vector(name):
        v = np.asarray(get(name), dtype=float).reshape(-1)
        if v.shape != (d,):
            violations.append(Violation("DimensionMismatch", (name,), f"{name} has length {v.shape[0]}, expected {d}"))
            return None
        if not np.all(np.isfinite(v)):
            violations.append(Violation("NonFiniteValue", (name,), f"{name} contains non-finite entries"))
            return None
        return v

    c = vector("c")
    beta = vector("beta")
    if c is not None:
        for i in np.flatnonzero(c < 0.0):
            violations.append(Violation("NegativeC", (int(i) + 1,), f"c[{i + 1}]={c[i]} must be >= 0"))
    if beta is not None:
        for i in np.flatnonzero(beta < 0.0):
            violations.append(Violation("NegativeBeta", (int(i) + 1,), f"beta[{i + 1}]={beta[i]} must be >= 0"))

    B = np.asarray(get("B"), dtype=float)
    if B.shape != (d, d):
        violations.append(Violation("DimensionMismatch", ("B",), f"B has shape {B.shape}, expected {(d, d)}"))
        B = None
    elif not np.all(np.isfinite(B)):
        violations.append(Violation("NonFiniteValue", ("B",), "B contains non-finite entries"))
        B = None
    else:
        for i in range(d):
            for j in range(d):
                if i != j and B[i, j] < 0.0:
                    violations.append(
                        Violation("NegativeOffDiagonal", (i + 1, j + 1), f"B[{i + 1},{j + 1}]={B[i, j]} must be >= 0")
                    )

    nu = _validate_measure(get("nu"), d, ("nu",), violations)
    mu_raw = get("mu")
    mu_raw = list(mu_raw) if mu_raw is not None else []
    if len(mu_raw) != d:
        violations.append(Violation("DimensionMismatch", ("mu",), f"mu has {len(mu_raw)} measures, expected {d}"))
        mu = None
    else:
        mu = [_validate_measure(m, d, ("mu", i + 1), violations) for i, m in enumerate(mu_raw)]
        if any(m is None for m in mu):
            mu = None

    if violations:
        raise ValidationError(violations)
    return AdmissibleParams(d=d, c=c, beta=beta, B=B, nu=nu, mu=tuple(mu))


def derive(p: AdmissibleParams) -> DerivedParams:
    """Evaluate the derived drift matrices as exact sums over atoms."""
    d = p.d
    mean_drift = np.array(p.B, dtype=float)
    sde_adjust = np.zeros((d, d))
    for j in range(d):
        m = p.mu[j]
        if m.n_atoms == 0:
            continue
        delta = np.zeros(d)
        delta[j] = 1.0
        mean_drift[:, j] += m.w @ np.maximum(m.z - delta, 0.0)
        big = m.norms_sq >= 1.0
        sde_adjust[:, j] = m.w[big] @ m.z[big]
    mean_immigration = p.beta + mean_vector(p.nu)
    return DerivedParams(
        mean_drift=mean_drift,
        mean_immigration=mean_immigration,
        sde_drift=mean_drift - sde_adjust,
    )


def check_moment_condition(p: AdmissibleParams, q: int) -> MomentConditionReport:
    """Report the order-q tail norm moments of nu and each mu_i."""
    if q < 1:
        raise ValueError("q must be a positive integer")
    return MomentConditionReport(
        q=q,
        nu_tail=tail_norm_moment(p.nu, q),
        mu_tail=tuple(tail_norm_moment(m, q) for m in p.mu),
    )


def truncate(p: AdmissibleParams, K: float) -> AdmissibleParams:
    """Remove jumps of norm >= K, compensating the diagonal drift.

    Returns the parameter set of the truncated process: atoms with
    ``||z|| >= K`` are dropped from nu and every mu_j, and the diagonal of B
    picks up ``-sum w * min(z_j, 1)`` over the dropped atoms of mu_j. The
    derived ``sde_drift`` matrix is invariant under this operation.
    """
    if not K > 1.0:
        raise InvalidKError(f"truncation level must satisfy K > 1, got {K}")
    if np.isinf(K):
        return p
    K2 = K * K
    B_K = np.array(p.B, dtype=float)
    mu_K = []
    for j in range(p.d):
        m = p.mu[j]
        if m.n_atoms:
            dropped = m.norms_sq >= K2
            B_K[j, j] -= float(m.w[dropped] @ np.minimum(m.z[dropped, j], 1.0))
            mu_K.append(m.restrict(~dropped))
        else:
            mu_K.append(m)
    nu_K = p.nu.restrict(p.nu.norms_sq < K2) if p.nu.n_atoms else p.nu
    return AdmissibleParams(d=p.d, c=p.c, beta=p.beta, B=B_K, nu=nu_K, mu=tuple(mu_K))


def params_to_dict(p: AdmissibleParams) -> dict:
    """JSON-ready dict in the external layout (field names fixed)."""

    def measure(m: AtomicMeasure):
        return {"atoms": [{"z": z.tolist(), "w": float(w)} for z, w in zip(m.z, m.w)]}

    return {
        "d": p.d,
        "c": p.c.tolist(),
        "beta": p.beta.tolist(),
        "B": p.B.tolist(),
        "nu": measure(p.nu),
        "mu": [measure(m) for m in p.mu],
    }


def load_params(source) -> AdmissibleParams:
    """Load and validate parameters from a dict, JSON string or file path."""
    if isinstance(source, AdmissibleParams):
        return source
    if isinstance(source, dict):
        return validate(source)
    text = str(source)
    try:
        path = Path(text)
        if path.exists():
            text = path.read_text()
    except OSError:
        pass  # not a path (e.g. a long JSON literal)
    return validate(json.loads(text))
