"""Moment engine: raw, central and mixed moments on a uniform time grid.

The order-k weighted power moment E[<w, X_t>^k] satisfies a Volterra-type
identity whose right-hand side only involves moments of total order at
most k-1, so the engine marches order by order: it evaluates the weighted
recursion for a family of sign vectors and recovers every mixed entry
E[X_{i_1} ... X_{i_k}] through the polarization identity

    a_1...a_k = 1/(k! 2^k) * sum over signs s_r = +-1 of
                (prod_r s_r) * (s_1 a_1 + ... + s_k a_k)^k.

Time integrals are composite Simpson on the shared uniform grid (the
integrands reference lower-order tensors only at grid nodes); the closed
form paths (first moment, covariance matrix) use adaptive quadrature.

Central moments satisfy the same kind of recursion with the initial-value
and immigration-drift terms absent and centered tensors inside; centering
uses the closed-form mean, and the recursion is valid for a deterministic
initial state (the engine rejects initial laws with spread for central
quantities, where the identity does not apply).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .matfun import PropagatorGrid, expm
from .measures import outer_integral, poly_integral
from .params import AdmissibleParams, DerivedParams, derive
from .quadrature import OddGridError, adaptive_simpson, composite_weight_matrix
from .tensors import InitialLaw, MomentTrajectory, fill_symmetric, multi_indices

__all__ = [
    "MAX_ORDER",
    "MAX_DIM",
    "NegativeTimeError",
    "MissingLowerOrderError",
    "LawSpreadError",
    "OrderLimitError",
    "first_moment",
    "weighted_moment",
    "raw_trajectory",
    "central_trajectory",
    "variance",
    "mixed_central",
    "degree_check",
    "DegreeReport",
]

MAX_ORDER = 6
MAX_DIM = 6

_LETTERS = "abcdef"


class NegativeTimeError(ValueError):
    """Moments are defined for t >= 0 only."""


class MissingLowerOrderError(ValueError):
    """A supplied trajectory lacks the orders the recursion needs."""


class LawSpreadError(ValueError):
    """Central-moment formulas require a deterministic initial state."""


class OrderLimitError(ValueError):
    """Requested order or dimension exceeds the engine bounds."""


def _check_bounds(d: int, q: int) -> None:
    if not 1 <= q <= MAX_ORDER:
        raise OrderLimitError(f"order q={q} outside 1..{MAX_ORDER}")
    if d > MAX_DIM:
        raise OrderLimitError(f"dimension d={d} exceeds the engine bound {MAX_DIM}")


def _flow_integral(A: np.ndarray, t: float, abs_tol: float) -> np.ndarray:
    """int_0^t e^{uA} du, analytic when A is safely invertible."""
    d = A.shape[0]
    if t == 0.0:
        return np.zeros((d, d))
    norm = float(np.linalg.norm(A, 2))
    if norm == 0.0:
        return t * np.eye(d)
    smin = float(np.linalg.svd(A, compute_uv=False)[-1])
    if smin > 1e-10 * max(1.0, norm):
        return np.linalg.solve(A, expm(A, t) - np.eye(d))
    return adaptive_simpson(lambda u: expm(A, u), 0.0, t, abs_tol)


def first_moment(dp: DerivedParams, law: InitialLaw, t: float, *, abs_tol: float = 1e-10) -> np.ndarray:
    """Closed-form mean E[X_t] = e^{t A} E[X_0] + int_0^t e^{u A} b du."""
    if t < 0.0:
        raise NegativeTimeError(f"t={t}")
    A = dp.mean_drift
    return expm(A, t) @ law.mean() + _flow_integral(A, t, abs_tol) @ dp.mean_immigration


@dataclass
class _GridContext:
    """Shared per-run state: propagators, quadrature weights, tensor stacks."""

    p: AdmissibleParams
    dp: DerivedParams
    law: InitialLaw
    T: float
    M: int
    grid: np.ndarray
    G: PropagatorGrid
    QW: np.ndarray      # (M+1, M+1) lower-triangular quadrature weights
    pm_r: np.ndarray    # pm_r[m, r] = max(m - r, 0), gathers by time difference
    rcols: np.ndarray   # rcols[m, r] = r
    m1: np.ndarray      # (M+1, d) closed-form mean at the nodes
    raw: list           # stacks, raw[k] has shape (M+1,) + (d,)*k
    cent: list


def _mean_grid(ctx_G: PropagatorGrid, dp: DerivedParams, law: InitialLaw, abs_tol: float = 1e-10) -> np.ndarray:
    A = dp.mean_drift
    d = A.shape[0]
    count = ctx_G.count
    flow = ctx_G.apply(law.mean())  # (M+1, d)
    norm = float(np.linalg.norm(A, 2))
    if norm == 0.0:
        J = np.einsum("m,ij->mij", ctx_G.dt * np.arange(count + 1), np.eye(d))
    else:
        smin = np.linalg.svd(A, compute_uv=False)[-1]
        if smin > 1e-10 * max(1.0, norm):
            J = np.linalg.solve(A[None, :, :], ctx_G.matrices - np.eye(d))
        else:
            J = np.empty((count + 1, d, d))
            J[0] = 0.0
            for m in range(1, count + 1):
                J[m] = J[m - 1] + adaptive_simpson(
                    lambda u: expm(A, u), (m - 1) * ctx_G.dt, m * ctx_G.dt, abs_tol
                )
    return flow + np.einsum("mij,j->mi", J, dp.mean_immigration)


def _build_context(p: AdmissibleParams, law: InitialLaw, T: float, M: int) -> _GridContext:
    if T < 0.0:
        raise NegativeTimeError(f"T={T}")
    if M < 2 or M % 2:
        raise OddGridError(f"grid size M={M} must be even and >= 2")
    if law.dim != p.d:
        raise ValueError(f"initial law has dimension {law.dim}, parameters have {p.d}")
    dp = derive(p)
    h = T / M
    grid = np.linspace(0.0, T, M + 1)
    G = PropagatorGrid(dp.mean_drift, h, M)
    QW = composite_weight_matrix(M, h)
    m_idx = np.arange(M + 1)
    pm_r = np.maximum(m_idx[:, None] - m_idx[None, :], 0)
    rcols = np.broadcast_to(m_idx[None, :], (M + 1, M + 1))
    m1 = _mean_grid(G, dp, law)
    return _GridContext(
        p=p, dp=dp, law=law, T=T, M=M, grid=grid, G=G, QW=QW,
        pm_r=pm_r, rcols=rcols, m1=m1, raw=[np.ones(M + 1)], cent=[np.ones(M + 1)],
    )


def _contract_pow(stack: np.ndarray, U: np.ndarray, ell: int) -> np.ndarray:
    """E[<u_p, X_r>^ell] for every (p, r) from the order-ell stack."""
    if ell == 0:
        return np.ones((U.shape[0], stack.shape[0]))
    letters = _LETTERS[:ell]
    sub = "r" + letters + "," + ",".join("p" + ch for ch in letters) + "->pr"
    return np.einsum(sub, stack, *([U] * ell))


def _contract_pow_free(stack: np.ndarray, U: np.ndarray, ell: int) -> np.ndarray:
    """E[<u_p, X_r>^ell X_{r,i}] for every (p, r, i) from the order-(ell+1) stack."""
    if ell == 0:
        return np.broadcast_to(stack[None, :, :], (U.shape[0],) + stack.shape)
    letters = _LETTERS[:ell]
    sub = "r" + letters + "i," + ",".join("p" + ch for ch in letters) + "->pri"
    return np.einsum(sub, stack, *([U] * ell))


def _weighted_traj(ctx: _GridContext, w: np.ndarray, k: int, kind: str) -> np.ndarray:
    """E[<w, X_t>^k] (raw) or E[<w, X_t - E X_t>^k] (central) at every node."""
    M = ctx.M
    d = ctx.p.d
    U = ctx.G.transpose_apply(w)  # U[p] = (e^{p h A})^T w
    pm, rc = ctx.pm_r, ctx.rcols
    stacks = ctx.raw if kind == "raw" else ctx.cent

    def power_contr(ell):
        return _contract_pow(stacks[ell], U, ell)

    def mixed_contr(ell):
        out = _contract_pow_free(stacks[ell + 1], U, ell)
        if kind == "central":
            # X_{r,i} = m1[r,i] + (X - E X)_{r,i}; the first piece factors out
            out = out + ctx.m1[None, :, :] * power_contr(ell)[:, :, None]
        return out

    F = np.zeros((M + 1, M + 1))
    if kind == "raw":
        drift = U @ ctx.dp.mean_immigration  # (M+1,)
        F += k * drift[pm] * power_contr(k - 1)[pm, rc]
    if k >= 2:
        if np.any(ctx.p.c > 0.0):
            amp = (U**2) * ctx.p.c[None, :]  # (M+1, d)
            F += k * (k - 1) * np.einsum("mri,mri->mr", amp[pm], mixed_contr(k - 2)[pm, rc])
        for ell in range(k - 1):
            pw = k - ell
            coeff = comb(k, ell)
            j_nu = poly_integral(ctx.p.nu, U, pw)  # (M+1,)
            if np.any(j_nu):
                F += coeff * j_nu[pm] * power_contr(ell)[pm, rc]
            j_mu = np.stack([poly_integral(m, U, pw) for m in ctx.p.mu], axis=1)  # (M+1, d)
            if np.any(j_mu):
                F += coeff * np.einsum("mri,mri->mr", j_mu[pm], mixed_contr(ell)[pm, rc])
    out = np.einsum("mr,mr->m", ctx.QW, F)
    if kind == "raw":
        out += ctx.law.weighted_power(U, k)
    return out


def _canonical_sign(w: tuple, k: int):
    """Flip w so its first nonzero entry is positive; return (w, parity factor)."""
    for x in w:
        if x > 0:
            return w, 1.0
        if x < 0:
            return tuple(-y for y in w), (-1.0) ** k
    return None, 0.0  # zero vector: <0, X>^k == 0 for k >= 1


def _fill_order(ctx: _GridContext, k: int, kind: str) -> np.ndarray:
    """Dense order-k stack at every node via polarization of weighted moments."""
    d = ctx.p.d
    M = ctx.M
    cache: dict = {}

    def wtraj(wt: tuple) -> np.ndarray:
        val = cache.get(wt)
        if val is None:
            val = _weighted_traj(ctx, np.asarray(wt, dtype=float), k, kind)
            cache[wt] = val
        return val

    dense = np.zeros((M + 1,) + (d,) * k)
    norm = 1.0 / (factorial(k) * 2**k)
    for idx in multi_indices(d, k):
        if len(set(idx)) == 1:
            w = tuple(1 if i == idx[0] else 0 for i in range(d))
            vals = wtraj(w)
        else:
            acc = np.zeros(M + 1)
            for signs in itertools.product((1, -1), repeat=k):
                w = [0] * d
                for s, i in zip(signs, idx):
                    w[i] += s
                wt, fac = _canonical_sign(tuple(w), k)
                if wt is None:
                    continue
                parity = 1.0 if sum(s < 0 for s in signs) % 2 == 0 else -1.0
                acc += parity * fac * wtraj(wt)
            vals = norm * acc
        fill_symmetric(dense, idx, vals)
    return dense


def raw_trajectory(p: AdmissibleParams, law: InitialLaw, q: int, T: float, M: int) -> MomentTrajectory:
    """Raw mixed moment tensors of orders 0..q at every node of the grid.

    Order 1 is the closed-form mean; each order k >= 2 is recovered from
    weighted power moments of the recursion, which reference only tensors
    of total order <= k-1.
    """
    _check_bounds(p.d, q)
    ctx = _build_context(p, law, T, M)
    ctx.raw.append(ctx.m1)
    for k in range(2, q + 1):
        ctx.raw.append(_fill_order(ctx, k, "raw"))
    return MomentTrajectory(ctx.grid, p.d, "raw", ctx.raw[: q + 1])


def central_trajectory(p: AdmissibleParams, law: InitialLaw, q: int, T: float, M: int) -> MomentTrajectory:
    """Central mixed moment tensors of orders 0..q (deterministic start).

    Order 1 is identically zero; each order k >= 2 follows the three-term
    recursion (diffusion, branching jumps, immigration jumps) evaluated on
    centered tensors, with the mean supplied in closed form.
    """
    _check_bounds(p.d, q)
    if not law.is_degenerate:
        raise LawSpreadError("central moments require a deterministic initial state")
    ctx = _build_context(p, law, T, M)
    ctx.cent.append(np.zeros((M + 1, p.d)))
    for k in range(2, q + 1):
        ctx.cent.append(_fill_order(ctx, k, "central"))
    return MomentTrajectory(ctx.grid, p.d, "central", ctx.cent[: q + 1])


def weighted_moment(
    dp: DerivedParams,
    p: AdmissibleParams,
    law: InitialLaw,
    w,
    k: int,
    T: float,
    M: int,
    lower: MomentTrajectory | None = None,
) -> float:
    """E[<w, X_T>^k] by the order-k recursion on an M-step Simpson grid.

    ``lower`` may supply the raw trajectory up to order k-1 on the same
    grid; otherwise it is computed. For k=1 this reduces to the quadrature
    evaluation of the mean formula and must agree with
    :func:`first_moment` to quadrature accuracy.
    """
    if k < 1:
        raise OrderLimitError(f"order k={k} must be >= 1")
    _check_bounds(p.d, k)
    ctx = _build_context(p, law, T, M)
    if lower is not None:
        if lower.kind != "raw" or lower.max_order < k - 1:
            raise MissingLowerOrderError(
                f"need raw tensors up to order {k - 1}, got {lower.kind} up to {lower.max_order}"
            )
        if lower.grid.size != M + 1 or abs(lower.grid[-1] - T) > 1e-12 * max(1.0, T):
            raise MissingLowerOrderError("supplied trajectory lives on a different grid")
        ctx.raw = [lower.stacks[j] for j in range(k)]
    else:
        ctx.raw.append(ctx.m1)
        for kk in range(2, k):
            ctx.raw.append(_fill_order(ctx, kk, "raw"))
    return float(_weighted_traj(ctx, np.asarray(w, dtype=float), k, "raw")[M])


def variance(
    dp: DerivedParams, p: AdmissibleParams, law: InitialLaw, T: float, *, abs_tol: float = 1e-10
) -> np.ndarray:
    """Closed-form covariance matrix Var(X_T) for a deterministic start.

    Var(X_T) = sum_l int_0^T m_l(T-u) e^{uA} C_l e^{uA^T} du
             + int_0^T e^{uA} V_nu e^{uA^T} du,

    with A the mean drift, m(t) the closed-form mean, V_nu the second
    moment matrix of the immigration measure and
    C_l = 2 c_l e_l e_l^T + (second moment matrix of mu_l).
    """
    if T < 0.0:
        raise NegativeTimeError(f"T={T}")
    if not law.is_degenerate:
        raise LawSpreadError("the covariance formula requires a deterministic initial state")
    d = p.d
    A = dp.mean_drift
    C = np.zeros((d, d, d))  # C[l] per type
    for ell in range(d):
        C[ell, ell, ell] = 2.0 * p.c[ell]
        C[ell] += outer_integral(p.mu[ell])
    V_nu = outer_integral(p.nu)
    if T == 0.0:
        return np.zeros((d, d))

    def integrand(u: float) -> np.ndarray:
        E = expm(A, u)
        weights = first_moment(dp, law, T - u, abs_tol=abs_tol)
        core = np.einsum("l,lij->ij", weights, C) + V_nu
        return E @ core @ E.T

    return adaptive_simpson(integrand, 0.0, T, abs_tol)


def mixed_central(p: AdmissibleParams, law: InitialLaw, q: int, T: float, M: int, indices) -> float:
    """Mixed central moment E[prod_r (X_{T,i_r} - E X_{T,i_r})] via polarization."""
    idx = tuple(int(i) for i in indices)
    k = len(idx)
    if not 1 <= k <= q:
        raise OrderLimitError(f"order {k} outside 1..q={q}")
    _check_bounds(p.d, q)
    if not law.is_degenerate:
        raise LawSpreadError("central moments require a deterministic initial state")
    if k == 1:
        return 0.0
    ctx = _build_context(p, law, T, M)
    ctx.cent.append(np.zeros((M + 1, p.d)))
    for kk in range(2, k):
        ctx.cent.append(_fill_order(ctx, kk, "central"))
    dense = _fill_order(ctx, k, "central")
    return float(dense[(M,) + tuple(sorted(idx))])


@dataclass(frozen=True)
class DegreeReport:
    """Finite-difference certificate for the polynomial degree bound in x0."""

    kind: str
    k: int
    degree_bound: int
    x0_values: tuple
    moment_values: tuple
    top_difference: float
    scale: float
    tol: float
    passed: bool


def degree_check(
    p: AdmissibleParams,
    kind: str,
    k: int,
    T: float,
    M: int,
    *,
    j: int = 0,
    coord: int = 0,
    x0_base=None,
    x0_step: float = 0.5,
    tol: float = 1e-6,
) -> DegreeReport:
    """Certify that E[X_{T,j}^k] (raw: degree <= k) resp. the k-th central
    moment (degree <= floor(k/2)) is polynomial in the initial value.

    The moment is evaluated at degree+2 equally spaced initial values along
    one coordinate; the (degree+1)-th finite difference of a polynomial of
    that degree vanishes, so its magnitude relative to the value scale is
    the certificate.
    """
    if kind not in ("raw", "central"):
        raise ValueError(f"kind must be 'raw' or 'central', got {kind!r}")
    degree = k if kind == "raw" else k // 2
    n_points = degree + 2
    base = np.ones(p.d) if x0_base is None else np.asarray(x0_base, dtype=float).reshape(p.d)
    x0s = [base + i * x0_step * np.eye(p.d)[coord] for i in range(n_points)]
    values = []
    for x0 in x0s:
        law = InitialLaw.deterministic(x0)
        if kind == "raw":
            traj = raw_trajectory(p, law, k, T, M)
        else:
            traj = central_trajectory(p, law, k, T, M)
        values.append(traj.value(M, k, (j,) * k))
    values = np.asarray(values)
    top = float(np.diff(values, n=degree + 1)[0])
    scale = float(max(1.0, np.max(np.abs(values))))
    return DegreeReport(
        kind=kind,
        k=k,
        degree_bound=degree,
        x0_values=tuple(float(x[coord]) for x in x0s),
        moment_values=tuple(float(v) for v in values),
        top_difference=top,
        scale=scale,
        tol=tol,
        passed=bool(abs(top) <= tol * scale),
    )
