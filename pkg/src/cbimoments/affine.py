"""Riccati / Laplace-transform oracle.

The conditional Laplace transform of the process has the exponential-affine
form

    E[exp(-<lam, X_t>) | X_0 = x] = exp(-<x, v(t, lam)> - int_0^t psi(v(s, lam)) ds),

where v solves the componentwise exponent ODE dv_i/dt = -phi_i(v) started
at lam, with

    phi_i(lam) = c_i lam_i^2 - <B e_i, lam>
                 + int (exp(-<lam, z>) - 1 + lam_i min(1, z_i)) mu_i(dz),
    psi(lam)   = <beta, lam> - int (exp(-<lam, z>) - 1) nu(dz).

The ODE is integrated with classical fixed-step RK4 and the psi integral
accumulated by composite Simpson on the RK nodes. Low-order moments follow
by numerically differentiating the transform at lam = 0 (central
differences with one Richardson extrapolation); this route loses roughly
four digits per order, so it is restricted to orders 1 and 2 and serves as
an independent cross-check of the grid recursion.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .params import AdmissibleParams

__all__ = [
    "MechanismEval",
    "VSolution",
    "NegativeComponentError",
    "mechanism",
    "solve_v",
    "moment_from_laplace",
    "default_steps",
]


class NegativeComponentError(RuntimeError):
    """The exponent ODE left the nonnegative orthant; the step is too coarse."""


@dataclass(frozen=True)
class MechanismEval:
    """Callable pair (phi, psi) of the exponent ODE for one parameter set."""

    phi: object  # lam (d,) -> (d,)
    psi: object  # lam (d,) -> float


def mechanism(p: AdmissibleParams) -> MechanismEval:
    d = p.d
    B_T = p.B.T.copy()
    c = p.c

    def phi(lam: np.ndarray) -> np.ndarray:
        out = c * lam * lam - B_T @ lam
        for i in range(d):
            m = p.mu[i]
            if m.n_atoms:
                e = np.exp(-(m.z @ lam))
                out[i] += float(m.w @ (e - 1.0 + lam[i] * np.minimum(1.0, m.z[:, i])))
        return out

    def psi(lam: np.ndarray) -> float:
        out = float(p.beta @ lam)
        if p.nu.n_atoms:
            e = np.exp(-(p.nu.z @ lam))
            out -= float(p.nu.w @ (e - 1.0))
        return out

    return MechanismEval(phi=phi, psi=psi)


@dataclass(frozen=True)
class VSolution:
    """Exponent at the horizon plus the accumulated psi integral."""

    v: np.ndarray
    psi_integral: float


def default_steps(T: float) -> int:
    return max(1000, ceil(1000.0 * T))


def solve_v(p: AdmissibleParams, lam, T: float, steps: int | None = None) -> VSolution:
    """Integrate dv/dt = -phi(v) from v(0) = lam to time T.

    For lam in the nonnegative orthant the exact solution stays there;
    a drop below -1e-9 in any component is reported as a step-size
    failure. Mildly negative lam (as used by the numerical
    differentiation) is integrated without that check.
    """
    lam = np.asarray(lam, dtype=float).reshape(p.d)
    if T < 0.0:
        raise ValueError("T must be >= 0")
    if steps is None:
        steps = default_steps(T)
    if T == 0.0:
        return VSolution(v=lam.copy(), psi_integral=0.0)
    if steps % 2:
        steps += 1  # Simpson accumulation needs an even panel count
    mech = mechanism(p)
    check_orthant = bool(np.all(lam >= 0.0))
    h = T / steps
    v = lam.copy()
    psi_vals = np.empty(steps + 1)
    psi_vals[0] = mech.psi(v)
    for n in range(steps):
        k1 = -mech.phi(v)
        k2 = -mech.phi(v + 0.5 * h * k1)
        k3 = -mech.phi(v + 0.5 * h * k2)
        k4 = -mech.phi(v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if check_orthant and np.any(v < -1e-9):
            raise NegativeComponentError(
                f"v left R_+^d at step {n + 1}/{steps} (min component {v.min():.3e}); increase steps"
            )
        psi_vals[n + 1] = mech.psi(v)
    weights = np.full(steps + 1, 2.0 / 3.0)
    weights[1::2] = 4.0 / 3.0
    weights[0] = weights[-1] = 1.0 / 3.0
    return VSolution(v=v, psi_integral=float(h * (weights @ psi_vals)))


def _laplace(p: AdmissibleParams, x0: np.ndarray, lam: np.ndarray, T: float, steps: int | None) -> float:
    sol = solve_v(p, lam, T, steps)
    return float(np.exp(-(x0 @ sol.v) - sol.psi_integral))


def moment_from_laplace(
    p: AdmissibleParams, x0, T: float, j: int, order: int, *, step: float = 1e-4, steps: int | None = None
) -> float:
    """E[X_{T,j}] (order 1) or E[X_{T,j}^2] (order 2) from the transform.

    Central differences in lam_j at 0 with step ``step`` and one Richardson
    extrapolation; higher orders are outside this oracle's reliable regime.
    """
    if order not in (1, 2):
        raise ValueError("only orders 1 and 2 are supported by the transform route")
    x0 = np.asarray(x0, dtype=float).reshape(p.d)
    e_j = np.zeros(p.d)
    e_j[j] = 1.0

    def L(eps: float) -> float:
        if eps == 0.0:
            return 1.0
        return _laplace(p, x0, eps * e_j, T, steps)

    if order == 1:
        def diff(h):  # -dL/dlam at 0 is the first moment
            return (L(-h) - L(h)) / (2.0 * h)
    else:
        def diff(h):  # +d^2L/dlam^2 at 0 is the second moment
            return (L(h) - 2.0 + L(-h)) / (h * h)

    d1, d2 = diff(step), diff(0.5 * step)
    return (4.0 * d2 - d1) / 3.0
