"""Quadrature rules used by the moment engine.

Two regimes:

* Closed-form paths (first moment, variance) integrate directly evaluable
  smooth integrands with an adaptive Simpson rule to an absolute tolerance.
* The grid recursion knows its integrands only at the shared uniform nodes,
  so it uses fixed composite Newton-Cotes weights: plain composite Simpson
  up to an even node, Simpson plus a 3/8 tail up to an odd node (both with
  fourth-order local error), and a single trapezoid for the very first
  node, whose lower-order error only re-enters later integrals damped by
  one factor of the step.
"""

from __future__ import annotations

import numpy as np

__all__ = ["OddGridError", "composite_weight_matrix", "adaptive_simpson"]


class OddGridError(ValueError):
    """The grid size M must be even for the composite Simpson trajectory."""


def composite_weight_matrix(M: int, h: float) -> np.ndarray:
    """Lower-triangular weights W with sum_r W[m, r] f(r h) ~ int_0^{m h} f.

    Row 0 is zero; row 1 is the trapezoid rule; even rows are composite
    Simpson; odd rows >= 3 are composite Simpson on the first m-3 panels
    followed by the 3/8 rule on the last three.
    """
    if M < 1:
        raise ValueError("need at least one grid step")
    W = np.zeros((M + 1, M + 1))
    simpson_rows: dict[int, np.ndarray] = {}

    def simpson(m: int) -> np.ndarray:
        row = simpson_rows.get(m)
        if row is None:
            row = np.zeros(M + 1)
            row[0 : m + 1 : 2] = 2.0 / 3.0
            row[1 : m + 1 : 2] = 4.0 / 3.0
            row[0] = row[m] = 1.0 / 3.0
            simpson_rows[m] = row
        return row

    if M >= 1:
        W[1, 0] = W[1, 1] = 0.5
    for m in range(2, M + 1, 2):
        W[m, : m + 1] = simpson(m)[: m + 1]
    three_eighths = np.array([3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0])
    for m in range(3, M + 1, 2):
        if m > 3:
            W[m, : m - 2] = simpson(m - 3)[: m - 2]
        W[m, m - 3 : m + 1] += three_eighths
    return W * h


def adaptive_simpson(f, a: float, b: float, abs_tol: float = 1e-10, max_depth: int = 40):
    """Adaptive Simpson integration of a scalar-, vector- or matrix-valued f.

    The error estimate is the max-abs difference between one Simpson panel
    and its two halves; Richardson's correction term is added on exit.
    """
    if b == a:
        return np.zeros_like(np.asarray(f(a), dtype=float))
    if b < a:
        return -adaptive_simpson(f, b, a, abs_tol, max_depth)

    def simpson(fa, fm, fb, width):
        return (width / 6.0) * (fa + 4.0 * fm + fb)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        x1 = 0.5 * (x0 + x2)
        fl = np.asarray(f(0.5 * (x0 + x1)), dtype=float)
        fr = np.asarray(f(0.5 * (x1 + x2)), dtype=float)
        left = simpson(f0, fl, f1, x1 - x0)
        right = simpson(f1, fr, f2, x2 - x1)
        err = np.max(np.abs(left + right - whole))
        if depth <= 0 or err <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(x0, x1, f0, fl, f1, left, 0.5 * tol, depth - 1) + recurse(
            x1, x2, f1, fr, f2, right, 0.5 * tol, depth - 1
        )

    f0 = np.asarray(f(a), dtype=float)
    f2 = np.asarray(f(b), dtype=float)
    f1 = np.asarray(f(0.5 * (a + b)), dtype=float)
    whole = simpson(f0, f1, f2, b - a)
    return recurse(a, b, f0, f1, f2, whole, abs_tol, max_depth)
