"""Compiled event-driven kernel for the jump SDE, one RNG stream per path.

Randomness is a counter-based stream keyed by (seed, path_index): the n-th
64-bit draw is a fixed finalizer applied to ``key + n * gamma`` (the
SplitMix64 scheme), so a path is a pure function of its key and the draws
are independent of scheduling, chunking or thread count.

The scheme is jump-adapted. Between partition points (grid nodes and exact
event times) the discretized state is constant; at each partition point
the Euler drift/diffusion increment for the elapsed interval is applied
with left-endpoint coefficients, then the jump (if any). Branching-jump
candidates for type j arrive at rate mass(mu_j) * U_j, where the
dominating bound U_j is refreshed at every partition point as the max of
the type-j component across truncation levels; since the state cannot
change between partition points, the bound is never outgrown and the
thinning test ``u <= X_{j,left}`` is exact for the discretized dynamics.
A level with truncation K discards any jump of squared norm >= K^2.

Draw order per partition step is fixed: event clock, source selector,
atom selector, thinning mark (branching only), then one normal per
diffusive component. Box-Muller consumes two uniforms per normal with no
cached spare.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["run_paths", "ERR_OK", "ERR_UNSTABLE", "ERR_LOG_FULL"]

ERR_OK = 0
ERR_UNSTABLE = 1
ERR_LOG_FULL = 2

_U64 = np.uint64
_GAMMA = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _stream_key(seed, path_index):
    return _mix(_U64(seed) + _mix(_U64(path_index) + _GAMMA))


@njit(cache=True, inline="always")
def _next_u64(key, ctr):
    ctr[0] += _U64(1)
    return _mix(key + ctr[0] * _GAMMA)


@njit(cache=True, inline="always")
def _uniform(key, ctr):
    # strictly inside (0, 1): safe under log()
    return (np.float64(_next_u64(key, ctr) >> _U64(11)) + 0.5) * _INV53


@njit(cache=True, inline="always")
def _exponential(key, ctr):
    return -np.log(_uniform(key, ctr))


@njit(cache=True, inline="always")
def _normal(key, ctr):
    u1 = _uniform(key, ctr)
    u2 = _uniform(key, ctr)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@njit(cache=True, inline="always")
def _pick_atom(cw, lo, hi, target):
    """First index a in [lo, hi) with cumulative weight cw[a] >= target."""
    for a in range(lo, hi):
        if target <= cw[a]:
            return a
    return hi - 1


@njit(cache=True, nogil=True)
def run_paths(
    seed,
    path_lo,
    n_paths,
    x0,
    beta,
    drift,
    c,
    nu_z,
    nu_cw,
    nu_n2,
    mu_z,
    mu_cw,
    mu_n2,
    mu_off,
    mu_rate,
    K2,
    h,
    n_steps,
    rec_mask,
    out,
    log_cap,
    log_t,
    log_src,
    log_z,
    log_u,
    log_acc,
    err_flag,
):
    """Simulate ``n_paths`` coupled paths; fill ``out[(path, level, rec, dim)]``.

    ``drift`` is the effective linear drift with ALL jump means removed (the
    kernel applies every jump as an uncompensated event). Returns the number
    of logged events (logging active when ``log_cap > 0``; intended for
    single-path runs).
    """
    d = x0.shape[0]
    L = K2.shape[0]
    nu_total = nu_cw[-1] if nu_cw.shape[0] > 0 else 0.0
    n_log = 0
    ubound = np.empty(d)
    X = np.empty((L, d))
    incr = np.empty((L, d))
    dw = np.empty(d)
    accept = np.empty(L, dtype=np.uint8)

    for pidx in range(n_paths):
        key = _stream_key(seed, path_lo + pidx)
        ctr = np.zeros(1, dtype=np.uint64)
        for l in range(L):
            for i in range(d):
                X[l, i] = x0[i]
        tau = 0.0
        node = 1
        rec_i = 0
        if rec_mask[0] != 0:
            for l in range(L):
                for i in range(d):
                    out[pidx, l, rec_i, i] = X[l, i]
            rec_i += 1

        while node <= n_steps:
            t_node = h * node
            # candidate rates from the current (constant until next partition point) state
            rate = nu_total
            for j in range(d):
                uj = X[0, j]
                for l in range(1, L):
                    if X[l, j] > uj:
                        uj = X[l, j]
                ubound[j] = uj
                rate += mu_rate[j] * uj
            if rate > 0.0:
                t_event = tau + _exponential(key, ctr) / rate
            else:
                t_event = np.inf
            is_event = t_event < t_node
            t_new = t_event if is_event else t_node
            delta = t_new - tau

            src = np.int64(-2)
            atom = np.int64(-1)
            mark = np.nan
            if is_event:
                r = _uniform(key, ctr) * rate
                if r < nu_total:
                    src = np.int64(-1)
                    atom = _pick_atom(nu_cw, 0, nu_cw.shape[0], _uniform(key, ctr) * nu_total)
                    for l in range(L):
                        accept[l] = 1 if nu_n2[atom] < K2[l] else 0
                else:
                    acc_rate = nu_total
                    j = d - 1
                    for jj in range(d):
                        contrib = mu_rate[jj] * ubound[jj]
                        if r < acc_rate + contrib:
                            j = jj
                            break
                        acc_rate += contrib
                    src = np.int64(j)
                    lo = mu_off[j]
                    base = mu_cw[lo - 1] if lo > 0 else 0.0
                    atom = _pick_atom(mu_cw, lo, mu_off[j + 1], base + _uniform(key, ctr) * mu_rate[j])
                    mark = _uniform(key, ctr) * ubound[j]
                    for l in range(L):
                        # left-limit thinning: state unchanged since the bound was set
                        accept[l] = 1 if (mu_n2[atom] < K2[l] and mark <= X[l, j]) else 0

            if delta > 0.0:
                for i in range(d):
                    dw[i] = np.sqrt(delta) * _normal(key, ctr) if c[i] > 0.0 else 0.0
                for l in range(L):
                    xn2 = 0.0
                    for i in range(d):
                        xn2 += X[l, i] * X[l, i]
                    bound = 10.0 * (1.0 + np.sqrt(xn2))
                    for i in range(d):
                        dr = beta[i]
                        for j in range(d):
                            dr += drift[i, j] * X[l, j]
                        dr *= delta
                        if np.abs(dr) > bound:
                            err_flag[0] = ERR_UNSTABLE
                            return n_log
                        xi = X[l, i] + dr
                        if c[i] > 0.0:
                            base = X[l, i] if X[l, i] > 0.0 else 0.0
                            xi += np.sqrt(2.0 * c[i] * base) * dw[i]
                        incr[l, i] = xi if xi > 0.0 else 0.0
                for l in range(L):
                    for i in range(d):
                        X[l, i] = incr[l, i]
            tau = t_new

            if is_event:
                if src == -1:
                    for l in range(L):
                        if accept[l] != 0:
                            for i in range(d):
                                X[l, i] += nu_z[atom, i]
                else:
                    for l in range(L):
                        if accept[l] != 0:
                            for i in range(d):
                                X[l, i] += mu_z[atom, i]
                if log_cap > 0:
                    if n_log >= log_cap:
                        err_flag[0] = ERR_LOG_FULL
                    else:
                        log_t[n_log] = tau
                        log_src[n_log] = src
                        for i in range(d):
                            log_z[n_log, i] = nu_z[atom, i] if src == -1 else mu_z[atom, i]
                        log_u[n_log] = mark
                        for l in range(L):
                            log_acc[n_log, l] = accept[l]
                        n_log += 1
            else:
                if rec_mask[node] != 0:
                    for l in range(L):
                        for i in range(d):
                            out[pidx, l, rec_i, i] = X[l, i]
                    rec_i += 1
                node += 1
    return n_log
