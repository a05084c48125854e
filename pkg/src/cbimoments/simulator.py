"""Monte Carlo simulation of the jump SDE with coupled truncation levels.

Paths are generated by an exact-event scheme: immigration jumps form a
compound Poisson stream, branching-jump candidates for type j arrive at a
dominating rate proportional to the current largest type-j component
across levels and are thinned by a uniform mark against each level's own
left-limit state, and the continuous part moves by Euler-Maruyama between
partition points with the state clamped at zero. All truncation levels of
one path share the Brownian increments and the full candidate event
stream; a level with cutoff K merely discards jumps of norm >= K, so the
levels are coupled by common random numbers and pathwise comparable.

Because every jump (of any size) is applied as an uncompensated event, the
Euler drift uses the linear drift with all jump means removed; this equals
the big-jump-uncompensated drift matrix whenever no branching atom has
norm below one, and otherwise subtracts the small-jump means that the
compensated small-jump integral would have cancelled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .measures import mean_vector, total_mass
from .params import AdmissibleParams, derive
from .tensors import format_float, multi_indices

__all__ = [
    "SimConfig",
    "JumpEvent",
    "SimPath",
    "SimEnsemble",
    "EmpiricalMoments",
    "UnstableStepError",
    "simulate_path",
    "simulate_coupled",
    "simulate_ensemble",
    "estimate_moments",
    "write_empirical_csv",
]


class UnstableStepError(RuntimeError):
    """A single Euler drift increment exceeded 10 * (1 + ||X||)."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; immutable and reusable across runs."""

    T: float
    h: float
    n_paths: int
    seed: int
    x0: np.ndarray
    K_levels: tuple = (np.inf,)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "K_levels", tuple(float(K) for K in self.K_levels))
        if not (self.T > 0.0 and self.h > 0.0):
            raise ValueError("T and h must be positive")
        steps = round(self.T / self.h)
        if steps < 1 or abs(steps * self.h - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not an integral multiple of h={self.h}")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if np.any(x0 < 0.0):
            raise ValueError("x0 must be componentwise nonnegative")
        Ks = self.K_levels
        if not Ks:
            raise ValueError("K_levels must be nonempty")
        if any(not K > 1.0 for K in Ks) or any(a >= b for a, b in zip(Ks, Ks[1:])):
            raise ValueError("K_levels must be strictly increasing with every level in (1, inf]")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.h)


@dataclass(frozen=True)
class JumpEvent:
    """One applied (or discarded) jump of a simulated path."""

    time: float
    kind: str             # "immigration" or "branching"
    type_index: int | None
    z: np.ndarray
    u: float | None       # thinning mark, branching only
    accepted: tuple       # one flag per truncation level


@dataclass(frozen=True)
class SimPath:
    """Grid record of one path, per truncation level, plus its jump log."""

    grid: np.ndarray
    K_levels: tuple
    level_values: tuple   # one (n_nodes, d) array per level
    events: tuple

    @property
    def values(self) -> np.ndarray:
        """State of the least-truncated level (largest K)."""
        return self.level_values[-1]


@dataclass(frozen=True)
class SimEnsemble:
    """States of many independent paths at selected grid times."""

    config: SimConfig
    times: tuple
    K_levels: tuple
    states: np.ndarray    # (n_paths, n_levels, n_times, d)


def _kernel_inputs(p: AdmissibleParams, K_levels):
    dp = derive(p)
    d = p.d
    drift = np.array(dp.mean_drift)
    for j in range(d):
        drift[:, j] -= mean_vector(p.mu[j])  # every jump is applied uncompensated
    nu = p.nu
    nu_z = np.ascontiguousarray(nu.z) if nu.n_atoms else np.zeros((0, d))
    nu_cw = np.cumsum(nu.w) if nu.n_atoms else np.zeros(0)
    nu_n2 = nu.norms_sq if nu.n_atoms else np.zeros(0)
    mu_z_list, mu_w_list, mu_off = [], [], [0]
    for m in p.mu:
        mu_z_list.append(m.z)
        mu_w_list.append(m.w)
        mu_off.append(mu_off[-1] + m.n_atoms)
    mu_z = np.ascontiguousarray(np.concatenate(mu_z_list, axis=0)) if mu_off[-1] else np.zeros((0, d))
    mu_w = np.concatenate(mu_w_list) if mu_off[-1] else np.zeros(0)
    mu_cw = np.cumsum(mu_w)
    mu_n2 = np.einsum("ad,ad->a", mu_z, mu_z) if mu_off[-1] else np.zeros(0)
    mu_rate = np.array([total_mass(m) for m in p.mu])
    K2 = np.array([K * K for K in K_levels])
    return dict(
        x0=None,
        beta=np.ascontiguousarray(p.beta),
        drift=np.ascontiguousarray(drift),
        c=np.ascontiguousarray(p.c),
        nu_z=nu_z,
        nu_cw=nu_cw,
        nu_n2=nu_n2,
        mu_z=mu_z,
        mu_cw=mu_cw,
        mu_n2=mu_n2,
        mu_off=np.asarray(mu_off, dtype=np.int64),
        mu_rate=mu_rate,
        K2=K2,
    )


def _dummy_log(d, L):
    return (
        np.zeros(0),
        np.zeros(0, dtype=np.int64),
        np.zeros((0, d)),
        np.zeros(0),
        np.zeros((0, L), dtype=np.uint8),
    )


def _run_chunk(p, cfg, path_lo, n_paths, rec_mask, out, log_cap=0, log_arrays=None):
    inputs = _kernel_inputs(p, cfg.K_levels)
    d = p.d
    L = len(cfg.K_levels)
    if cfg.x0.shape != (d,):
        raise ValueError(f"x0 has dimension {cfg.x0.shape[0]}, parameters have {d}")
    if log_arrays is None:
        log_arrays = _dummy_log(d, L)
    err = np.zeros(1, dtype=np.int64)
    n_log = kernels.run_paths(
        np.uint64(cfg.seed),
        np.int64(path_lo),
        np.int64(n_paths),
        np.ascontiguousarray(cfg.x0),
        inputs["beta"],
        inputs["drift"],
        inputs["c"],
        inputs["nu_z"],
        inputs["nu_cw"],
        inputs["nu_n2"],
        inputs["mu_z"],
        inputs["mu_cw"],
        inputs["mu_n2"],
        inputs["mu_off"],
        inputs["mu_rate"],
        inputs["K2"],
        float(cfg.h),
        np.int64(cfg.n_steps),
        rec_mask,
        out,
        np.int64(log_cap),
        *log_arrays,
        err,
    )
    if err[0] == kernels.ERR_UNSTABLE:
        raise UnstableStepError("Euler drift increment exceeded 10 * (1 + ||X||); reduce the step h")
    return n_log, err[0]


def simulate_path(p: AdmissibleParams, cfg: SimConfig, path_index: int = 0) -> SimPath:
    """One path, recorded at every grid node, with its full jump log."""
    d = p.d
    L = len(cfg.K_levels)
    n_nodes = cfg.n_steps + 1
    rec_mask = np.ones(n_nodes, dtype=np.uint8)
    out = np.zeros((1, L, n_nodes, d))
    cap = 4096
    while True:
        log_arrays = (
            np.zeros(cap),
            np.zeros(cap, dtype=np.int64),
            np.zeros((cap, d)),
            np.zeros(cap),
            np.zeros((cap, L), dtype=np.uint8),
        )
        n_log, flag = _run_chunk(p, cfg, path_index, 1, rec_mask, out, cap, log_arrays)
        if flag != kernels.ERR_LOG_FULL:
            break
        cap *= 4
    log_t, log_src, log_z, log_u, log_acc = log_arrays
    events = tuple(
        JumpEvent(
            time=float(log_t[e]),
            kind="immigration" if log_src[e] < 0 else "branching",
            type_index=None if log_src[e] < 0 else int(log_src[e]),
            z=log_z[e].copy(),
            u=None if log_src[e] < 0 else float(log_u[e]),
            accepted=tuple(bool(a) for a in log_acc[e]),
        )
        for e in range(n_log)
    )
    grid = np.linspace(0.0, cfg.T, n_nodes)
    return SimPath(
        grid=grid,
        K_levels=cfg.K_levels,
        level_values=tuple(out[0, l] for l in range(L)),
        events=events,
    )


def simulate_coupled(p: AdmissibleParams, cfg: SimConfig, path_index: int = 0) -> SimPath:
    """Alias of :func:`simulate_path` documenting the multi-level contract.

    All levels in ``cfg.K_levels`` are driven by one shared realization of
    the Brownian increments and of the full candidate jump stream; level K
    discards jumps with ||z|| >= K and thins branching candidates against
    its own state.
    """
    return simulate_path(p, cfg, path_index)


def _record_nodes(cfg: SimConfig, times) -> tuple:
    nodes = []
    for t in times:
        m = round(float(t) / cfg.h)
        if not (0 <= m <= cfg.n_steps) or abs(m * cfg.h - t) > 1e-9 * max(1.0, cfg.T):
            raise ValueError(f"time {t} is not a node of the simulation grid")
        nodes.append(m)
    if sorted(nodes) != nodes or len(set(nodes)) != len(nodes):
        raise ValueError("record times must be strictly increasing grid nodes")
    return tuple(nodes)


def simulate_ensemble(p: AdmissibleParams, cfg: SimConfig, times=None, threads: int = 1) -> SimEnsemble:
    """Independent paths recorded at the requested grid times.

    Paths are independent streams keyed by (seed, path index), so the
    result is bit-identical for any thread count or chunking.
    """
    times = (cfg.T,) if times is None else tuple(float(t) for t in times)
    nodes = _record_nodes(cfg, times)
    rec_mask = np.zeros(cfg.n_steps + 1, dtype=np.uint8)
    for m in nodes:
        rec_mask[m] = 1
    L = len(cfg.K_levels)
    out = np.zeros((cfg.n_paths, L, len(nodes), p.d))
    threads = max(1, int(threads))
    if threads == 1 or cfg.n_paths < 2 * threads:
        _run_chunk(p, cfg, 0, cfg.n_paths, rec_mask, out)
    else:
        _run_chunk(p, cfg, 0, 0, rec_mask, out)  # compile before fanning out
        bounds = np.linspace(0, cfg.n_paths, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futures = [
                ex.submit(_run_chunk, p, cfg, int(lo), int(hi - lo), rec_mask, out[lo:hi])
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for f in futures:
                f.result()
    return SimEnsemble(config=cfg, times=times, K_levels=cfg.K_levels, states=out)


@dataclass(frozen=True)
class EmpiricalMoments:
    """Empirical raw/central moment tensors with jackknife standard errors.

    Entries are keyed by (time index, sorted multi-index); values are
    (estimate, stderr) pairs. Standard errors are delete-group jackknife
    over paths (the groups are contiguous path blocks), which for the raw
    entries coincides with the classical standard error of the mean.
    """

    times: tuple
    dim: int
    order: int
    n_paths: int
    raw: dict = field(repr=False)
    central: dict = field(repr=False)

    def estimate(self, kind: str, t_index: int, idx) -> float:
        return getattr(self, kind)[(t_index, tuple(idx))][0]

    def stderr(self, kind: str, t_index: int, idx) -> float:
        return getattr(self, kind)[(t_index, tuple(idx))][1]

    def rows(self, kind: str):
        """Yield (t, order, index, estimate, stderr) sorted by (t, order, index)."""
        table = getattr(self, kind)
        for ti, t in enumerate(self.times):
            for k in range(1, self.order + 1):
                for idx in multi_indices(self.dim, k):
                    est, se = table[(ti, idx)]
                    yield t, k, idx, est, se


def _jackknife(prod: np.ndarray, bounds: np.ndarray) -> tuple:
    """Mean of per-path values plus delete-block jackknife standard error."""
    n = prod.shape[0]
    total = float(prod.sum())
    est = total / n
    G = bounds.size - 1
    thetas = np.empty(G)
    for g in range(G):
        lo, hi = bounds[g], bounds[g + 1]
        ng = hi - lo
        thetas[g] = (total - float(prod[lo:hi].sum())) / (n - ng)
    se = float(np.sqrt((G - 1) / G * np.sum((thetas - thetas.mean()) ** 2)))
    return est, se


def estimate_moments(
    ensemble: SimEnsemble, q: int, times=None, level: int = -1, groups: int = 100
) -> EmpiricalMoments:
    """Empirical mixed raw and central moments up to order q with errors.

    ``level`` selects the truncation level (default: the largest K).
    Central products recompute the leave-out mean inside each jackknife
    replicate, so nonlinearity of the central estimator is accounted for.
    """
    n = ensemble.states.shape[0]
    if n < 100:
        raise ValueError("need at least 100 paths for moment estimation")
    if times is None:
        t_indices = range(len(ensemble.times))
    else:
        t_indices = [ensemble.times.index(float(t)) for t in times]
    d = ensemble.states.shape[3]
    G = min(groups, n)
    bounds = np.linspace(0, n, G + 1).astype(int)
    raw: dict = {}
    central: dict = {}
    for ti in t_indices:
        x = ensemble.states[:, level, ti, :]  # (n, d)
        mean_full = x.mean(axis=0)
        y = x - mean_full
        sum_x = x.sum(axis=0)
        # leave-out mean shift per group: x - mean_g = y + (mean_full - mean_g)
        shifts = np.empty((G, d))
        for g in range(G):
            lo, hi = bounds[g], bounds[g + 1]
            mean_g = (sum_x - x[lo:hi].sum(axis=0)) / (n - (hi - lo))
            shifts[g] = mean_full - mean_g
        for k in range(1, q + 1):
            for idx in multi_indices(d, k):
                prod = np.ones(n)
                for i in idx:
                    prod = prod * x[:, i]
                raw[(ti, idx)] = _jackknife(prod, bounds)
                cprod = np.ones(n)
                for i in idx:
                    cprod = cprod * y[:, i]
                est_c = float(cprod.mean())
                thetas = np.empty(G)
                for g in range(G):
                    lo, hi = bounds[g], bounds[g + 1]
                    pg = np.ones(n)
                    for i in idx:
                        pg = pg * (y[:, i] + shifts[g, i])
                    thetas[g] = (float(pg.sum()) - float(pg[lo:hi].sum())) / (n - (hi - lo))
                se_c = float(np.sqrt((G - 1) / G * np.sum((thetas - thetas.mean()) ** 2)))
                central[(ti, idx)] = (est_c, se_c)
    return EmpiricalMoments(
        times=tuple(ensemble.times[ti] for ti in t_indices),
        dim=d,
        order=q,
        n_paths=n,
        raw=raw,
        central=central,
    )


def write_empirical_csv(emp: EmpiricalMoments, kind: str, fileobj) -> None:
    """Write ``t,order,index,estimate,stderr`` rows for one kind of tensor."""
    fileobj.write("t,order,index,estimate,stderr\n")
    for t, k, idx, est, se in emp.rows(kind):
        label = ".".join(str(i + 1) for i in idx)
        fileobj.write(f"{format_float(t)},{k},{label},{format_float(est)},{format_float(se)}\n")
