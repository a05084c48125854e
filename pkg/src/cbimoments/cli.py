"""Command-line front end: ``cbi <command> --config <file> [options]``.

Commands
--------
validate   check the parameter file, report admissibility violations and
           the tail-moment constants; exit 0/1.
moments    write raw and/or central moment trajectories as CSV.
simulate   run the Monte Carlo ensemble, write empirical tensors with
           standard errors as CSV.
compare    recursion vs Monte Carlo vs Laplace-transform table with a
           pass/fail band per entry; exit 2 on any failure.
degree     polynomial-degree certificate of the moments in the initial
           value.

Exit codes: 0 success, 1 validation/config failure, 2 comparison failure,
3 internal error. Given the same config and seed the outputs are byte
identical; floats are printed as shortest round-trip decimals.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .affine import moment_from_laplace
from .moments import (
    central_trajectory,
    degree_check,
    raw_trajectory,
)
from .params import ValidationError, check_moment_condition, derive, load_params, params_to_dict
from .simulator import SimConfig, estimate_moments, simulate_ensemble, write_empirical_csv
from .tensors import InitialLaw, format_float, multi_indices, write_moments_csv

__all__ = ["main", "ConfigError"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_COMPARISON = 2
EXIT_INTERNAL = 3


class ConfigError(ValueError):
    """Bad run configuration; ``pointer`` locates the offending field."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


def _require(cfg: dict, pointer: str, key: str, types=None):
    if key not in cfg:
        raise ConfigError(f"{pointer}/{key}", "missing required field")
    value = cfg[key]
    if types is not None and not isinstance(value, types):
        raise ConfigError(f"{pointer}/{key}", f"expected {types}, got {type(value).__name__}")
    return value


def _load_run_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError("/", f"config file {path!r} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("/", "config root must be an object")
    return cfg


def _load_params_entry(cfg: dict, config_path: str):
    entry = _require(cfg, "", "params")
    if isinstance(entry, dict):
        return load_params(entry)
    path = Path(entry)
    if not path.is_absolute():
        path = Path(config_path).parent / path
    if not path.exists():
        raise ConfigError("/params", f"parameter file {str(path)!r} does not exist")
    return load_params(json.loads(path.read_text()))


def _law_from_config(block: dict, pointer: str, d: int) -> InitialLaw:
    kind = _require(block, pointer, "kind", str)
    if kind == "deterministic":
        x0 = np.asarray(_require(block, pointer, "x0", list), dtype=float)
        if x0.shape != (d,):
            raise ConfigError(f"{pointer}/x0", f"expected length {d}")
        return InitialLaw.deterministic(x0)
    if kind == "mixture":
        comps = _require(block, pointer, "components", list)
        return InitialLaw.mixture([(np.asarray(c["x0"], dtype=float), float(c["p"])) for c in comps])
    raise ConfigError(f"{pointer}/kind", f"unknown law kind {kind!r}")


def _sim_config(block: dict, pointer: str, seed_override) -> SimConfig:
    seed = seed_override if seed_override is not None else _require(block, pointer, "seed", (int,))
    levels = block.get("K_levels", [float("inf")])
    return SimConfig(
        T=float(_require(block, pointer, "T", (int, float))),
        h=float(_require(block, pointer, "h", (int, float))),
        n_paths=int(_require(block, pointer, "n_paths", int)),
        seed=int(seed),
        x0=np.asarray(_require(block, pointer, "x0", list), dtype=float),
        K_levels=tuple(float(K) for K in levels),
    )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_validate(cfg: dict, args, out_dir: Path) -> int:
    try:
        p = _load_params_entry(cfg, args.config)
    except ValidationError as exc:
        report = {"valid": False, "violations": [str(v) for v in exc.violations]}
        _write_json(out_dir / "validate.json", report)
        print("INVALID parameter set:")
        for v in exc.violations:
            print(f"  {v}")
        return EXIT_VALIDATION
    q = int(cfg.get("validate", {}).get("q", 4))
    report = check_moment_condition(p, q)
    dp = derive(p)
    payload = {
        "valid": True,
        "params": params_to_dict(p),
        "moment_condition": report.as_dict(),
        "mean_drift": dp.mean_drift.tolist(),
        "mean_immigration": dp.mean_immigration.tolist(),
        "sde_drift": dp.sde_drift.tolist(),
    }
    _write_json(out_dir / "validate.json", payload)
    print(f"valid parameter set: d={p.d}; order-{q} tail constants "
          f"nu={format_float(report.nu_tail)} mu={[format_float(v) for v in report.mu_tail]}")
    return EXIT_OK


def cmd_moments(cfg: dict, args, out_dir: Path) -> int:
    p = _load_params_entry(cfg, args.config)
    block = _require(cfg, "", "moments", dict)
    q = int(_require(block, "/moments", "q", int))
    T = float(_require(block, "/moments", "T", (int, float)))
    M = int(_require(block, "/moments", "M", int))
    law = _law_from_config(_require(block, "/moments", "law", dict), "/moments/law", p.d)
    kinds = block.get("kinds", ["raw", "central"])
    for kind in kinds:
        if kind == "raw":
            traj = raw_trajectory(p, law, q, T, M)
        elif kind == "central":
            traj = central_trajectory(p, law, q, T, M)
        else:
            raise ConfigError("/moments/kinds", f"unknown kind {kind!r}")
        with open(out_dir / f"moments_{kind}.csv", "w") as fh:
            write_moments_csv(traj, fh)
        print(f"wrote {out_dir / f'moments_{kind}.csv'} ({q} orders, {M + 1} nodes)")
    return EXIT_OK


def cmd_simulate(cfg: dict, args, out_dir: Path) -> int:
    p = _load_params_entry(cfg, args.config)
    block = _require(cfg, "", "simulate", dict)
    sim_cfg = _sim_config(block, "/simulate", args.seed)
    q = int(block.get("q", 2))
    times = block.get("times", [sim_cfg.T])
    ens = simulate_ensemble(p, sim_cfg, times=times, threads=args.threads)
    emp = estimate_moments(ens, q)
    for kind in ("raw", "central"):
        with open(out_dir / f"simulate_{kind}.csv", "w") as fh:
            write_empirical_csv(emp, kind, fh)
    print(f"simulated {sim_cfg.n_paths} paths ({len(sim_cfg.K_levels)} levels); wrote simulate_raw.csv, simulate_central.csv")
    return EXIT_OK


def cmd_compare(cfg: dict, args, out_dir: Path) -> int:
    p = _load_params_entry(cfg, args.config)
    block = _require(cfg, "", "compare", dict)
    q = int(_require(block, "/compare", "q", int))
    T = float(_require(block, "/compare", "T", (int, float)))
    M = int(_require(block, "/compare", "M", int))
    law = _law_from_config(_require(block, "/compare", "law", dict), "/compare/law", p.d)
    sim_cfg = _sim_config(_require(block, "/compare", "sim", dict), "/compare/sim", args.seed)
    policy = block.get("tolerance_policy", {})
    rel_tol = float(policy.get("rel_tol", 0.02))
    se_mult = float(policy.get("se_mult", 4.0))
    riccati_steps = cfg.get("riccati", {}).get("steps")

    raw = raw_trajectory(p, law, q, T, M)
    cent = central_trajectory(p, law, q, T, M) if law.is_degenerate else None
    ens = simulate_ensemble(p, sim_cfg, times=[T], threads=args.threads)
    emp = estimate_moments(ens, q)

    rows = []
    failures = 0

    def add_row(source, kind, k, idx, reference, value, se):
        nonlocal failures
        band = max(se_mult * se, rel_tol * abs(reference))
        ok = abs(value - reference) <= band
        failures += 0 if ok else 1
        rows.append(
            {
                "source": source,
                "kind": kind,
                "t": T,
                "order": k,
                "index": [i + 1 for i in idx],
                "recursion": reference,
                "value": value,
                "stderr": se,
                "band": band,
                "pass": bool(ok),
            }
        )

    for k in range(1, q + 1):
        for idx in multi_indices(p.d, k):
            ref = raw.value(M, k, idx)
            est, se = emp.raw[(0, idx)]
            add_row("monte_carlo", "raw", k, idx, ref, est, se)
            if cent is not None and k >= 2:
                ref_c = cent.value(M, k, idx)
                est_c, se_c = emp.central[(0, idx)]
                add_row("monte_carlo", "central", k, idx, ref_c, est_c, se_c)
    if law.is_degenerate:
        x0 = law.points[0]
        for j in range(p.d):
            for order in (1, 2):
                if order > q:
                    continue
                ref = raw.value(M, order, (j,) * order)
                val = moment_from_laplace(p, x0, T, j, order, steps=riccati_steps)
                add_row("laplace", "raw", order, (j,) * order, ref, val, 0.0)

    payload = {
        "tolerance_policy": {"rel_tol": rel_tol, "se_mult": se_mult},
        "n_paths": sim_cfg.n_paths,
        "rows": rows,
        "failures": failures,
    }
    _write_json(out_dir / "compare.json", payload)
    status = "PASS" if failures == 0 else f"FAIL ({failures} entries)"
    print(f"compare: {len(rows)} entries, {status}; report in {out_dir / 'compare.json'}")
    return EXIT_OK if failures == 0 else EXIT_COMPARISON


def cmd_degree(cfg: dict, args, out_dir: Path) -> int:
    p = _load_params_entry(cfg, args.config)
    block = _require(cfg, "", "degree", dict)
    report = degree_check(
        p,
        kind=_require(block, "/degree", "kind", str),
        k=int(_require(block, "/degree", "k", int)),
        T=float(_require(block, "/degree", "T", (int, float))),
        M=int(_require(block, "/degree", "M", int)),
        j=int(block.get("j", 1)) - 1,
        coord=int(block.get("coord", 1)) - 1,
        x0_base=block.get("x0_base"),
        x0_step=float(block.get("x0_step", 0.5)),
        tol=float(block.get("tol", 1e-6)),
    )
    payload = {
        "kind": report.kind,
        "k": report.k,
        "degree_bound": report.degree_bound,
        "x0_values": list(report.x0_values),
        "moment_values": list(report.moment_values),
        "top_difference": report.top_difference,
        "scale": report.scale,
        "tol": report.tol,
        "passed": report.passed,
    }
    _write_json(out_dir / "degree.json", payload)
    print(
        f"degree check {report.kind} k={report.k}: top difference {format_float(report.top_difference)} "
        f"vs tol*scale {format_float(report.tol * report.scale)} -> {'PASS' if report.passed else 'FAIL'}"
    )
    return EXIT_OK if report.passed else EXIT_COMPARISON


_COMMANDS = {
    "validate": cmd_validate,
    "moments": cmd_moments,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "degree": cmd_degree,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cbi", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for the simulator")
    args = parser.parse_args(argv)
    try:
        cfg = _load_run_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, args, out_dir)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report and map to the internal-error code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
