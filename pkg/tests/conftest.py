"""Shared helpers: randomized admissible instances at desk scale.

The generators keep ``||mean_drift|| * T`` at or below roughly two so that
grid quadrature, the exponent ODE and Monte Carlo all operate in their
analyzed regimes; atom norms go up to 5 and every feature (diffusion,
branching jumps, immigration jumps) appears with positive probability.
"""

import numpy as np
import pytest

from cbimoments import AtomicMeasure, InitialLaw, validate
from cbimoments.params import derive


def random_measure(rng, d, max_atoms=3, norm_max=5.0, w_max=0.4):
    n = int(rng.integers(0, max_atoms + 1))
    atoms = []
    for _ in range(n):
        z = rng.uniform(0.05, 1.0, d)
        z *= rng.uniform(0.1, norm_max) / np.linalg.norm(z)
        atoms.append((z, rng.uniform(0.05, w_max)))
    return AtomicMeasure.from_atoms(atoms, d)


def random_instance(seed, d=None, max_atoms=3, norm_max=5.0, horizon=2.0):
    """One randomized admissible parameter set with tame mean growth."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4)) if d is None else d
    B = rng.uniform(0.0, 0.3, (d, d))
    B[np.diag_indices(d)] = rng.uniform(-0.8, 0.1, d)
    c = rng.uniform(0.0, 0.5, d) * (rng.random(d) < 0.7)
    beta = rng.uniform(0.0, 0.6, d)
    spec = {
        "d": d,
        "c": c.tolist(),
        "beta": beta.tolist(),
        "B": B.tolist(),
        "nu": _measure_dict(random_measure(rng, d, max_atoms, norm_max)),
        "mu": [_measure_dict(random_measure(rng, d, max_atoms, norm_max)) for _ in range(d)],
    }
    p = validate(spec)
    # rescale the linear part so ||mean_drift|| * horizon <= 2
    s = float(np.linalg.norm(derive(p).mean_drift, 2)) * horizon
    if s > 2.0:
        g = 2.0 / s
        spec["B"] = (g * B).tolist()
        spec["beta"] = (g * beta).tolist()
        for m in [spec["nu"], *spec["mu"]]:
            for a in m["atoms"]:
                a["w"] *= g
        p = validate(spec)
    return p


def random_law(seed, d, mixture_prob=0.0):
    rng = np.random.default_rng(seed + 777)
    if rng.random() < mixture_prob:
        pts = rng.uniform(0.2, 2.0, (2, d))
        w = rng.uniform(0.2, 0.8)
        return InitialLaw.mixture([(pts[0], w), (pts[1], 1.0 - w)])
    return InitialLaw.deterministic(rng.uniform(0.2, 2.0, d))


def dyadic_instance(seed, d=None, max_atoms=3):
    """Instance whose atoms, weights and B entries are exact multiples of 1/64.

    All derived-matrix sums then evaluate exactly in binary64, so
    algebraically equal groupings agree bit for bit.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4)) if d is None else d
    quant = 64.0

    def q(x):
        return np.round(np.asarray(x) * quant) / quant

    B = q(rng.uniform(0.0, 0.3, (d, d)))
    B[np.diag_indices(d)] = q(rng.uniform(-0.8, 0.1, d))

    def measure():
        atoms = []
        for _ in range(int(rng.integers(0, max_atoms + 1))):
            z = q(rng.uniform(0.0, 4.0, d))
            if np.all(z == 0.0):
                z[int(rng.integers(0, d))] = 0.5
            w = max(1.0 / quant, q(rng.uniform(0.05, 0.5)))
            atoms.append({"z": z.tolist(), "w": float(w)})
        return {"atoms": atoms}

    return validate(
        {
            "d": d,
            "c": q(rng.uniform(0.0, 0.5, d)).tolist(),
            "beta": q(rng.uniform(0.0, 0.6, d)).tolist(),
            "B": B.tolist(),
            "nu": measure(),
            "mu": [measure() for _ in range(d)],
        }
    )


def _measure_dict(m: AtomicMeasure):
    return {"atoms": [{"z": z.tolist(), "w": float(w)} for z, w in zip(m.z, m.w)]}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
