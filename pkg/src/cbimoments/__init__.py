"""Moments and simulation of multi-type branching processes with immigration.

Subpackages by theme:

* :mod:`cbimoments.params`     -- parameter tuple, validation, derived drifts,
  jump truncation.
* :mod:`cbimoments.measures`   -- finite atomic jump measures, exact integrals.
* :mod:`cbimoments.matfun`     -- matrix exponentials and propagator grids.
* :mod:`cbimoments.moments`    -- grid recursion for raw/central/mixed moments,
  closed-form mean and covariance, polynomial degree certificates.
* :mod:`cbimoments.affine`     -- exponent ODE / Laplace-transform oracle.
* :mod:`cbimoments.simulator`  -- exact-event jump-SDE Monte Carlo with
  coupled truncation levels and moment estimators.
* :mod:`cbimoments.cli`        -- the ``cbi`` command-line front end.
"""

from .measures import AtomicMeasure
from .params import AdmissibleParams, DerivedParams, derive, load_params, truncate, validate
from .tensors import InitialLaw, MomentTensor, MomentTrajectory

__all__ = [
    "AtomicMeasure",
    "AdmissibleParams",
    "DerivedParams",
    "derive",
    "validate",
    "truncate",
    "load_params",
    "InitialLaw",
    "MomentTensor",
    "MomentTrajectory",
]

__version__ = "0.1.0"
