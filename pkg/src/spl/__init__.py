"""Stochastic packing and display-ad allocation.

Modules
-------
instance  problem containers, generators, serialization
lp        revised simplex for packing LPs with one-option-per-agent groups
ptas      training-based primal-dual allocation and sample diagnostics
online    GREEDY / PD_AVG / PD_EXP / HYBRID with free disposal
fairness  shortest fair allocations and the fairness distance
bench     seeded experiments, convergence studies, lower-bound demo
cli       the ``spl`` command
"""

from ._accel import USE_NUMBA
from .instance import (
    DaInstance,
    InstanceError,
    PlpInstance,
    da_to_plp,
    generate_synthetic,
    normalize,
)
from .lp import solve_primal, solve_reduced_dual, verify_duality

__version__ = "0.1.0"

__all__ = [
    "DaInstance", "InstanceError", "PlpInstance", "USE_NUMBA", "__version__",
    "da_to_plp", "generate_synthetic", "normalize", "solve_primal",
    "solve_reduced_dual", "verify_duality",
]
