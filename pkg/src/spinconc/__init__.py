"""Numerical laboratory for coupling-matrix concentration bounds on finite spin systems.

The package computes martingale-difference decompositions, coupling matrices and
their envelope / moment summaries for exactly enumerable models, evaluates the
associated tail bounds, and checks them against exact tails (small volumes) or
Monte Carlo tails (Gibbs samplers on larger volumes).
"""

from spinconc.errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DegenerateConditioningError,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "ConvergenceError",
    "DegenerateConditioningError",
]

__version__ = "0.1.0"
