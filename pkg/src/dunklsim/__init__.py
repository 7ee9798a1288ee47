"""Simulation toolkit for chamber-valued singular-drift diffusions.

The state space is the Weyl chamber of a finite root system; the drift pulls
each root inner product away from zero like k(a)/<a, x>.  The package builds
and validates root systems (`rootsys`), evaluates the singular and truncated
drifts (`coeff`), solves the per-step implicit equations (`solver`), runs
chamber-preserving and truncated Euler-Maruyama schemes (`scheme`), binds
named processes (`models`), and estimates strong convergence rates, weighted
expectations, and moments with a reproducible Monte Carlo engine (`mc`).
A CLI (`dunklsim`) dispatches simulations and studies from JSON configs.
"""

from . import coeff, errors, invariants, mc, models, rootsys, scheme, solver

__all__ = ["coeff", "errors", "invariants", "mc", "models", "rootsys",
           "scheme", "solver"]
__version__ = "0.1.0"
