"""Pseudo-spectral periodic-box simulator for Hartree / power NLS dynamics.

Provides spectral grids and norms, potentials and admissibility checks,
matrix-free Hamiltonians, split-step propagators (linear, time-dependent
linear, Hartree, power NLS), functional calculus with a propagation speed
bound, energy-localized initial-data construction, light-cone and decay
observables, and a scenario harness with a CLI.
"""

__version__ = "0.1.0"
