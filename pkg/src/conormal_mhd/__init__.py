"""Spectral solver and conormal-energy diagnostics for anisotropic MHD in a slab.

Modules:
    spectral     grids, transforms, derivatives, projection and norms
    dynamics     the time integrator, pressure recovery and L2 balance
    conormal     conormal derivatives, the energy/dissipation ledger and probes
    experiments  initial data and the decay, uniform-bound and limit studies
    io, cli      checkpoints, CSV/JSON reports and the command line
"""

from .conormal import ConormalConfig, EnergyLedger, PhiChoice, ledger
from .dynamics import SolverConfig, State, evolve, step
from .experiments import InitialDataSpec, Spectrum, gen_initial_data
from .spectral import GridSpec, plan_grid

__all__ = [
    "ConormalConfig",
    "EnergyLedger",
    "GridSpec",
    "InitialDataSpec",
    "PhiChoice",
    "SolverConfig",
    "Spectrum",
    "State",
    "evolve",
    "gen_initial_data",
    "ledger",
    "plan_grid",
    "step",
]
