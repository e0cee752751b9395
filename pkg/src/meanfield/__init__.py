"""Spectral simulation and verification tools for trapped mean-field bosons."""
from .core import (Grid, MarginalKernel, MemoryBudgetError, WaveFunction, make_grid,
                   make_state, product)
from .potentials import PotentialSpec, TrapSpec
from .propagators import Hamiltonian, SolverConfig
from .lens import LensFrame

__version__ = "0.1.0"
