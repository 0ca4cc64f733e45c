"""Stochastic wavefunction collapse driven by a localization functional.

The state evolves unitarily between collapse events that arrive at rate
``gamma0``.  At each event a partition of unity is chosen variationally,
maximizing a localization functional subject to an energy/entropy
balance, and one branch is drawn with its Born weight.
"""
from .errors import ConfigurationError, NumericalFailure
from .qstate import Grid, PhysicalConstants, WaveFunction, make_gaussian, make_superposition
from .partition import Partition, PartitionParams, build, refine
from .propagator import Potential, StepperConfig, evolve
from .thermo import ThermoRecord, thermo_record
from .solver import CollapseProposal, SolverConfig, break_tie, sample_outcome, solve
from .config import RunConfig, parse_config
from .trajectory import run_ensemble, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "NumericalFailure", "Grid", "PhysicalConstants", "WaveFunction",
    "make_gaussian", "make_superposition", "Partition", "PartitionParams", "build", "refine",
    "Potential", "StepperConfig", "evolve", "ThermoRecord", "thermo_record", "CollapseProposal",
    "SolverConfig", "break_tie", "sample_outcome", "solve", "RunConfig", "parse_config",
    "run_ensemble", "run_trajectory", "__version__",
]
