"""Regularized incompressible Navier-Stokes-Vlasov simulator with a verification harness."""

from .engine import EnergyLedger, SimConfig, Trajectory, energy_ledger_entry, run, step
from .exceptions import CFLError, ConfigurationError, GridMismatchError, SolverError, StageError
from .fields import Grid2D, ScalarField, VectorField
from .initial_data import InitialDataSpec, build_initial_state, hodge_project, make_initial_spec, regularize_density
from .kinetic import PhaseDistribution, VelocityGrid
from .state import SimState

__version__ = "0.1.0"
