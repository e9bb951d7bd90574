"""Kinetic to fluid limit lab: linearized collision operators, the acoustic
system, an asymptotic-preserving kinetic solver and energy diagnostics."""
from ._backend import BACKEND
from .acoustic_solver import AcousticState, acoustic_energy, propagate, symbol_eigen
from .collision_ops import (
    AssembledL,
    CoercivityReport,
    KernelSpec,
    assemble_L,
    coercivity_delta,
    collision_frequency,
    gamma_bilinear,
    landau_sigma,
)
from .diagnostics import (
    EnergyReport,
    SweepResult,
    convergence_sweep,
    dissipation_rate,
    energy_monitor,
    instant_energy,
)
from .hydrodynamics import (
    HydroState,
    MomentBasis,
    global_conservation_residual,
    local_conservation_residual,
    macroscopic_coefficients,
    project_13moment,
    project_P,
)
from .kinetic_solver import PerturbationField, SolverConfig, imex_step, run_simulation, well_prepared_data
from .torus import Torus
from .velocity_space import VelocityGrid, WeightFn, build_grid, maxwellian, weighted_inner

__version__ = "0.1.0"
