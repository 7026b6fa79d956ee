"""Free-surface Boussinesq convection in flattened slab coordinates."""
from .driver import Checkpoint, IterationRecord, PicardConfig, contraction_metrics, picard_sweep, run_picard
from .elliptic import (EllipticProblem, solve_a_poisson, solve_a_stokes, solve_heat_robin,
                       solve_stationary_benard)
from .errors import (ConfigError, ConstraintViolation, GeometryDegenerate, IncompatibleData, MissingTimeLayer,
                     SolverDiverged, StepRejected)
from .evolution import EvolutionState, energy_ledger, run_linear, step_linear
from .geometry import Grid, SurfaceField, flat_pack, geometry_pack
from .nonlinear import nonlinear_forcings

__all__ = ["Checkpoint", "IterationRecord", "PicardConfig", "contraction_metrics", "picard_sweep", "run_picard",
           "EllipticProblem", "solve_a_poisson", "solve_a_stokes", "solve_heat_robin", "solve_stationary_benard",
           "ConfigError", "ConstraintViolation", "GeometryDegenerate", "IncompatibleData", "MissingTimeLayer",
           "SolverDiverged", "StepRejected", "EvolutionState", "energy_ledger", "run_linear", "step_linear",
           "Grid", "SurfaceField", "flat_pack", "geometry_pack", "nonlinear_forcings"]
__version__ = "0.1.0"
