"""Monolithic solver for fluid / poroelastic-structure interaction.

Incompressible flow coupled to a poroelastic layer, both written on the
reference domain; semi-implicit time stepping with BDF1/BDF2 and a
Nitsche-type penalty enforcing continuity of normal velocity across the
interface.
"""

__version__ = "0.1.0"

from .errors import ConfigError, FpsiError, MeshError, SolverError
from .kinematics import MaterialParams, lame_from_E_nu
from .mesh import Mesh, load_mesh
from .assembly import build_problem, assemble_system, StepInputs
from .stepping import BDF1, BDF2, State, advance_step, run_transient, solve_steady
from .energy import EnergyReport, evaluate_energy
from .solver import solve

__all__ = [
    "__version__",
    "ConfigError", "FpsiError", "MeshError", "SolverError",
    "MaterialParams", "lame_from_E_nu",
    "Mesh", "load_mesh",
    "build_problem", "assemble_system", "StepInputs",
    "BDF1", "BDF2", "State", "advance_step", "run_transient", "solve_steady",
    "EnergyReport", "evaluate_energy",
    "solve",
]
