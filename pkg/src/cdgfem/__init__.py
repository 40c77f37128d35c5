"""Continuous-discontinuous Galerkin finite elements for advection-diffusion-reaction."""
from .mesh import (Decomposition, Mesh, build_structured_mesh, check_interface_assumption,
                   check_peclet, check_rho, decompose)
from .fem import (DiscreteFunction, DofSpace, build_space, evaluate, evaluate_gradient,
                  gauss_rule, inject, project_PiD)
from .assembly import (ProblemSpec, SparseSystem, assemble_advection, assemble_diffusion,
                       assemble_reaction, assemble_system)
from .solver import SolverConfig, solve
from .analysis import (NormReport, coercivity_ratio, error_norms, h2_norm_ueps, sdg_norm,
                       triple_norm)

__version__ = "0.1.0"
