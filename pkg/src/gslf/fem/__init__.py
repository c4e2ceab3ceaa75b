"""P1 finite elements for elliptic problems with GSLF diffusion coefficients."""
from .estimator import ErrorIndicator, estimate_error
from .mesh import DIRICHLET, NEUMANN, Mesh, adapt, refine, structured_mesh
from .solver import FemSolution, SolverError, assemble_and_solve, galerkin_residual
from .study import (CoefficientSpec, FemProblem, Phi, adaptive_dominance, equilibrated_params, manufactured_rate,
                    sample_coefficient, strong_error_study)

__all__ = [
    "DIRICHLET", "NEUMANN", "Mesh", "adapt", "refine", "structured_mesh",
    "FemSolution", "SolverError", "assemble_and_solve", "galerkin_residual",
    "ErrorIndicator", "estimate_error",
    "CoefficientSpec", "FemProblem", "Phi", "adaptive_dominance", "equilibrated_params", "manufactured_rate",
    "sample_coefficient", "strong_error_study",
]
