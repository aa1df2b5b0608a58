"""Robust DPG solver for singularly perturbed reaction-diffusion problems.

An ultra-weak discontinuous Petrov-Galerkin discretization of
``-eps lap u + c u = f`` on polygonal 2D domains with three L2 field
variables (u, the scaled flux and the scaled Laplacian), trace and flux
unknowns on the mesh skeleton, per-element optimal test functions, a
built-in a posteriori error estimator and adaptive newest-vertex
bisection.
"""

from .adaptivity import IndicatorField, adaptive_loop, local_indicators, mark_doerfler
from .assembly import (
    EpsWeights,
    TrialDofMap,
    assemble_normal_equations,
    build_local_systems,
    build_trial_dofmap,
)
from .basis import (
    AffineMap,
    QuadratureRule,
    ShapeTable,
    affine_map,
    quadrature_edge,
    quadrature_triangle,
    shape_table,
)
from .config import ExperimentConfig, ProblemSetup, setup_problem
from .linalg import SparseSymmetric, cg_solve, cholesky, solve_cholesky
from .mesh import (
    Mesh,
    Skeleton,
    build_skeleton,
    make_lshape_mesh,
    make_unit_square_mesh,
    read_mesh,
    refine_nvb,
    uniform_refine,
    write_mesh,
)
from .verification import (
    ErrorReport,
    ExactSolution,
    balanced_errors,
    dense_oracle_solve,
    energy_error,
    load_unaligned,
    manufactured_solution_31,
    rate_fit,
)

__version__ = "0.1.0"
