"""Weyl-matrix computation and inverse reconstruction for matrix
Schrödinger operators on the half line with projector-form boundary
conditions A(Y'(0) - h Y(0)) - A_perp Y(0) = 0."""

from .boundary import (
    GeneralBoundaryPair,
    check_selfadjoint_pair,
    delta_condition,
    dirichlet,
    from_unitary,
    neumann,
    pair_from_unitary,
)
from .contour import Contour, ContourNode, build_contour, cauchy_transform, integrate
from .core import (
    BoundaryCondition,
    ConvergenceError,
    DataQualityError,
    DimensionMismatchError,
    DomainError,
    MatrixWave,
    PoleProximityError,
    PotentialGrid,
    ReconstructionError,
    SpectralPoint,
    lambda_to_point,
    matnorm,
)
from .forward import (
    Problem,
    asymptotics_report,
    check_m_equals_mstar,
    jost_matrix,
    p_matrix_diagnostic,
    scan_jost_zeros,
    solve_adjoint,
    solve_jost,
    solve_regular,
    weyl_matrix,
    weyl_solution,
    zero_potential,
)
from .inverse import (
    InvertConfig,
    coarsen_weyl_data,
    discretization_estimate,
    MainEquationSolution,
    ReconstructionResult,
    WeylData,
    extract_A,
    generate_weyl_data,
    invert,
    closure_residual,
    main_equation_residual,
    model_weyl,
    nystrom_phi_at,
    recover_potential,
    solve_main_equation,
)
from . import potentials

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "Contour",
    "ContourNode",
    "ConvergenceError",
    "DataQualityError",
    "DimensionMismatchError",
    "DomainError",
    "GeneralBoundaryPair",
    "InvertConfig",
    "MainEquationSolution",
    "MatrixWave",
    "PoleProximityError",
    "PotentialGrid",
    "Problem",
    "ReconstructionError",
    "ReconstructionResult",
    "SpectralPoint",
    "WeylData",
    "asymptotics_report",
    "build_contour",
    "cauchy_transform",
    "check_m_equals_mstar",
    "check_selfadjoint_pair",
    "coarsen_weyl_data",
    "discretization_estimate",
    "delta_condition",
    "dirichlet",
    "extract_A",
    "from_unitary",
    "generate_weyl_data",
    "integrate",
    "invert",
    "jost_matrix",
    "lambda_to_point",
    "closure_residual",
    "main_equation_residual",
    "matnorm",
    "model_weyl",
    "neumann",
    "nystrom_phi_at",
    "p_matrix_diagnostic",
    "pair_from_unitary",
    "potentials",
    "recover_potential",
    "scan_jost_zeros",
    "solve_adjoint",
    "solve_jost",
    "solve_main_equation",
    "solve_regular",
    "weyl_matrix",
    "weyl_solution",
    "zero_potential",
]
