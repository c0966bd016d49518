"""Steady radiative heat transfer in the diffusive limit: solvers and verification tools."""

from .errors import InternalError, InvalidArgumentError, RadDiffError, SolverFailure, UnsupportedOrderError
from .mesh import AngularQuadrature, Mesh1D, build_mesh, gauss_quadrature, moment
from .transport import InflowData, TransportSweeper, half_space_sweep, sweep
from .elliptic import DirichletBC, solve_limit_equation, solve_nonlinear_temperature, solve_reaction_diffusion
from .milne import LayerSources, MilneDiscretization, MilneSolution, solve_linear_milne, solve_nonlinear_milne
from .expansion import (
    AsymptoticConstruction,
    CompositeApproximation,
    CutoffSpec,
    assemble_composite,
    auto_delta,
    composite_mesh,
    construct,
    evaluate_residuals,
)
from .fullsolver import SolveReport, error_norms, linearized_solve, solve_contraction, solve_picard
from .spectral import CoercivityReport, SpectralReport, check_coercivity, check_spectral

__all__ = [
    "AngularQuadrature",
    "AsymptoticConstruction",
    "CoercivityReport",
    "CompositeApproximation",
    "CutoffSpec",
    "DirichletBC",
    "InflowData",
    "InternalError",
    "InvalidArgumentError",
    "LayerSources",
    "Mesh1D",
    "MilneDiscretization",
    "MilneSolution",
    "RadDiffError",
    "SolveReport",
    "SolverFailure",
    "SpectralReport",
    "TransportSweeper",
    "UnsupportedOrderError",
    "assemble_composite",
    "auto_delta",
    "build_mesh",
    "check_coercivity",
    "check_spectral",
    "composite_mesh",
    "construct",
    "error_norms",
    "evaluate_residuals",
    "gauss_quadrature",
    "half_space_sweep",
    "linearized_solve",
    "moment",
    "solve_contraction",
    "solve_limit_equation",
    "solve_linear_milne",
    "solve_nonlinear_milne",
    "solve_nonlinear_temperature",
    "solve_picard",
    "solve_reaction_diffusion",
    "sweep",
]
