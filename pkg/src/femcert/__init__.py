"""Crouzeix-Raviart finite elements with certified a priori and a posteriori error bounds."""

from .certify import BoundReport, GlobalConstants, certify_run, convergence_study, global_constants
from .constants import (
    ConstantEstimate,
    c6_closed_form,
    eigen_constant_lower,
    estimate,
    solve_c1_transcendental,
    solve_c12_transcendental,
    upper_bound,
)
from .femcore import SolverError, solve_poisson_conforming, solve_poisson_cr
from .fields import ScalarField, parse_builtin, sinsin
from .flux import FluxConformityError, build_rt_flux, build_ubar, solve_modified_cr
from .trimesh import Mesh, MeshError, classify_shape, generate_friedrichs_keller, read_mesh, write_mesh

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "GlobalConstants", "certify_run", "convergence_study", "global_constants",
    "ConstantEstimate", "c6_closed_form", "eigen_constant_lower", "estimate",
    "solve_c1_transcendental", "solve_c12_transcendental", "upper_bound",
    "SolverError", "solve_poisson_conforming", "solve_poisson_cr",
    "ScalarField", "parse_builtin", "sinsin",
    "FluxConformityError", "build_rt_flux", "build_ubar", "solve_modified_cr",
    "Mesh", "MeshError", "classify_shape", "generate_friedrichs_keller", "read_mesh", "write_mesh",
]
