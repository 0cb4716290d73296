"""Numerical laboratory for Perron solutions of weighted quasilinear equations.

Solves div A(x, grad u) = 0 with A(x, q) = w(x) (q.Mq)^((p-2)/2) Mq by P1
finite elements, and studies how boundary perturbations on sets of zero
capacity leave the Perron solution unchanged.
"""
from .capacity import CapacityEstimate, PsiSequence, build_psi_sequence, estimate_capacity
from .dirichlet import SolveReport, SolverError, monotone_data_study, solve_dirichlet
from .mesh import DomainDescriptor, DomainMesh, build_mesh, refine, unit_square_mesh
from .obstacle import ObstacleSpec, solve_obstacle
from .operators import (OperatorSpec, WeightSpec, a_flux, check_ap_weight, check_structure_conditions,
                        energy, residual)
from .oracle import ClosedForm, brute_force_obstacle, eval_closed_form, walk_on_spheres
from .perron import PerturbationSpec, perron_sandwich, uniqueness_check, upper_envelope_approx

__version__ = "0.1.0"

__all__ = [
    "CapacityEstimate", "ClosedForm", "DomainDescriptor", "DomainMesh", "ObstacleSpec", "OperatorSpec",
    "PerturbationSpec", "PsiSequence", "SolveReport", "SolverError", "WeightSpec", "a_flux",
    "brute_force_obstacle", "build_mesh", "build_psi_sequence", "check_ap_weight",
    "check_structure_conditions", "energy", "estimate_capacity", "eval_closed_form", "monotone_data_study",
    "perron_sandwich", "refine", "residual", "solve_dirichlet", "solve_obstacle", "uniqueness_check",
    "unit_square_mesh", "upper_envelope_approx", "walk_on_spheres",
]
