"""Regularized entropy-based moment closures for slab-geometry transport.

The closure flux and collision moments are defined through a
Tikhonov-regularized convex dual solve, so they exist for arbitrary
(including non-realizable) moment vectors; a modal discontinuous-Galerkin
solver with SSP Runge-Kutta time stepping integrates the resulting balance
law without any realizability limiting.
"""

from .entropy import DomainError, EntropyKind, EntropyModel, eta, eta_prime, \
    eta_star, eta_star_prime, eta_star_second
from .basis import BasisSet, QuadratureRule, gauss_lobatto, gram_matrix, \
    legendre_basis, moments_of, monomial_basis
from .dual import (BatchDualSolution, DualSolution, DualSolverError,
                   RegularizationConfig, ansatz_at_nodes, complementary_slackness_gap,
                   dual_gradient, dual_hessian, dual_objective, solve_dual,
                   solve_dual_batch, vhat, vhat_gamma)
from .closure import (AccuracyProbeReport, ClosureContext, accuracy_probe,
                      collision_isotropic, entropy_pair, euler_reg_closure,
                      euler_reg_multiplier, flux, flux_jacobian, m1_moment_ratio,
                      m1_multiplier_from_ratio, moment_map_jacobian,
                      pn_filter_closure, regularized_moments)
from .dg import (ClosureFailure, DGState, Mesh1D, SlabProblem, TimeIntegrator,
                 cfl_quad_points, integrator_for_degree, l1_error, project_initial,
                 run_transport, semidiscrete_rhs, ssp_step, step, timestep,
                 total_mass)

__version__ = "0.1.0"
