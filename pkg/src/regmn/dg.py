"""Discontinuous-Galerkin discretization of the regularized moment system.

Slab-geometry balance law on a uniform 1-d mesh:

    d_t u + d_x f_gamma(u) + sigma_a u = sigma_s R vhat(alpha(u)) + s(t, x),

closed through the regularized dual solve at every in-cell quadrature node.
Each cell carries modal Legendre coefficients for polynomials up to degree
k - 1; interfaces use the Lax-Friedrichs numerical flux with dissipation
constant one (the closure flux has spectral radius at most one).  Time
integration uses low-storage strong-stability-preserving Runge-Kutta
schemes built from convex combinations of forward Euler stages: a ten-stage
second-order method, a sixteen-stage third-order method, and the ten-stage
fourth-order method.  No realizability limiter is used anywhere; cell
moments may leave the realizable set freely.

Cell averages are the degree-0 coefficients.  All reductions run in a fixed
order, so repeated runs of one configuration are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .basis import QuadratureRule, gauss_lobatto, legendre_vals_and_derivs
from .closure import ClosureContext
from .dual import solve_dual_batch


class ClosureFailure(RuntimeError):
    """A closure solve inside the transport step failed to converge."""

    def __init__(self, message, cell=None, node=None, v=None, alpha=None,
                 residual_norm=None):
        super().__init__(message)
        self.cell = cell
        self.node = node
        self.v = v
        self.alpha = alpha
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh with periodic or inflow boundary treatment."""

    x_lo: float
    x_hi: float
    num_cells: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.num_cells < 1:
            raise ValueError("need at least one cell")
        if self.x_hi <= self.x_lo:
            raise ValueError("need x_hi > x_lo")
        if self.boundary not in ("periodic", "inflow"):
            raise ValueError("boundary must be 'periodic' or 'inflow'")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.num_cells

    def cell_centers(self) -> np.ndarray:
        return self.x_lo + self.dx * (np.arange(self.num_cells) + 0.5)


@dataclass
class SlabProblem:
    """Cross sections, source, initial data, and inflow boundary data.

    ``initial(x)`` maps an array of positions to moment vectors (len(x), n).
    ``source(t, x)``, when given, does the same at a fixed time.  For inflow
    boundaries, ``inflow_left(t)`` / ``inflow_right(t)`` return the ghost
    moment vectors (moments of the prescribed boundary densities extended to
    the whole velocity interval).
    """

    sigma_a: float
    sigma_s: float
    initial: Callable[[np.ndarray], np.ndarray]
    source: Callable[[float, np.ndarray], np.ndarray] | None = None
    inflow_left: Callable[[float], np.ndarray] | None = None
    inflow_right: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if self.sigma_a < 0.0 or self.sigma_s < 0.0:
            raise ValueError("cross sections must be >= 0")


@dataclass
class DGState:
    """Modal coefficients (num_cells, k, n) and the current time."""

    coeffs: np.ndarray
    time: float = 0.0

    @property
    def num_cells(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1]

    def cell_means(self) -> np.ndarray:
        return self.coeffs[:, 0, :]


@dataclass(frozen=True)
class CellBasis:
    """Legendre modes tabulated on the in-cell quadrature rule."""

    k: int
    rule: QuadratureRule
    vals: np.ndarray        # (k, q)
    derivs: np.ndarray      # (k, q)
    at_left: np.ndarray     # (k,) values at xi = -1
    at_right: np.ndarray    # (k,) values at xi = +1
    scale: np.ndarray       # (k,) inverse mass 2l+1


def cfl_quad_points(k: int) -> int:
    """Smallest Gauss-Lobatto point count q with 2q - 2 >= k (CFL weight rule)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = 2
    while 2 * q - 2 < k:
        q += 1
    return q


def volume_quad_points(k: int) -> int:
    """Default in-cell integration rule: k + 1 Gauss-Lobatto points.

    Exact through degree 2k - 1, which keeps projections of degree-(k-1)
    data exact and preserves the design order of the volume, collision, and
    source quadratures.
    """
    return k + 1


def cell_basis(k: int, q: int | None = None) -> CellBasis:
    if k < 1:
        raise ValueError("k must be >= 1")
    q = volume_quad_points(k) if q is None else q
    rule = gauss_lobatto(q)
    vals, derivs = legendre_vals_and_derivs(rule.nodes, k - 1)
    at = legendre_vals_and_derivs(np.array([-1.0, 1.0]), k - 1)[0]
    scale = 2.0 * np.arange(k) + 1.0
    return CellBasis(k=k, rule=rule, vals=vals, derivs=derivs,
                     at_left=at[:, 0], at_right=at[:, 1], scale=scale)


def timestep(dx: float, sigma_a: float, sigma_s: float, q: int) -> float:
    """Time step w_q dx / (1 + w_q dx (sigma_a + sigma_s)) with w_q the
    endpoint Gauss-Lobatto weight normalized to a unit cell, 1/(q(q-1))."""
    if q < 2:
        raise ValueError("q must be >= 2")
    w = 1.0 / (q * (q - 1))
    return w * dx / (1.0 + w * dx * (sigma_a + sigma_s))


# ---------------------------------------------------------------------------
# low-storage SSP Runge-Kutta schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeIntegrator:
    """Scheme tag plus the quadrature point count feeding the CFL weight."""

    scheme: str                 # "ssprk2-10" | "ssprk3-16" | "ssprk4-10"
    cfl_points: int

    @property
    def cfl_weight(self) -> float:
        q = self.cfl_points
        return 1.0 / (q * (q - 1))


def integrator_for_degree(k: int) -> TimeIntegrator:
    """Pair the spatial degree with its time scheme (k=2 -> order 2, etc.)."""
    q = cfl_quad_points(k)
    if k <= 2:
        return TimeIntegrator("ssprk2-10", q)
    if k == 3:
        return TimeIntegrator("ssprk3-16", q)
    if k == 4:
        return TimeIntegrator("ssprk4-10", q)
    raise ValueError("spatial degrees above 4 are not paired with a scheme")


def _ssprk2_step(y, t, dt, rhs, stages=10):
    # stages-1 Euler substeps of dt/(stages-1), then one averaging stage
    # that carries the final Euler update
    r = stages - 1
    h = dt / r
    u = y
    tu = t
    for _ in range(r):
        u = u + h * rhs(tu, u)
        tu += h
    return (y + r * (u + h * rhs(tu, u))) / stages


def _ssprk3_step(y, t, dt, rhs, n=4):
    # n^2-stage third-order scheme; Euler substeps of dt/(n^2 - n) with one
    # convex recombination against the state saved after (n-1)(n-2)/2 steps
    r = n * n - n
    h = dt / r
    u = y
    tu = t
    for _ in range((n - 1) * (n - 2) // 2):
        u = u + h * rhs(tu, u)
        tu += h
    u_keep = u
    t_keep = tu
    for _ in range((n - 1) * (n - 2) // 2, n * (n + 1) // 2 - 1):
        u = u + h * rhs(tu, u)
        tu += h
    u = (n * u_keep + (n - 1) * (u + h * rhs(tu, u))) / (2 * n - 1)
    tu = (n * t_keep + (n - 1) * (tu + h)) / (2 * n - 1)
    for _ in range(n * (n + 1) // 2, n * n):
        u = u + h * rhs(tu, u)
        tu += h
    return u


def _ssprk4_10_step(y, t, dt, rhs):
    # ten-stage fourth-order low-storage scheme (two registers)
    h = dt / 6.0
    q1 = y
    q2 = y
    t1 = t
    t2 = t
    for _ in range(5):
        q1 = q1 + h * rhs(t1, q1)
        t1 += h
    q2 = q2 / 25.0 + 0.36 * q1
    t2 = t2 / 25.0 + 0.36 * t1
    q1 = 15.0 * q2 - 5.0 * q1
    t1 = 15.0 * t2 - 5.0 * t1
    for _ in range(4):
        q1 = q1 + h * rhs(t1, q1)
        t1 += h
    return q2 + 0.6 * q1 + 0.1 * dt * rhs(t1, q1)


def ssp_step(integrator: TimeIntegrator, y, t, dt, rhs):
    """Advance y by one step of the integrator's scheme; rhs(t, y) -> dy/dt."""
    if integrator.scheme == "ssprk2-10":
        return _ssprk2_step(y, t, dt, rhs)
    if integrator.scheme == "ssprk3-16":
        return _ssprk3_step(y, t, dt, rhs)
    if integrator.scheme == "ssprk4-10":
        return _ssprk4_10_step(y, t, dt, rhs)
    raise ValueError(f"unknown scheme {integrator.scheme!r}")


# ---------------------------------------------------------------------------
# spatial operator
# ---------------------------------------------------------------------------

class ClosureWorkspace:
    """Warm-start multipliers per (cell, node) plus the two ghost states."""

    def __init__(self, num_cells: int, q: int, n: int):
        self.interior: np.ndarray | None = None
        self.ghost: np.ndarray | None = None
        self.shape = (num_cells * q, n)

    def get(self):
        return self.interior, self.ghost

    def put(self, interior, ghost):
        self.interior = interior
        self.ghost = ghost


def _node_positions(mesh: Mesh1D, cb: CellBasis) -> np.ndarray:
    centers = mesh.cell_centers()
    return centers[:, None] + 0.5 * mesh.dx * cb.rule.nodes[None, :]


def semidiscrete_rhs(coeffs: np.ndarray, t: float, problem: SlabProblem,
                     mesh: Mesh1D, ctx: ClosureContext,
                     cb: CellBasis | None = None,
                     workspace: ClosureWorkspace | None = None) -> np.ndarray:
    """Time derivative of the modal coefficients (same shape as ``coeffs``).

    Closure solves run at every in-cell Gauss-Lobatto node; since the rule
    contains the endpoints, interface states reuse the node solves.  A
    non-converged solve aborts with cell/node diagnostics.
    """
    num_cells, k, n = coeffs.shape
    if cb is None:
        cb = cell_basis(k)
    q = cb.rule.npoints
    basis = ctx.basis
    quad = basis.quad
    w_mu = quad.weights * quad.nodes

    u_nodes = np.einsum("ckn,kq->cqn", coeffs, cb.vals, optimize=True)
    flat = u_nodes.reshape(-1, n)
    inflow = mesh.boundary == "inflow"
    if inflow:
        if problem.inflow_left is None or problem.inflow_right is None:
            raise ValueError("inflow boundaries need inflow_left/inflow_right data")
        ghosts = np.stack([np.asarray(problem.inflow_left(t), dtype=float),
                           np.asarray(problem.inflow_right(t), dtype=float)])
        flat = np.concatenate([flat, ghosts])

    warm = None
    if workspace is not None and workspace.interior is not None:
        warm = workspace.interior
        if inflow and workspace.ghost is not None:
            warm = np.concatenate([warm, workspace.ghost])
        if warm.shape != flat.shape:
            warm = None
    sol = solve_dual_batch(flat, ctx.cfg, basis, ctx.model, warm_start=warm)
    if not sol.converged.all():
        bad = int(np.flatnonzero(~sol.converged)[0])
        cell, node = (bad // q, bad % q) if bad < num_cells * q else (None, None)
        raise ClosureFailure(
            f"closure solve failed at t={t:.6g} (cell {cell}, node {node}): "
            f"residual {sol.residual_norm[bad]:.3e} > tau {ctx.cfg.tau:.3e}",
            cell=cell, node=node, v=flat[bad], alpha=sol.alpha[bad],
            residual_norm=float(sol.residual_norm[bad]))
    if workspace is not None:
        if inflow:
            workspace.put(sol.alpha[:-2].copy(), sol.alpha[-2:].copy())
        else:
            workspace.put(sol.alpha.copy(), None)

    flux_flat = (sol.ansatz * w_mu) @ basis.eval.T
    f_nodes = flux_flat[:num_cells * q].reshape(num_cells, q, n)
    vhat_nodes = sol.vhat[:num_cells * q].reshape(num_cells, q, n)

    u_left = u_nodes[:, 0, :]
    u_right = u_nodes[:, -1, :]
    f_left = f_nodes[:, 0, :]
    f_right = f_nodes[:, -1, :]

    # Lax-Friedrichs interface fluxes, dissipation constant 1
    if inflow:
        f_ghost = flux_flat[num_cells * q:]
        minus_u = np.vstack([ghosts[0], u_right])
        minus_f = np.vstack([f_ghost[0], f_right])
        plus_u = np.vstack([u_left, ghosts[1]])
        plus_f = np.vstack([f_left, f_ghost[1]])
        fhat = 0.5 * (minus_f + plus_f) - 0.5 * (plus_u - minus_u)
        fhat_left = fhat[:-1]
        fhat_right = fhat[1:]
    else:
        minus_u = u_right
        minus_f = f_right
        plus_u = np.roll(u_left, -1, axis=0)
        plus_f = np.roll(f_left, -1, axis=0)
        fhat = 0.5 * (minus_f + plus_f) - 0.5 * (plus_u - minus_u)
        fhat_right = fhat
        fhat_left = np.roll(fhat, 1, axis=0)

    w_cell = cb.rule.weights
    volume = np.einsum("cqn,lq->cln", f_nodes * w_cell[None, :, None], cb.derivs,
                       optimize=True)
    surface = (fhat_right[:, None, :] * cb.at_right[None, :, None]
               - fhat_left[:, None, :] * cb.at_left[None, :, None])

    # collision relaxes the regularized moments; component 0 stays exactly 0
    relax = np.zeros_like(vhat_nodes)
    if problem.sigma_s > 0.0:
        relax[:, :, 1:] = -problem.sigma_s * vhat_nodes[:, :, 1:]
    if problem.source is not None:
        x_nodes = _node_positions(mesh, cb)
        relax = relax + problem.source(t, x_nodes.reshape(-1)).reshape(num_cells, q, n)
    inner = 0.5 * mesh.dx * np.einsum("cqn,lq->cln", relax * w_cell[None, :, None],
                                      cb.vals, optimize=True)

    out = (volume - surface + inner) * (cb.scale / mesh.dx)[None, :, None]
    if problem.sigma_a > 0.0:
        out = out - problem.sigma_a * coeffs
    return out


def project_initial(problem: SlabProblem, mesh: Mesh1D, k: int,
                    ctx: ClosureContext, q: int | None = None) -> DGState:
    """Per-cell discrete L2 projection of the initial moment field onto
    Legendre modes of degree <= k - 1 (exact for polynomial data of that
    degree with the default rule)."""
    cb = cell_basis(k, q)
    x = _node_positions(mesh, cb)
    values = problem.initial(x.reshape(-1)).reshape(mesh.num_cells, cb.rule.npoints, -1)
    coeffs = 0.5 * np.einsum("cqn,lq->cln", values * cb.rule.weights[None, :, None],
                             cb.vals, optimize=True) * cb.scale[None, :, None]
    return DGState(coeffs=coeffs, time=0.0)


def step(state: DGState, dt: float, problem: SlabProblem, mesh: Mesh1D,
         integrator: TimeIntegrator, ctx: ClosureContext,
         cb: CellBasis | None = None,
         workspace: ClosureWorkspace | None = None) -> DGState:
    """One SSP Runge-Kutta step of length dt."""
    if cb is None:
        cb = cell_basis(state.degree)

    def rhs(t, y):
        return semidiscrete_rhs(y, t, problem, mesh, ctx, cb=cb, workspace=workspace)

    coeffs = ssp_step(integrator, state.coeffs, state.time, dt, rhs)
    return DGState(coeffs=coeffs, time=state.time + dt)


def run_transport(problem: SlabProblem, mesh: Mesh1D, k: int, t_final: float,
                  ctx: ClosureContext, integrator: TimeIntegrator | None = None,
                  q_volume: int | None = None,
                  monitor: Callable[[DGState], None] | None = None,
                  initial_state: DGState | None = None) -> DGState:
    """Integrate from t = 0 (or ``initial_state.time``) to ``t_final``.

    The nominal step follows the CFL rule for the paired integrator; the
    final step is shrunk to land on ``t_final`` exactly.  ``monitor`` is
    called on the initial state and after every step.
    """
    if integrator is None:
        integrator = integrator_for_degree(k)
    cb = cell_basis(k, q_volume)
    state = project_initial(problem, mesh, k, ctx, q=q_volume) \
        if initial_state is None else initial_state
    workspace = ClosureWorkspace(mesh.num_cells, cb.rule.npoints, ctx.n)
    dt_nominal = timestep(mesh.dx, problem.sigma_a, problem.sigma_s,
                          integrator.cfl_points)
    if monitor is not None:
        monitor(state)
    while state.time < t_final - 1e-12 * max(1.0, t_final):
        dt = min(dt_nominal, t_final - state.time)
        state = step(state, dt, problem, mesh, integrator, ctx, cb=cb,
                     workspace=workspace)
        if monitor is not None:
            monitor(state)
    return replace(state, time=t_final)


# ---------------------------------------------------------------------------
# evaluation and error measures
# ---------------------------------------------------------------------------

def evaluate_state(state: DGState, xi: np.ndarray) -> np.ndarray:
    """Evaluate the DG polynomial at reference points xi in every cell;
    returns (num_cells, len(xi), n)."""
    vals = legendre_vals_and_derivs(np.asarray(xi, dtype=float), state.degree - 1)[0]
    return np.einsum("ckn,kq->cqn", state.coeffs, vals, optimize=True)


def total_mass(state: DGState, mesh: Mesh1D) -> float:
    """Integral of the zeroth moment over the domain."""
    return float(state.coeffs[:, 0, 0].sum() * mesh.dx)


def l1_error(state: DGState, reference: Callable[[np.ndarray], np.ndarray],
             mesh: Mesh1D, q: int = 20) -> float:
    """L1 distance of the zeroth component to ``reference`` via q-point
    Gauss-Lobatto quadrature in each cell."""
    rule = gauss_lobatto(q)
    vals = legendre_vals_and_derivs(rule.nodes, state.degree - 1)[0]
    u0 = np.einsum("ck,kq->cq", state.coeffs[:, :, 0], vals, optimize=True)
    x = mesh.cell_centers()[:, None] + 0.5 * mesh.dx * rule.nodes[None, :]
    ref = reference(x.reshape(-1)).reshape(x.shape)
    diff = np.abs(u0 - ref)
    return float(0.5 * mesh.dx * (diff * rule.weights).sum())
