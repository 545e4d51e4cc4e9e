"""Tikhonov-regularized dual solver for entropy-based moment closures.

For a moment vector v the solver minimizes the strictly convex objective

    phi(a) = <eta_*(a . m)> + (gamma/2) |G a|^2 - a . v,

whose gradient is vhat(a) + gamma*G*a - v with vhat(a) = <m eta_*'(a . m)>.
G = diag(mask) is a {0,1} selection: all-ones regularizes every moment
constraint, leading zeros leave low-order moments matched exactly.  Because
the problem is unconstrained, it has a solution for arbitrary -- including
non-realizable -- moment vectors whenever gamma > 0 (and V is an interval).

The iteration is a Levenberg-Marquardt damped Newton method with an Armijo
backtracking line search; it stops as soon as the Euclidean norm of the
gradient drops to ``tau``, which bounds the moment-reconstruction residual
directly.  A batched entry point solves many moment vectors at once with
per-sample damping and line searches; the transport solver depends on it.

All functions are pure; concurrent use is safe.  Warm-start arrays are
owned by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import entropy as ent
from .basis import BasisSet, gram_matrix

_EPS = float(np.finfo(float).eps)

# Armijo acceptance slack: near the optimum the predicted decrease falls
# below float resolution of the objective, so steps indistinguishable from
# a tie are accepted to let the Newton phase finish.
_FP_SLACK = 32.0 * _EPS


@dataclass
class RegularizationConfig:
    """Regularization strength, component mask, and solver knobs.

    ``mask`` selects the regularized components ({0,1} entries; None means
    all ones).  ``tau`` is the gradient-norm stopping tolerance.  The
    Levenberg-Marquardt damping starts at ``lm_damping_init``, shrinks by
    ``lm_damping_shrink`` after an accepted step (floor 0), grows by
    ``lm_damping_grow`` after a rejected step or failed factorization, and
    jumps to ``lm_damping_seed`` when growing from zero.
    """

    gamma: float = 0.0
    mask: np.ndarray | None = None
    tau: float = 1e-8
    max_iter: int = 200
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    lm_damping_init: float = 0.0
    lm_damping_shrink: float = 0.1
    lm_damping_grow: float = 10.0
    lm_damping_seed: float = 1e-6

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.tau <= 0.0:
            raise ValueError("tau must be > 0")
        if not 0.0 < self.armijo_slope < 1.0:
            raise ValueError("armijo_slope must lie in (0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")

    def mask_vector(self, n: int) -> np.ndarray:
        if self.mask is None:
            return np.ones(n)
        m = np.asarray(self.mask, dtype=float)
        if m.shape != (n,):
            raise ValueError(f"mask must have shape ({n},)")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        return m


@dataclass
class DualSolution:
    """Converged multiplier with its moment image and solve statistics."""

    alpha: np.ndarray
    vhat_of_alpha: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


@dataclass
class BatchDualSolution:
    """Vectorized solve result; ``ansatz`` holds eta_*'(alpha . m) at the nodes."""

    alpha: np.ndarray
    vhat: np.ndarray
    ansatz: np.ndarray
    residual_norm: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


class DualSolverError(RuntimeError):
    """Dual iteration did not reach the stopping tolerance.

    Carries the offending moment vector, the last iterate, and its residual
    so callers can decide whether to abort or retry with more
    regularization.
    """

    def __init__(self, message, v=None, alpha=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.v = v
        self.alpha = alpha
        self.residual_norm = residual_norm
        self.iterations = iterations


def ansatz_at_nodes(alpha, basis: BasisSet, model: ent.EntropyModel) -> np.ndarray:
    """Ansatz density eta_*'(alpha . m) at the quadrature nodes.

    Raises ``entropy.DomainError`` when alpha . m leaves the dual domain at
    any node (line searches catch this as a +inf objective).
    """
    alpha = np.asarray(alpha, dtype=float)
    a = alpha @ basis.eval
    if not np.all(ent.eta_star_arg_ok(model, a)):
        raise ent.DomainError("multiplier leaves the dual domain at a quadrature node")
    return ent.eta_star_derivatives(model, a)[0]


def vhat(alpha, basis: BasisSet, model: ent.EntropyModel) -> np.ndarray:
    """Moment map <m eta_*'(alpha . m)>."""
    g = ansatz_at_nodes(alpha, basis, model)
    return (g * basis.quad.weights) @ basis.eval.T


def vhat_gamma(alpha, cfg: RegularizationConfig, basis: BasisSet,
               model: ent.EntropyModel) -> np.ndarray:
    """Regularized moment map vhat(alpha) + gamma * mask * alpha (inverse of the solve)."""
    alpha = np.asarray(alpha, dtype=float)
    return vhat(alpha, basis, model) + cfg.gamma * cfg.mask_vector(basis.n) * alpha


def dual_objective(alpha, v, cfg: RegularizationConfig, basis: BasisSet,
                   model: ent.EntropyModel) -> float:
    """Objective value; +inf when the ansatz is not evaluable (for backtracking)."""
    alpha = np.asarray(alpha, dtype=float)
    v = np.asarray(v, dtype=float)
    a = alpha @ basis.eval
    star = ent.eta_star_with_overflow(model, a)
    val = float(star @ basis.quad.weights)
    if not np.isfinite(val):
        return np.inf
    mvec = cfg.mask_vector(basis.n)
    return val + 0.5 * cfg.gamma * float((mvec * alpha) @ alpha) - float(alpha @ v)


def dual_gradient(alpha, v, cfg: RegularizationConfig, basis: BasisSet,
                  model: ent.EntropyModel) -> np.ndarray:
    """Gradient vhat(alpha) + gamma * mask * alpha - v."""
    alpha = np.asarray(alpha, dtype=float)
    v = np.asarray(v, dtype=float)
    return vhat(alpha, basis, model) + cfg.gamma * cfg.mask_vector(basis.n) * alpha - v


def dual_hessian(alpha, cfg: RegularizationConfig, basis: BasisSet,
                 model: ent.EntropyModel) -> np.ndarray:
    """Hessian <m m^T eta_*''(alpha . m)> + gamma * diag(mask); symmetric positive definite."""
    alpha = np.asarray(alpha, dtype=float)
    a = alpha @ basis.eval
    if not np.all(ent.eta_star_arg_ok(model, a)):
        raise ent.DomainError("multiplier leaves the dual domain at a quadrature node")
    g2 = ent.eta_star_derivatives(model, a)[1]
    h = (basis.eval * (g2 * basis.quad.weights)) @ basis.eval.T
    return h + cfg.gamma * np.diag(cfg.mask_vector(basis.n))


def initial_multiplier(v, basis: BasisSet, model: ent.EntropyModel,
                       floor: float = 1e-10) -> np.ndarray:
    """Always-evaluable starting multiplier.

    Exponential-family entropies start from the isotropic ansatz matching
    the zeroth moment, alpha = (eta'(max(v0, floor)/measure), 0, ..., 0);
    the quadratic entropy starts from the exact solution of the linear
    system Gram * alpha = v.  Accepts a single vector or a batch.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vv = np.atleast_2d(v)
    n = basis.n
    if vv.shape[1] != n:
        raise ValueError(f"moment vectors must have {n} components")
    if model.kind is ent.EntropyKind.QUADRATIC:
        alpha = np.linalg.solve(gram_matrix(basis), vv.T).T
    else:
        z = np.maximum(vv[:, 0], floor) / basis.quad.measure
        if model.kind is ent.EntropyKind.FERMI_DIRAC:
            z = np.minimum(z, 1.0 - 1e-12)
        alpha = np.zeros_like(vv)
        alpha[:, 0] = ent.eta_prime(model, z)
    return alpha[0] if single else alpha


def _cholesky_batch(h):
    """Stacked Cholesky with a per-sample success mask (no exceptions)."""
    b, n, _ = h.shape
    low = np.zeros_like(h)
    ok = np.ones(b, dtype=bool)
    for j in range(n):
        d = h[:, j, j] - np.einsum("bk,bk->b", low[:, j, :j], low[:, j, :j])
        ok &= d > 0.0
        low[:, j, j] = np.sqrt(np.where(d > 0.0, d, 1.0))
        if j + 1 < n:
            off = h[:, j + 1:, j] - np.einsum("bik,bk->bi", low[:, j + 1:, :j], low[:, j, :j])
            low[:, j + 1:, j] = off / low[:, j, j][:, None]
    return low, ok


def _cholesky_solve(low, rhs):
    b, n = rhs.shape
    y = np.zeros_like(rhs)
    for i in range(n):
        y[:, i] = (rhs[:, i] - np.einsum("bk,bk->b", low[:, i, :i], y[:, :i])) / low[:, i, i]
    x = np.zeros_like(rhs)
    for i in range(n - 1, -1, -1):
        x[:, i] = (y[:, i] - np.einsum("bk,bk->b", low[:, i + 1:, i], x[:, i + 1:])) / low[:, i, i]
    return x


def solve_dual_batch(v, cfg: RegularizationConfig, basis: BasisSet,
                     model: ent.EntropyModel,
                     warm_start: np.ndarray | None = None) -> BatchDualSolution:
    """Solve the regularized dual for a batch of moment vectors.

    ``v`` has shape (B, n); ``warm_start``, when given, must have the same
    shape.  Warm starts that are non-finite or leave the dual domain fall
    back to the cold start.  Non-converged samples are reported through the
    ``converged`` mask rather than an exception.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    nsamp, n = v.shape
    if n != basis.n:
        raise ValueError(f"moment vectors must have {basis.n} components")
    e = basis.eval
    w = basis.quad.weights
    mvec = cfg.mask_vector(n)
    greg = cfg.gamma * mvec
    # pair products m_i m_j flattened so Hessian assembly is a single GEMM
    epairs = (e[:, None, :] * e[None, :, :]).reshape(n * n, -1)
    eye = np.eye(n)

    def objective(a_rows, alpha_rows, v_rows):
        star = ent.eta_star_with_overflow(model, a_rows)
        val = star @ w
        val = val + 0.5 * cfg.gamma * np.einsum("bi,i,bi->b", alpha_rows, mvec, alpha_rows)
        val = val - np.einsum("bi,bi->b", alpha_rows, v_rows)
        return np.where(np.isnan(val), np.inf, val)

    if warm_start is None:
        alpha = np.array(initial_multiplier(v, basis, model), dtype=float)
    else:
        alpha = np.array(np.atleast_2d(warm_start), dtype=float)
        if alpha.shape != v.shape:
            raise ValueError("warm_start shape must match v")
    a = alpha @ e
    bad = ~np.all(ent.eta_star_arg_ok(model, a), axis=1) | ~np.all(np.isfinite(alpha), axis=1)
    if bad.any():
        alpha[bad] = initial_multiplier(v[bad], basis, model)
        a[bad] = alpha[bad] @ e
    obj = objective(a, alpha, v)
    bad = ~np.isfinite(obj)
    if bad.any():
        alpha[bad] = initial_multiplier(v[bad], basis, model)
        a[bad] = alpha[bad] @ e
        obj[bad] = objective(a[bad], alpha[bad], v[bad])

    lam = np.full(nsamp, float(cfg.lm_damping_init))
    iterations = np.zeros(nsamp, dtype=int)
    converged = np.zeros(nsamp, dtype=bool)
    vhat_all = np.empty_like(v)
    res_all = np.empty(nsamp)
    ansatz_all = np.empty((nsamp, e.shape[1]))

    open_idx = np.arange(nsamp)
    while open_idx.size:
        a_o = a[open_idx]
        g1, g2 = ent.eta_star_derivatives(model, a_o)
        vh = (g1 * w) @ e.T
        grad = vh + greg * alpha[open_idx] - v[open_idx]
        res = np.linalg.norm(grad, axis=1)
        vhat_all[open_idx] = vh
        res_all[open_idx] = res
        ansatz_all[open_idx] = g1
        done = res <= cfg.tau
        converged[open_idx] = done
        working = ~done & (iterations[open_idx] < cfg.max_iter)
        if not working.any():
            break
        idx = open_idx[working]
        grad = grad[working]
        g2 = g2[working]

        hess = ((g2 * w) @ epairs.T).reshape(-1, n, n) + np.diag(greg)
        # factor with per-sample damping, growing it until SPD succeeds
        low = np.empty_like(hess)
        need = np.ones(idx.size, dtype=bool)
        for _ in range(80):
            rows = np.flatnonzero(need)
            ltry, ok = _cholesky_batch(hess[rows] + lam[idx[rows]][:, None, None] * eye)
            low[rows[ok]] = ltry[ok]
            need[rows[ok]] = False
            fail = idx[rows[~ok]]
            lam[fail] = np.where(lam[fail] > 0.0, lam[fail] * cfg.lm_damping_grow,
                                 cfg.lm_damping_seed)
            if not need.any():
                break
        if need.any():
            # damping saturated; give up on these samples this iteration
            low[need] = np.eye(n)
        direction = _cholesky_solve(low, -grad)
        gd = np.einsum("bi,bi->b", grad, direction)

        step = np.ones(idx.size)
        pending = (gd < 0.0) & ~need
        moved = np.zeros(idx.size, dtype=bool)
        slack = _FP_SLACK * (1.0 + np.abs(obj[idx]))
        for _ in range(cfg.max_backtracks + 1):
            rows = np.flatnonzero(pending)
            if rows.size == 0:
                break
            gidx = idx[rows]
            alpha_try = alpha[gidx] + step[rows, None] * direction[rows]
            a_try = a[gidx] + step[rows, None] * (direction[rows] @ e)
            obj_try = objective(a_try, alpha_try, v[gidx])
            accept = obj_try <= obj[gidx] + cfg.armijo_slope * step[rows] * gd[rows] + slack[rows]
            acc = rows[accept]
            if acc.size:
                gacc = idx[acc]
                alpha[gacc] = alpha_try[accept]
                a[gacc] = a_try[accept]
                obj[gacc] = obj_try[accept]
                moved[acc] = True
                pending[acc] = False
            step[pending] *= cfg.backtrack_factor
        lam[idx[moved]] *= cfg.lm_damping_shrink
        failed = idx[~moved]
        lam[failed] = np.where(lam[failed] > 0.0, lam[failed] * cfg.lm_damping_grow,
                               cfg.lm_damping_seed)
        iterations[idx] += 1
        open_idx = idx

    return BatchDualSolution(alpha=alpha, vhat=vhat_all, ansatz=ansatz_all,
                             residual_norm=res_all, iterations=iterations,
                             converged=converged)


def solve_dual(v, cfg: RegularizationConfig, basis: BasisSet, model: ent.EntropyModel,
               warm_start: np.ndarray | None = None) -> DualSolution:
    """Solve the regularized dual for one moment vector.

    Raises ``DualSolverError`` (carrying the last iterate and residual) when
    the stopping tolerance is not reached within ``cfg.max_iter`` damped
    Newton steps.
    """
    v = np.asarray(v, dtype=float)
    warm = None if warm_start is None else np.asarray(warm_start, dtype=float)[None, :]
    out = solve_dual_batch(v[None, :], cfg, basis, model, warm_start=warm)
    if not out.converged[0]:
        raise DualSolverError(
            f"dual solve did not converge: residual {out.residual_norm[0]:.3e} "
            f"> tau {cfg.tau:.3e} after {int(out.iterations[0])} iterations",
            v=v, alpha=out.alpha[0], residual_norm=float(out.residual_norm[0]),
            iterations=int(out.iterations[0]))
    return DualSolution(alpha=out.alpha[0], vhat_of_alpha=out.vhat[0],
                        residual_norm=float(out.residual_norm[0]),
                        iterations=int(out.iterations[0]), converged=True)


def complementary_slackness_gap(v, sol: DualSolution, cfg: RegularizationConfig) -> float:
    """|alpha . (v - vhat_gamma(alpha))|; vanishes at exact solutions on compact V."""
    v = np.asarray(v, dtype=float)
    mvec = cfg.mask_vector(v.size)
    vg = sol.vhat_of_alpha + cfg.gamma * mvec * sol.alpha
    return float(abs(sol.alpha @ (v - vg)))
