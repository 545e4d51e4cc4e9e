"""Regularized closure quantities built on the dual solver.

Given a moment vector v (realizable or not), the dual solve produces a
multiplier alpha whose ansatz density defines the flux <mu m G>, the
isotropic-scattering collision moments, the regularized moment image
vhat(alpha), and an entropy / entropy-flux pair.  Three analytic special
cases -- the filter form of the quadratic-entropy closure on an orthonormal
basis, the two-moment exponential closure with its first-order constraint
relaxed, and the three-moment closure on a wide interval with the
second-order constraint relaxed -- serve as independent oracles for the
numeric path.  Accuracy-probe helpers measure the moment-reconstruction
error of the regularization map against its theoretical bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import entropy as ent
from .basis import BasisSet, gram_matrix, moments_of
from .dual import (DualSolution, DualSolverError, RegularizationConfig,
                   solve_dual, solve_dual_batch)


@dataclass
class ClosureContext:
    """Basis + entropy + regularization bundle used by every closure call.

    ``warm_start_policy`` is either "none" or "per_call_cache"; the latter
    seeds each solve with the multiplier of the previous call through this
    context (single-threaded use only -- the cache is not locked).
    """

    basis: BasisSet
    model: ent.EntropyModel
    cfg: RegularizationConfig
    warm_start_policy: str = "none"
    _cache: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.warm_start_policy not in ("none", "per_call_cache"):
            raise ValueError("warm_start_policy must be 'none' or 'per_call_cache'")

    @property
    def n(self) -> int:
        return self.basis.n

    def solve(self, v, warm_start=None) -> DualSolution:
        if warm_start is None and self.warm_start_policy == "per_call_cache":
            if self._cache is not None and self._cache.shape == (self.n,):
                warm_start = self._cache
        sol = solve_dual(v, self.cfg, self.basis, self.model, warm_start=warm_start)
        if self.warm_start_policy == "per_call_cache":
            self._cache = sol.alpha
        return sol


def _ansatz_of(sol: DualSolution, ctx: ClosureContext) -> np.ndarray:
    return ent.eta_star_derivatives(ctx.model, sol.alpha @ ctx.basis.eval)[0]


def flux(v, ctx: ClosureContext) -> np.ndarray:
    """Closure flux <mu m G> at the solved multiplier."""
    sol = ctx.solve(v)
    g = _ansatz_of(sol, ctx)
    quad = ctx.basis.quad
    return (g * (quad.weights * quad.nodes)) @ ctx.basis.eval.T


def regularized_moments(v, ctx: ClosureContext) -> np.ndarray:
    """Moment image vhat(alpha) of the solve; equals v - gamma*mask*alpha at optimality."""
    return ctx.solve(v).vhat_of_alpha


def collision_isotropic(v, sigma_s: float, ctx: ClosureContext) -> np.ndarray:
    """Isotropic-scattering collision moments sigma_s * R * vhat(alpha).

    R = diag(0, -1, ..., -1): the zeroth component is exactly zero
    (conservation); higher components relax the *regularized* moments, which
    keeps the entropy-dissipation inequality intact for non-realizable v.
    """
    if sigma_s < 0.0:
        raise ValueError("sigma_s must be >= 0")
    vh = regularized_moments(v, ctx)
    out = -sigma_s * vh
    out[0] = 0.0
    return out


def entropy_pair(v, ctx: ClosureContext):
    """Entropy h = <eta(G)> + (gamma/2)|mask*alpha|^2 and flux j = <mu eta(G)>."""
    sol = ctx.solve(v)
    g = _ansatz_of(sol, ctx)
    eta_vals = ent.eta(ctx.model, g)
    quad = ctx.basis.quad
    mvec = ctx.cfg.mask_vector(ctx.n)
    h = float(eta_vals @ quad.weights) + 0.5 * ctx.cfg.gamma * float((mvec * sol.alpha) @ sol.alpha)
    j = float(eta_vals @ (quad.weights * quad.nodes))
    return h, j


def entropy_pair_batch(v, ctx: ClosureContext, warm_start=None):
    """Batched entropy/entropy-flux evaluation (used by transport diagnostics)."""
    out = solve_dual_batch(v, ctx.cfg, ctx.basis, ctx.model, warm_start=warm_start)
    if not out.converged.all():
        bad = int(np.flatnonzero(~out.converged)[0])
        raise DualSolverError("closure solve failed in entropy evaluation",
                              v=np.atleast_2d(v)[bad], alpha=out.alpha[bad],
                              residual_norm=float(out.residual_norm[bad]),
                              iterations=int(out.iterations[bad]))
    quad = ctx.basis.quad
    eta_vals = ent.eta(ctx.model, out.ansatz)
    mvec = ctx.cfg.mask_vector(ctx.n)
    h = eta_vals @ quad.weights + 0.5 * ctx.cfg.gamma * np.einsum(
        "bi,i,bi->b", out.alpha, mvec, out.alpha)
    j = eta_vals @ (quad.weights * quad.nodes)
    return h, j


def moment_map_jacobian(v, ctx: ClosureContext) -> np.ndarray:
    """Analytic Jacobian of v -> vhat(alpha(v)): H(alpha) (H(alpha) + gamma*diag(mask))^-1."""
    sol = ctx.solve(v)
    a = sol.alpha @ ctx.basis.eval
    g2 = ent.eta_star_derivatives(ctx.model, a)[1]
    quad = ctx.basis.quad
    h = (ctx.basis.eval * (g2 * quad.weights)) @ ctx.basis.eval.T
    hg = h + ctx.cfg.gamma * np.diag(ctx.cfg.mask_vector(ctx.n))
    return np.linalg.solve(hg.T, h.T).T


def flux_jacobian(v, ctx: ClosureContext) -> np.ndarray:
    """Analytic Jacobian of the closure flux: <mu m m^T eta_*''> (H + gamma*diag(mask))^-1."""
    sol = ctx.solve(v)
    a = sol.alpha @ ctx.basis.eval
    g2 = ent.eta_star_derivatives(ctx.model, a)[1]
    quad = ctx.basis.quad
    h = (ctx.basis.eval * (g2 * quad.weights)) @ ctx.basis.eval.T
    jmu = (ctx.basis.eval * (g2 * quad.weights * quad.nodes)) @ ctx.basis.eval.T
    hg = h + ctx.cfg.gamma * np.diag(ctx.cfg.mask_vector(ctx.n))
    return np.linalg.solve(hg.T, jmu.T).T


# ---------------------------------------------------------------------------
# analytic special cases (oracles for the numeric path)
# ---------------------------------------------------------------------------

def pn_filter_closure(v, gamma: float, basis: BasisSet, model: ent.EntropyModel) -> np.ndarray:
    """Quadratic entropy on an orthonormal basis: the flux is f(v) / (1 + gamma).

    The fully regularized multiplier solves (I + gamma I) alpha = v, so the
    regularization just damps every moment by the same filter factor.
    """
    if model.kind is not ent.EntropyKind.QUADRATIC:
        raise ValueError("the filter closure requires the quadratic entropy")
    if not basis.orthonormal:
        raise ValueError("the filter closure requires an orthonormal basis")
    v = np.asarray(v, dtype=float)
    quad = basis.quad
    advect = (basis.eval * (quad.weights * quad.nodes)) @ basis.eval.T
    return (advect @ v) / (1.0 + gamma)


def m1_moment_ratio(alpha1: float, gamma: float, v0: float) -> float:
    """Normalized first moment of the two-moment exponential closure with a
    regularized first-order constraint: coth(a) - 1/a + (gamma/v0) a.

    The unregularized map (gamma = 0) is a smooth bijection onto (-1, 1);
    for gamma > 0 it is a bijection onto all of R.
    """
    if v0 <= 0.0:
        raise ValueError("v0 must be > 0")
    a = float(alpha1)
    if abs(a) < 1e-4:
        # coth(a) - 1/a = a/3 - a^3/45 + O(a^5)
        base = a / 3.0 - a ** 3 / 45.0
    else:
        base = 1.0 / np.tanh(a) - 1.0 / a
    return base + gamma * a / v0


def m1_multiplier_from_ratio(ratio: float, gamma: float, v0: float) -> float:
    """Invert ``m1_moment_ratio`` for the first-order multiplier."""
    if v0 <= 0.0:
        raise ValueError("v0 must be > 0")
    if gamma == 0.0 and not -1.0 < ratio < 1.0:
        raise ValueError("unregularized ratio must lie in (-1, 1)")
    if ratio == 0.0:
        return 0.0
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if m1_moment_ratio(lo, gamma, v0) < ratio:
            break
        lo *= 2.0
    for _ in range(200):
        if m1_moment_ratio(hi, gamma, v0) > ratio:
            break
        hi *= 2.0
    return float(brentq(lambda a: m1_moment_ratio(a, gamma, v0) - ratio, lo, hi,
                        xtol=1e-14, rtol=8.9e-16))


def euler_reg_multiplier(v0: float, v1: float, v2: float, gamma: float) -> float:
    """Second-order multiplier of the three-moment closure on V = R with only
    the second-order constraint relaxed."""
    if v0 <= 0.0:
        raise ValueError("v0 must be > 0")
    if gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    d = v2 * v0 - v1 * v1
    root = np.sqrt(d * d + 2.0 * gamma * v0 ** 3)
    return float((d - root) / (2.0 * gamma * v0))


def euler_reg_closure(v0: float, v1: float, v2: float, gamma: float) -> float:
    """Regularized second-order moment of the three-moment closure on V = R.

    Approaches the identity for realizable v2 as gamma -> 0 and returns
    small positive values for nonphysical negative v2.
    """
    if v0 <= 0.0:
        raise ValueError("v0 must be > 0")
    if gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    d = v2 * v0 - v1 * v1
    root = np.sqrt(d * d + 2.0 * gamma * v0 ** 3)
    return float(v0 * ((v1 / v0) ** 2 + (d + root) / (2.0 * v0 * v0)))


# ---------------------------------------------------------------------------
# accuracy probes for the moment-regularization map
# ---------------------------------------------------------------------------

@dataclass
class AccuracyProbeReport:
    """Worst observed error ratios of the regularization map over a sample set.

    ``max_ratio`` compares the tightly solved map against the bound
    delta + M*gamma; ``max_ratio_tau`` compares a loose solve with gradient
    tolerance tau against the inflated bound 2*delta + M*gamma + 2*tau.
    Ratios <= 1 mean the bounds hold.
    """

    samples: int
    max_ratio: float
    max_ratio_tau: float
    M_used: float
    delta_used: float
    gamma_used: float
    tau_loose: float
    failures: int


def sample_bounded_multipliers(m_bound: float, count: int, basis: BasisSet,
                               model: ent.EntropyModel, rng) -> np.ndarray:
    """Multipliers drawn uniformly from the ball of radius ``m_bound``.

    Sampling in multiplier space makes membership of v = vhat(alpha) in the
    bounded-multiplier moment set exact, with no rejection in moment space.
    Draws that leave the dual domain (possible for Bose-Einstein) are
    redrawn.
    """
    n = basis.n
    out = np.empty((count, n))
    have = 0
    while have < count:
        need = count - have
        direction = rng.standard_normal((need, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = m_bound * rng.random(need) ** (1.0 / n)
        cand = direction * radius[:, None]
        ok = np.all(ent.eta_star_arg_ok(model, cand @ basis.eval), axis=1)
        took = cand[ok]
        out[have:have + took.shape[0]] = took
        have += took.shape[0]
    return out


def accuracy_probe(m_bound: float, delta: float, gamma: float, samples: int,
                   ctx: ClosureContext, seed: int = 0,
                   tau_loose: float = 1e-4) -> AccuracyProbeReport:
    """Empirical check of the regularization-map error bounds.

    Draws v = vhat(alpha) with |alpha| < m_bound, perturbs by delta along a
    random unit vector, and maps the perturbed vector through the
    regularized solve.  The tight solve (gradient tolerance well below
    gamma*delta) probes the bound delta + M*gamma; the loose solve with
    tolerance ``tau_loose`` probes 2*delta + M*gamma + 2*tau_loose.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    basis, model = ctx.basis, ctx.model
    alpha = sample_bounded_multipliers(m_bound, samples, basis, model, rng)
    g = ent.eta_star_derivatives(model, alpha @ basis.eval)[0]
    v = moments_of(g, basis)
    direction = rng.standard_normal(v.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    v_delta = v + delta * direction

    tau_tight = min(1e-12, 1e-3 * (delta + m_bound * gamma) + 1e-15)
    cfg_tight = RegularizationConfig(gamma=gamma, tau=tau_tight, max_iter=500)
    cfg_loose = RegularizationConfig(gamma=gamma, tau=tau_loose, max_iter=500)

    out_tight = solve_dual_batch(v_delta, cfg_tight, basis, model)
    out_loose = solve_dual_batch(v_delta, cfg_loose, basis, model)
    failures = int(np.sum(~out_tight.converged) + np.sum(~out_loose.converged))

    err_tight = np.linalg.norm(out_tight.vhat - v, axis=1)
    err_loose = np.linalg.norm(out_loose.vhat - v, axis=1)
    bound_tight = delta + m_bound * gamma
    bound_loose = 2.0 * delta + m_bound * gamma + 2.0 * tau_loose

    ok_t = out_tight.converged
    ok_l = out_loose.converged
    max_ratio = float(np.max(err_tight[ok_t] / bound_tight)) if ok_t.any() else np.nan
    max_ratio_tau = float(np.max(err_loose[ok_l] / bound_loose)) if ok_l.any() else np.nan
    return AccuracyProbeReport(samples=samples, max_ratio=max_ratio,
                               max_ratio_tau=max_ratio_tau, M_used=m_bound,
                               delta_used=delta, gamma_used=gamma,
                               tau_loose=tau_loose, failures=failures)
