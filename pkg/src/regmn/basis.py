"""Velocity-space discretization: quadrature rules and polynomial bases.

The default setup is the slab-geometry one: the interval [-1, 1] with
Gauss-Lobatto quadrature and raw (unnormalized) Legendre polynomials.  A
monomial basis on a scaled interval is provided for cross-checks that
approximate an unbounded velocity domain by a wide finite one.

Angle brackets <.> throughout this package always mean the *discrete*
quadrature of a rule, never an exact integral; every moment, flux, and
Hessian is defined with respect to the same bracket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights on an interval (ascending nodes)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")

    @property
    def npoints(self) -> int:
        return self.nodes.size

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def scaled(self, lo: float, hi: float) -> "QuadratureRule":
        """Affine image of the rule on [lo, hi] (assumes the rule lives on [-1, 1])."""
        if hi <= lo:
            raise ValueError("need hi > lo")
        half = 0.5 * (hi - lo)
        return QuadratureRule(lo + half * (self.nodes + 1.0), half * self.weights)


def legendre_vals(x, nmax: int) -> np.ndarray:
    """P_0..P_nmax at the points x via the three-term recurrence; shape (nmax+1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.empty((nmax + 1, x.size))
    vals[0] = 1.0
    if nmax >= 1:
        vals[1] = x
    for k in range(1, nmax):
        vals[k + 1] = ((2 * k + 1) * x * vals[k] - k * vals[k - 1]) / (k + 1)
    return vals


def legendre_vals_and_derivs(x, nmax: int):
    """Values and first derivatives of P_0..P_nmax at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = legendre_vals(x, nmax)
    derivs = np.zeros_like(vals)
    if nmax >= 1:
        derivs[1] = 1.0
    for k in range(2, nmax + 1):
        derivs[k] = (2 * k - 1) * vals[k - 1] + derivs[k - 2]
    return vals, derivs


def gauss_lobatto(q: int) -> QuadratureRule:
    """Q-point Gauss-Lobatto rule on [-1, 1], endpoints included.

    Nodes are the roots of (1 - x^2) P'_{q-1}(x), found by Newton iteration
    from Chebyshev-Gauss-Lobatto initial guesses; weights are
    2 / (q (q-1) P_{q-1}(x)^2).  Exact for polynomials up to degree 2q - 3.
    """
    if q < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    n = q - 1
    x = np.cos(np.pi * np.arange(q) / n)
    x_old = np.full_like(x, 2.0)
    p = np.empty((q, q))
    for _ in range(200):
        if np.max(np.abs(x - x_old)) <= 1e-15:
            break
        x_old = x.copy()
        p[:, 0] = 1.0
        p[:, 1] = x
        for k in range(1, n):
            p[:, k + 1] = ((2 * k + 1) * x * p[:, k] - k * p[:, k - 1]) / (k + 1)
        x = x_old - (x * p[:, n] - p[:, n - 1]) / (q * p[:, n])
    p[:, 0] = 1.0
    p[:, 1] = x
    for k in range(1, n):
        p[:, k + 1] = ((2 * k + 1) * x * p[:, k] - k * p[:, k - 1]) / (k + 1)
    w = 2.0 / (n * q * p[:, n] ** 2)
    order = np.argsort(x)
    return QuadratureRule(x[order], w[order])


@dataclass(frozen=True)
class BasisSet:
    """Basis functions tabulated at the quadrature nodes.

    ``eval[i, q]`` holds m_i at node q.  The zeroth basis function is the
    constant 1 in every provided basis, so the zeroth moment is the particle
    density and spans the collision invariants of isotropic scattering.
    """

    order: int
    eval: np.ndarray
    quad: QuadratureRule
    orthonormal: bool = False

    @property
    def n(self) -> int:
        return self.eval.shape[0]


def legendre_basis(order: int, quad: QuadratureRule, orthonormal: bool = False) -> BasisSet:
    """Legendre polynomials up to ``order`` at the rule's nodes.

    With ``orthonormal=True`` each P_i is scaled by sqrt((2i+1)/2) so that
    <m_i m_j> = delta_ij on [-1, 1]; the raw scaling has <m_i m_i> = 2/(2i+1).
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    vals = legendre_vals(quad.nodes, order)
    if orthonormal:
        vals = vals * np.sqrt((2.0 * np.arange(order + 1) + 1.0) / 2.0)[:, None]
    return BasisSet(order=order, eval=vals, quad=quad, orthonormal=orthonormal)


def monomial_basis(order: int, quad: QuadratureRule) -> BasisSet:
    """Monomials 1, v, ..., v^order at the rule's nodes (any interval)."""
    if order < 0:
        raise ValueError("order must be >= 0")
    vals = quad.nodes[None, :] ** np.arange(order + 1)[:, None]
    return BasisSet(order=order, eval=vals, quad=quad)


def moments_of(density_at_nodes, basis: BasisSet) -> np.ndarray:
    """Moments <m_i g> of nodal density values; supports batches (..., Q) -> (..., n)."""
    g = np.asarray(density_at_nodes, dtype=float)
    if g.shape[-1] != basis.quad.npoints:
        raise ValueError("density values do not match the quadrature rule")
    return (g * basis.quad.weights) @ basis.eval.T


def gram_matrix(basis: BasisSet) -> np.ndarray:
    """<m m^T> under the basis quadrature."""
    return (basis.eval * basis.quad.weights) @ basis.eval.T
