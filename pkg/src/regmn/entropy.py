"""Kinetic entropy densities and their convex (Legendre) duals.

Four classical entropy densities -- Maxwell-Boltzmann, Bose-Einstein,
Fermi-Dirac, quadratic -- together with first and second derivatives of
their duals.  These scalar functions are the building blocks of every
objective, gradient, and Hessian in the dual closure solver.

All functions are stateless, accept scalars or numpy arrays, and return
numpy scalars/arrays of matching shape.  Values of ``z`` live in the
density domain (e.g. [0, inf) for Maxwell-Boltzmann, [0, 1] for
Fermi-Dirac); values of ``y`` live in the domain of the dual.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# exp() overflows float64 just above 709.78; keep a little slack so that
# downstream products with quadrature weights stay finite.
MAX_EXP_ARG = 709.0


class DomainError(ValueError):
    """Argument outside the domain of an entropy density or its dual."""


class EntropyKind(enum.Enum):
    MAXWELL_BOLTZMANN = "maxwell-boltzmann"
    BOSE_EINSTEIN = "bose-einstein"
    FERMI_DIRAC = "fermi-dirac"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class EntropyModel:
    """An entropy density eta together with the bounds of its domain."""

    kind: EntropyKind
    domain_lo: float
    domain_hi: float

    @classmethod
    def maxwell_boltzmann(cls):
        return cls(EntropyKind.MAXWELL_BOLTZMANN, 0.0, np.inf)

    @classmethod
    def bose_einstein(cls):
        return cls(EntropyKind.BOSE_EINSTEIN, 0.0, np.inf)

    @classmethod
    def fermi_dirac(cls):
        return cls(EntropyKind.FERMI_DIRAC, 0.0, 1.0)

    @classmethod
    def quadratic(cls):
        return cls(EntropyKind.QUADRATIC, -np.inf, np.inf)

    @classmethod
    def from_name(cls, name: str) -> "EntropyModel":
        key = name.strip().lower()
        table = {
            "mb": cls.maxwell_boltzmann,
            "maxwell-boltzmann": cls.maxwell_boltzmann,
            "be": cls.bose_einstein,
            "bose-einstein": cls.bose_einstein,
            "fd": cls.fermi_dirac,
            "fermi-dirac": cls.fermi_dirac,
            "quadratic": cls.quadratic,
            "quad": cls.quadratic,
        }
        if key not in table:
            raise ValueError(f"unknown entropy model {name!r}")
        return table[key]()


def _xlogx(t):
    """t*log(t) with the limit value 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0.0, t, 1.0)
    return np.where(t > 0.0, t * np.log(safe), 0.0)


def _sigmoid(y):
    t = np.exp(-np.abs(y))
    return np.where(y >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def _softplus(y):
    return np.maximum(y, 0.0) + np.log1p(np.exp(-np.abs(y)))


def _check(cond, message):
    if not np.all(cond):
        raise DomainError(message)


def eta(model: EntropyModel, z):
    """Entropy density eta(z); boundary values are the analytic limits."""
    z = np.asarray(z, dtype=float)
    kind = model.kind
    if kind is EntropyKind.MAXWELL_BOLTZMANN:
        _check(z >= 0.0, "Maxwell-Boltzmann entropy needs z >= 0")
        return _xlogx(z) - z
    if kind is EntropyKind.BOSE_EINSTEIN:
        _check(z >= 0.0, "Bose-Einstein entropy needs z >= 0")
        return _xlogx(z) - (1.0 + z) * np.log1p(z)
    if kind is EntropyKind.FERMI_DIRAC:
        _check((z >= 0.0) & (z <= 1.0), "Fermi-Dirac entropy needs 0 <= z <= 1")
        return _xlogx(z) + _xlogx(1.0 - z)
    return 0.5 * z * z


def eta_prime(model: EntropyModel, z):
    """Derivative eta'(z) on the interior of the domain."""
    z = np.asarray(z, dtype=float)
    kind = model.kind
    if kind is EntropyKind.MAXWELL_BOLTZMANN:
        _check(z > 0.0, "eta' of Maxwell-Boltzmann needs z > 0")
        return np.log(z)
    if kind is EntropyKind.BOSE_EINSTEIN:
        _check(z > 0.0, "eta' of Bose-Einstein needs z > 0")
        return np.log(z) - np.log1p(z)
    if kind is EntropyKind.FERMI_DIRAC:
        _check((z > 0.0) & (z < 1.0), "eta' of Fermi-Dirac needs 0 < z < 1")
        return np.log(z) - np.log1p(-z)
    return z


def eta_star_arg_ok(model: EntropyModel, y):
    """Elementwise mask of arguments where the dual is float64-evaluable.

    Bose-Einstein requires y < 0; the exponential-family duals additionally
    refuse arguments whose exp() would overflow.
    """
    y = np.asarray(y, dtype=float)
    kind = model.kind
    ok = np.isfinite(y)
    if kind is EntropyKind.MAXWELL_BOLTZMANN:
        return ok & (y <= MAX_EXP_ARG)
    if kind is EntropyKind.BOSE_EINSTEIN:
        return ok & (y < 0.0)
    return ok


def _checked(model, y):
    y = np.asarray(y, dtype=float)
    _check(eta_star_arg_ok(model, y),
           f"argument outside the dual domain for {model.kind.value}")
    return y


def eta_star(model: EntropyModel, y):
    """Legendre dual eta_*(y)."""
    y = _checked(model, y)
    kind = model.kind
    if kind is EntropyKind.MAXWELL_BOLTZMANN:
        return np.exp(y)
    if kind is EntropyKind.BOSE_EINSTEIN:
        return -np.log(-np.expm1(y))
    if kind is EntropyKind.FERMI_DIRAC:
        return _softplus(y)
    return 0.5 * y * y


def eta_star_prime(model: EntropyModel, y):
    """First derivative of the dual; this is the ansatz density value."""
    y = _checked(model, y)
    return eta_star_derivatives(model, y)[0]


def eta_star_second(model: EntropyModel, y):
    """Second derivative of the dual; strictly positive on its domain."""
    y = _checked(model, y)
    return eta_star_derivatives(model, y)[1]


def eta_star_derivatives(model: EntropyModel, y):
    """(eta_*', eta_*'') without domain checks; callers guarantee validity.

    For Maxwell-Boltzmann the two derivatives coincide and the *same* array
    is returned twice; treat results as read-only.
    """
    kind = model.kind
    if kind is EntropyKind.MAXWELL_BOLTZMANN:
        g = np.exp(y)
        return g, g
    if kind is EntropyKind.BOSE_EINSTEIN:
        z = 1.0 / np.expm1(-y)
        return z, z * (1.0 + z)
    if kind is EntropyKind.FERMI_DIRAC:
        s = _sigmoid(y)
        return s, s * _sigmoid(-y)
    y = np.asarray(y, dtype=float)
    return y, np.ones_like(y)


def eta_star_with_overflow(model: EntropyModel, y):
    """Evaluate eta_* elementwise, mapping domain violations and float
    overflow to +inf instead of raising.  Line searches treat +inf as a
    rejected step."""
    y = np.asarray(y, dtype=float)
    kind = model.kind
    with np.errstate(over="ignore", divide="ignore"):
        if kind is EntropyKind.MAXWELL_BOLTZMANN:
            return np.exp(y)
        if kind is EntropyKind.BOSE_EINSTEIN:
            # 1 - e^y clamps to 0 for y >= 0, giving -log(0) = +inf there.
            return -np.log(-np.expm1(np.minimum(y, 0.0)))
        if kind is EntropyKind.FERMI_DIRAC:
            return _softplus(y)
        return 0.5 * y * y
