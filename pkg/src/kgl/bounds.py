"""Explicit lower bounds for the spectral gap and the scaling law in (rho, T)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, InternalAssertionError
from .kernels import CollisionKernel, hard_spheres, nu_zero
from .quadrature import gauss_legendre_interval, sphere_area
from .states import GaussianState, reference_state

__all__ = [
    "BoundReport",
    "explicit_gap_constant",
    "lambda_zero",
    "chain_bound",
    "optimized_gap_bound",
    "scaling_law",
    "bound_report",
]

# sphere area of S^2 used by the c_b >= |S^2| step
_S2 = 4.0 * math.pi


def explicit_gap_constant(c_phi: float, c_b: float, R: float, N: int = 3) -> float:
    """``c_phi c_b exp(-4 R^2) / (32 |S^{N-1}|)``."""
    if not (c_phi > 0 and c_b > 0):
        raise DomainError("c_phi and c_b must be positive")
    if R < 0:
        raise DomainError("R must be nonnegative")
    return c_phi * c_b * math.exp(-4.0 * R * R) / (32.0 * sphere_area(N))


def lambda_zero(N: int = 3) -> float:
    """Gap of the Maxwell-molecule reference operator used in the bound: ``(pi/2)^(3/2) 4 pi / 3``.

    The sine integral is evaluated by Gauss-Legendre and must match 4/3.
    """
    if N != 3:
        raise DomainError("lambda_0 is provided for N = 3")
    x, w = gauss_legendre_interval(16, 0.0, math.pi)
    s3 = float(w @ np.sin(x) ** 3)
    if abs(s3 - 4.0 / 3.0) > 1e-12:
        raise InternalAssertionError(f"sin^3 integral {s3!r} differs from 4/3")
    quad_form = math.pi * (math.pi / 2) ** 1.5 * s3
    closed = (math.pi / 2) ** 1.5 * 4.0 * math.pi / 3.0
    if abs(quad_form - closed) > 1e-12 * closed:
        raise InternalAssertionError("lambda_0 quadrature and closed form disagree")
    return closed


def chain_bound(R: float, gamma: float) -> float:
    """``2^(gamma/2) (R^gamma exp(-4R^2) / 32) (4 pi / 3)``: the bound at (1, 0, 1) for c_phi = R^gamma."""
    return 2.0 ** (gamma / 2) * (R**gamma * math.exp(-4.0 * R * R) / 32.0) * (4.0 * math.pi / 3.0)


def optimized_gap_bound(gamma: float) -> tuple[float, float]:
    """Maximise the chain bound over R: ``R* = sqrt(gamma / 8)``.

    The closed form is cross-checked by bounded scalar maximisation
    (agreement 1e-10 in the bound, 1e-8 in R*).
    """
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    R_star = math.sqrt(gamma / 8.0)
    bound = 2.0 ** (gamma / 2) * math.pi * (gamma / 8.0) ** (gamma / 2) * math.exp(-gamma / 2) / 24.0
    res = optimize.minimize_scalar(lambda R: -chain_bound(R, gamma), bounds=(1e-9, 3.0),
                                   method="bounded", options={"xatol": 1e-12})
    if abs(-res.fun - bound) > 1e-10 or abs(chain_bound(R_star, gamma) - bound) > 1e-14:
        raise InternalAssertionError("optimized bound disagrees with numerical maximisation")
    return R_star, bound


def optimized_bound_limit_zero() -> float:
    """Limit of the optimized bound as gamma -> 0+ (the factor (gamma/8)^(gamma/2) tends to 1)."""
    return math.pi / 24.0


def scaling_law(lambda_ref: float, gamma: float, N: int, s: GaussianState) -> float:
    """Gap at state ``s`` from the gap at ``(1, 0, 1)``: ``rho T^((N + gamma)/2) lambda_ref``."""
    return s.rho * s.T ** ((N + gamma) / 2.0) * lambda_ref


@dataclass
class BoundReport:
    gamma: float
    C_Phi_b: float
    lambda0: float
    paper_chain_bound: float  # chain at (1, 0, 1) with R = R*
    literal_product_bound: float  # C_{Phi,b} lambda0 at the reference state
    optimized_R: float
    optimized_bound: float
    nu0: Optional[float]
    state_scaled: dict = field(default_factory=dict)
    chain_samples: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def bound_report(gamma: float, states: Optional[dict] = None, c_b: float = _S2,
                 kernel: Optional[CollisionKernel] = None) -> BoundReport:
    """Every explicit constant for a power-law kernel ``|w|^gamma`` with ``b >= 1``.

    With ``R`` optimized, ``c_phi = R^gamma`` and ``c_b = |S^2|``, the
    constant ``C_{Phi,b} lambda0`` is the bound at the reference state;
    transported to ``(1, 0, 1)`` by the scaling law it equals the chain value.
    """
    R, opt = optimized_gap_bound(gamma)
    lam0 = lambda_zero(3)
    C = explicit_gap_constant(R**gamma, c_b, R, 3)
    samples = [(float(r), chain_bound(float(r), gamma)) for r in np.linspace(0.05, 1.5, 20)]
    if any(v > opt * (1 + 1e-12) for _, v in samples):
        raise InternalAssertionError("sampled chain value exceeds the optimized bound")
    k = kernel or (hard_spheres() if gamma == 1.0 else None)
    nu0 = nu_zero(k) if k is not None else None
    scaled = {}
    for name, s in (states or {"reference": reference_state(3)}).items():
        scaled[name] = scaling_law(opt, gamma, 3, s)
    return BoundReport(gamma, C, lam0, opt, C * lam0, R, opt, nu0, scaled, samples)
