"""Quadrature rules for Gaussian-weighted velocity integrals and sphere integrals.

All velocity integrals against the reference Maxwellian ``exp(-|v|^2)`` are
computed with the Gaussian weight absorbed into the rule, so callers only ever
evaluate smooth factors such as ``g/M``; ``1/M`` is never formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError

__all__ = [
    "GaussHermiteRule",
    "SphereRule",
    "GradedAngularRule",
    "RadialRule",
    "build_gauss_hermite",
    "build_sphere_rule",
    "build_graded_angular",
    "build_radial_rule",
    "gauss_legendre_interval",
    "sphere_area",
]


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1}."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True, eq=False)
class GaussHermiteRule:
    """Tensor Gauss-Hermite rule for the weight ``exp(-a |v|^2)`` on R^N."""

    order: int
    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    a: float = 1.0

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))

    def scaled(self, a: float) -> "GaussHermiteRule":
        """Same rule transported to the weight ``exp(-a |v|^2)``."""
        s = math.sqrt(self.a / a)
        return GaussHermiteRule(self.order, self.dim, self.nodes * s,
                                self.weights * s ** self.dim, a)


@dataclass(frozen=True, eq=False)
class SphereRule:
    """Rule on S^{N-1}; weights sum to the sphere area."""

    dim: int
    degree: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True, eq=False)
class GradedAngularRule:
    """Rule in the deviation angle theta on (0, pi], graded toward theta = 0.

    Outer panels are ``[pi 2^-(k+1), pi 2^-k]`` with Gauss-Legendre nodes; the
    innermost panel ``[0, pi 2^-(panels-1)]`` uses Gauss-Jacobi nodes for the
    factor ``theta^(1 - alpha)`` so that integrands of the form
    ``theta^(1-alpha) * smooth`` are integrated to full order.
    """

    alpha: float
    panels: int
    panel_order: int
    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray = field(repr=False)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True, eq=False)
class RadialRule:
    """Rule for ``int_0^inf r^power exp(-a r^2) f(r) dr`` (exact for f polynomial in r^2)."""

    power: float
    a: float
    order: int
    nodes: np.ndarray
    weights: np.ndarray


def build_gauss_hermite(N: int, q: int) -> GaussHermiteRule:
    """Tensor Gauss-Hermite rule with ``q`` nodes per axis for ``exp(-|v|^2)``.

    Nodes come from the Golub-Welsch eigenproblem of the Hermite Jacobi matrix
    (``scipy.special.roots_hermite``), refined by Newton steps.
    """
    if not 2 <= q <= 64:
        raise DomainError(f"Gauss-Hermite order must lie in [2, 64], got {q}")
    if N < 1:
        raise DomainError(f"dimension must be positive, got {N}")
    x, w = special.roots_hermite(q)
    grids = np.meshgrid(*([x] * N), indexing="ij")
    wgrids = np.meshgrid(*([w] * N), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return GaussHermiteRule(q, N, nodes, weights)


def gauss_legendre_interval(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _product_sphere(n_polar: int, n_azimuth: int, cos_ranges=((-1.0, 1.0),)) -> tuple[np.ndarray, np.ndarray]:
    cs, cw = [], []
    for lo, hi in cos_ranges:
        c, w = gauss_legendre_interval(n_polar, lo, hi)
        cs.append(c)
        cw.append(w)
    c = np.concatenate(cs)
    wc = np.concatenate(cw)
    phi = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    C, P = np.meshgrid(c, phi, indexing="ij")
    S = np.sqrt(np.clip(1.0 - C**2, 0.0, None))
    nodes = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
    weights = np.repeat(wc, n_azimuth) * (2.0 * math.pi / n_azimuth)
    return nodes, weights


def build_sphere_rule(N: int, degree: int) -> SphereRule:
    """Product rule on S^{N-1} exact for polynomials of the given degree.

    N = 3: Gauss-Legendre in cos(theta) times a uniform azimuthal rule.
    N = 2: uniform angles.
    """
    if degree < 0 or degree > 35:
        raise ConfigurationError(f"sphere degree must lie in [0, 35], got {degree}")
    return _sphere_rule_unchecked(N, degree)


def _sphere_rule_unchecked(N: int, degree: int) -> SphereRule:
    n_az = degree + 1
    if N == 3:
        n_pol = degree // 2 + 1
        nodes, weights = _product_sphere(n_pol, n_az)
    elif N == 2:
        phi = 2.0 * math.pi * np.arange(n_az) / n_az
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        weights = np.full(n_az, 2.0 * math.pi / n_az)
    else:
        raise ConfigurationError(f"sphere rules are provided for N in {{2, 3}}, got {N}")
    return SphereRule(N, degree, nodes, weights)


def split_sphere_rule(degree: int) -> SphereRule:
    """N = 3 product rule with the polar interval split at the equator.

    Integrands with a kink on the plane z = 0 are piecewise smooth on the two
    halves, so the split rule keeps spectral accuracy.
    """
    n_pol = degree // 2 + 1
    nodes, weights = _product_sphere(n_pol, degree + 1, ((-1.0, 0.0), (0.0, 1.0)))
    return SphereRule(3, degree, nodes, weights)


def build_graded_angular(alpha: float, panels: int, panel_order: int = 8) -> GradedAngularRule:
    if alpha >= 2.0 or alpha < 0.0:
        raise DomainError(f"alpha must lie in [0, 2), got {alpha}")
    if panels < 4:
        raise ConfigurationError(f"at least 4 panels are required, got {panels}")
    if alpha == 0.0:
        edges = np.linspace(0.0, math.pi, panels + 1)
        xs, ws = zip(*(gauss_legendre_interval(panel_order, edges[k], edges[k + 1])
                       for k in range(panels)))
        return GradedAngularRule(alpha, panels, panel_order, np.concatenate(xs),
                                 np.concatenate(ws), edges)
    edges = math.pi * 0.5 ** np.arange(panels)[::-1]
    edges = np.concatenate([[0.0], edges])
    xs, ws = [], []
    # innermost panel: Gauss-Jacobi with weight t^(1-alpha) on [0, h]
    h = edges[1]
    beta = 1.0 - alpha
    xj, wj = special.roots_jacobi(panel_order, 0.0, beta)
    t = 0.5 * (xj + 1.0)
    theta0 = h * t
    w0 = wj * (0.5 ** (1.0 + beta)) * h ** (1.0 + beta) / theta0**beta
    xs.append(theta0)
    ws.append(w0)
    for k in range(1, panels):
        x, w = gauss_legendre_interval(panel_order, edges[k], edges[k + 1])
        xs.append(x)
        ws.append(w)
    return GradedAngularRule(alpha, panels, panel_order, np.concatenate(xs),
                             np.concatenate(ws), edges)


def build_radial_rule(power: float, order: int, a: float = 1.0) -> RadialRule:
    """Generalized Gauss-Laguerre rule in ``s = a r^2`` for ``r^power exp(-a r^2) dr``."""
    if power <= -1.0:
        raise DomainError(f"radial power must exceed -1, got {power}")
    alpha = 0.5 * (power - 1.0)
    s, w = special.roots_genlaguerre(order, alpha)
    r = np.sqrt(s / a)
    weights = 0.5 * a ** (-(power + 1.0) / 2.0) * w
    return RadialRule(power, a, order, r, weights)
