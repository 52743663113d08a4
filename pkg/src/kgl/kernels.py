"""Collision kernels ``B = Phi(|v - v*|) b(cos theta)`` and the collision frequency."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    ConfigurationError,
    DomainError,
    EstimateUnreliableError,
    InternalAssertionError,
    UnsupportedError,
)
from .quadrature import SphereRule, gauss_legendre_interval, split_sphere_rule, sphere_area

__all__ = [
    "KineticPart",
    "AngularPart",
    "CollisionKernel",
    "CbEstimate",
    "eval_kernel",
    "angular_constant_cb",
    "angular_norm",
    "collision_frequency",
    "nu_zero",
    "hard_spheres",
    "maxwell_molecules",
    "power_law_kernel",
    "noncutoff_kernel",
    "kernel_from_config",
    "kernel_descriptor",
]

KINETIC_FAMILIES = ("power_law", "hard_spheres", "constant")
CUTOFF_EXPRS = ("one", "one_plus_cos", "tabulated", "callable")


@dataclass(frozen=True)
class KineticPart:
    """Kinetic factor ``Phi(r) = C_phi r^gamma``.

    ``hard_spheres`` is the power law with gamma = 1 and ``C_phi = C_B``;
    ``constant`` is gamma = 0. A positive ``r_min`` switches the kernel off
    for ``r < r_min``, which gives pointwise-ordered kernel pairs.
    """

    family: str
    gamma: float
    C_phi: float
    r_min: float = 0.0

    def __post_init__(self):
        if self.family not in KINETIC_FAMILIES:
            raise ConfigurationError(f"unknown kinetic family {self.family!r}")
        if not self.C_phi > 0:
            raise DomainError(f"kinetic prefactor must be positive, got {self.C_phi}")
        if self.family == "hard_spheres" and self.gamma != 1.0:
            raise ConfigurationError("hard spheres have gamma = 1")
        if self.family == "constant" and self.gamma != 0.0:
            raise ConfigurationError("constant kinetic part has gamma = 0")
        if self.r_min < 0:
            raise DomainError("r_min must be nonnegative")

    @classmethod
    def power_law(cls, gamma: float, C_phi: float = 1.0) -> "KineticPart":
        return cls("power_law", float(gamma), float(C_phi))

    @classmethod
    def hard_spheres(cls, C_B: float = 1.0) -> "KineticPart":
        return cls("hard_spheres", 1.0, float(C_B))

    @classmethod
    def constant(cls, c: float = 1.0) -> "KineticPart":
        return cls("constant", 0.0, float(c))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.gamma == 0.0:
            out = np.full_like(r, self.C_phi)
        else:
            with np.errstate(divide="ignore"):
                out = self.C_phi * r**self.gamma
        if self.r_min > 0:
            out = np.where(r >= self.r_min, out, 0.0)
        return out

    def truncated(self, r_min: float) -> "KineticPart":
        return KineticPart(self.family, self.gamma, self.C_phi, float(r_min))


@dataclass(frozen=True, eq=False)
class AngularPart:
    """Angular factor ``b(cos theta)``.

    Cutoff parts are ``one``, ``one_plus_cos``, a table on a cos-grid
    (linear interpolation) or an arbitrary callable of ``cos theta``.
    Singular parts evaluate ``regular_factor(cos) * theta^-(N-1+alpha)``;
    ``c_b`` is the lower constant of that bound and ``C_b`` an optional
    user-supplied upper constant (stored, never computed).
    """

    family: str
    expr: str = "one"
    alpha: float = 0.0
    c_b: Optional[float] = None
    C_b: Optional[float] = None
    regular_factor: Optional[Callable] = None
    table: Optional[tuple] = None
    fn: Optional[Callable] = None

    def __post_init__(self):
        if self.family == "cutoff":
            if self.expr not in CUTOFF_EXPRS:
                raise ConfigurationError(f"unknown cutoff expression {self.expr!r}")
            if self.expr == "tabulated":
                c, vals = self.table
                if np.any(np.diff(c) <= 0) or np.any(np.asarray(vals) < 0):
                    raise DomainError("tabulated b needs increasing cos-grid and nonnegative values")
        elif self.family == "singular":
            if not 0.0 <= self.alpha < 2.0:
                raise DomainError(f"alpha must lie in [0, 2), got {self.alpha}")
            if self.c_b is None or not self.c_b > 0:
                raise DomainError("singular angular part needs a positive c_b")
        else:
            raise ConfigurationError(f"unknown angular family {self.family!r}")

    @classmethod
    def one(cls) -> "AngularPart":
        return cls("cutoff", "one")

    @classmethod
    def one_plus_cos(cls) -> "AngularPart":
        return cls("cutoff", "one_plus_cos")

    @classmethod
    def tabulated(cls, cos_grid, values) -> "AngularPart":
        return cls("cutoff", "tabulated", table=(np.asarray(cos_grid, float), np.asarray(values, float)))

    @classmethod
    def from_callable(cls, fn: Callable) -> "AngularPart":
        return cls("cutoff", "callable", fn=fn)

    @classmethod
    def singular(cls, alpha: float, c_b: float = 1.0, regular_factor: Optional[Callable] = None,
                 C_b: Optional[float] = None) -> "AngularPart":
        return cls("singular", "theta_power", alpha=float(alpha), c_b=float(c_b),
                   regular_factor=regular_factor, C_b=C_b)

    @property
    def is_cutoff(self) -> bool:
        return self.family == "cutoff"

    @property
    def is_constant(self) -> bool:
        return self.family == "cutoff" and self.expr == "one"

    def __call__(self, cos_theta, dim: int = 3):
        c = np.asarray(cos_theta, dtype=float)
        if self.family == "singular":
            theta = np.arccos(np.clip(c, -1.0, 1.0))
            return self.of_theta(theta, dim)
        if self.expr == "one":
            return np.ones_like(c)
        if self.expr == "one_plus_cos":
            return 1.0 + c
        if self.expr == "tabulated":
            return np.interp(c, *self.table)
        return np.asarray(self.fn(c), dtype=float)

    def of_theta(self, theta, dim: int = 3):
        """b as a function of the deviation angle (exact near theta = 0)."""
        theta = np.asarray(theta, dtype=float)
        if self.family == "cutoff":
            return self(np.cos(theta), dim)
        if np.any(theta <= 0.0):
            raise DomainError("singular angular kernel evaluated at theta = 0")
        reg = self.c_b if self.regular_factor is None else self.regular_factor(np.cos(theta))
        return reg * theta ** (-(dim - 1 + self.alpha))


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """``B(r, cos theta) = Phi(r) b(cos theta)`` in dimension N.

    ``hypPhi_params = (R, c_phi)`` records a lower bound ``Phi(r) >= c_phi``
    for ``r >= R``; it is checked by sampling at construction.
    """

    kinetic: KineticPart
    angular: AngularPart
    dimension: int = 3
    hypPhi_params: Optional[tuple] = None

    def __post_init__(self):
        N = self.dimension
        if N < 2:
            raise DomainError(f"dimension must be >= 2, got {N}")
        if not (-N < self.kinetic.gamma <= 1.0):
            raise DomainError(f"gamma must lie in (-{N}, 1], got {self.kinetic.gamma}")
        if self.hypPhi_params is not None:
            R, c_phi = self.hypPhi_params
            if R < 0 or not c_phi > 0:
                raise DomainError("hypPhi needs R >= 0 and c_phi > 0")
            r = np.linspace(max(R, self.kinetic.r_min), R + 50.0, 2001)
            if np.any(self.kinetic(r) < c_phi * (1.0 - 1e-12)):
                raise DomainError(f"Phi(r) >= {c_phi} fails for some r >= {R}")

    @property
    def gamma(self) -> float:
        return self.kinetic.gamma

    @property
    def is_cutoff(self) -> bool:
        return self.angular.is_cutoff

    def phi(self, r):
        return self.kinetic(r)

    def b(self, cos_theta):
        return self.angular(cos_theta, self.dimension)


def hard_spheres(C_B: float = 1.0, N: int = 3) -> CollisionKernel:
    return CollisionKernel(KineticPart.hard_spheres(C_B), AngularPart.one(), N)


def maxwell_molecules(N: int = 3, angular: Optional[AngularPart] = None) -> CollisionKernel:
    return CollisionKernel(KineticPart.constant(1.0), angular or AngularPart.one(), N)


def power_law_kernel(gamma: float, C_phi: float = 1.0, N: int = 3,
                     angular: Optional[AngularPart] = None) -> CollisionKernel:
    return CollisionKernel(KineticPart.power_law(gamma, C_phi), angular or AngularPart.one(), N)


def noncutoff_kernel(gamma: float, alpha: float, c_b: float = 1.0, N: int = 3) -> CollisionKernel:
    return CollisionKernel(KineticPart.power_law(gamma), AngularPart.singular(alpha, c_b), N)


def eval_kernel(k: CollisionKernel, r, cos_theta):
    """``Phi(r) * b(cos theta)``; a singular angular part is undefined at cos = 1."""
    r = np.asarray(r, dtype=float)
    c = np.asarray(cos_theta, dtype=float)
    if np.any(r < 0):
        raise DomainError("relative speed must be nonnegative")
    if np.any(np.abs(c) > 1.0 + 1e-14):
        raise DomainError("cos(theta) must lie in [-1, 1]")
    if not k.is_cutoff and np.any(c >= 1.0):
        raise DomainError("singular angular kernel evaluated at cos(theta) = 1")
    out = k.phi(r) * k.b(c)
    return float(out) if out.ndim == 0 else out


def angular_norm(a: AngularPart, N: int = 3, n_nodes: int = 256) -> float:
    """``int_{S^{N-1}} b(sigma . e) d sigma`` for a cutoff angular part."""
    if not a.is_cutoff:
        raise UnsupportedError("angular integral of a non-cutoff kernel is infinite")
    if a.is_constant:
        return sphere_area(N)
    theta, w = gauss_legendre_interval(n_nodes, 0.0, math.pi)
    vals = a.of_theta(theta, N) * np.sin(theta) ** (N - 2)
    return sphere_area(N - 1) * float(w @ vals)


class CbEstimate(NamedTuple):
    value: float
    cos_angle: float  # minimising sigma_1 . sigma_2


def _split_circle(degree: int) -> SphereRule:
    n = degree // 2 + 2
    xs, ws = zip(*(gauss_legendre_interval(n, lo, lo + math.pi) for lo in (0.0, math.pi)))
    phi = np.concatenate(xs)
    return SphereRule(2, degree, np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.concatenate(ws))


def _cb_integral(a: AngularPart, beta: float, rule: SphereRule) -> float:
    # sigma_1 - sigma_2 is along the last axis, so the min switches on the
    # hyperplane where the rule is split
    s1 = np.zeros(rule.dim)
    s1[0], s1[-1] = math.cos(beta), math.sin(beta)
    s2 = s1.copy()
    s2[-1] = -s2[-1]
    c1 = np.clip(rule.nodes @ s1, -1.0, 1.0)
    c2 = np.clip(rule.nodes @ s2, -1.0, 1.0)
    vals = np.minimum(a(c1, rule.dim), a(c2, rule.dim))
    return float(rule.weights @ vals)


def angular_constant_cb(a: AngularPart, sphere_rule: SphereRule, search_grid: int = 32,
                        rtol: float = 1e-6) -> CbEstimate:
    """Estimate ``c_b = inf_{s1,s2} int min{b(s1.s3), b(s2.s3)} ds3``.

    Rotational invariance reduces the pair to the scalar ``t = s1 . s2``; the
    pair is placed symmetrically about a coordinate hyperplane and the
    s3-integral uses a product rule split on that hyperplane, of the same
    degree as ``sphere_rule``. The coarse scan over ``t`` is followed by
    bounded scalar refinement; the value is recomputed at doubled degree and
    must agree to ``rtol``.
    """
    if search_grid < 8:
        raise ConfigurationError("search_grid must be >= 8")
    split = {3: split_sphere_rule, 2: _split_circle}.get(sphere_rule.dim)
    if split is None:
        raise ConfigurationError("c_b estimation is implemented for N in {2, 3}")
    if not a.is_cutoff:
        raise UnsupportedError("c_b of a singular kernel is its declared constant")
    rule = split(max(sphere_rule.degree, 8))
    # beta is half the angle between s1 and s2; beta = 0 (s1 = s2) is excluded
    betas = 0.5 * math.pi * np.arange(1, search_grid + 1) / search_grid
    vals = np.array([_cb_integral(a, b, rule) for b in betas])
    i = int(np.argmin(vals))
    lo = betas[i - 1] if i > 0 else 0.5 * betas[0]
    hi = betas[min(i + 1, len(betas) - 1)]
    beta, value = betas[i], vals[i]
    if hi > lo:
        res = optimize.minimize_scalar(lambda b: _cb_integral(a, b, rule), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10})
        if res.fun < value:
            beta, value = res.x, res.fun
    check = _cb_integral(a, beta, split(2 * rule.degree + 1))
    if not (value > 0 and check > 0):
        raise DomainError("c_b is not positive for this angular kernel")
    if abs(check - value) > rtol * abs(check):
        raise EstimateUnreliableError(
            f"c_b estimate unstable under refinement: {value!r} vs {check!r}")
    return CbEstimate(check, math.cos(2.0 * beta))


def _radial_convolution(k: CollisionKernel, a: float) -> float:
    """``int Phi(|z|) exp(-|v - z|^2) dz`` for |v| = a."""
    N = k.dimension
    upper = a + 12.0
    if N == 3:
        def f(rho):
            x = 4.0 * rho * a
            shell = 2.0 if x < 1e-300 else -math.expm1(-x) / (0.5 * x)
            return float(k.phi(rho)) * rho**2 * math.exp(-(rho - a) ** 2) * shell
        pref = 2.0 * math.pi
    elif N == 2:
        def f(rho):
            return float(k.phi(rho)) * rho * math.exp(-(rho - a) ** 2) * special.i0e(2.0 * rho * a)
        pref = 2.0 * math.pi
    else:
        raise ConfigurationError(f"collision frequency implemented for N in {{2, 3}}, got {N}")
    lo = k.kinetic.r_min
    upper = max(upper, lo + 12.0)
    pts = [a] if lo < a < upper else None
    val, _ = integrate.quad(f, lo, upper, points=pts, epsabs=0.0, epsrel=1e-13, limit=400)
    return pref * val


def collision_frequency(k: CollisionKernel, v) -> float | np.ndarray:
    """``nu(v) = int int Phi(|v - v*|) b(cos theta) M(v*) dv* d sigma`` with ``M = exp(-|v|^2)``.

    The sigma-integral factors out as the angular norm of b; the v*-integral
    depends on |v| only and reduces to one radial quadrature.
    """
    if not k.is_cutoff:
        raise UnsupportedError("collision frequency is infinite for a non-cutoff kernel")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != k.dimension:
        raise ConfigurationError(f"velocity must have {k.dimension} components")
    bn = angular_norm(k.angular, k.dimension)
    speeds = np.linalg.norm(v, axis=-1)
    out = np.vectorize(lambda a: bn * _radial_convolution(k, float(a)))(speeds)
    return float(out) if out.ndim == 0 else out


def nu_zero(k: CollisionKernel, r_max: float = 6.0, samples: int = 61) -> float:
    """Minimum of the collision frequency; for gamma >= 0 it sits at v = 0.

    The claim is verified by sampling nu along a ray.
    """
    if not k.is_cutoff:
        raise UnsupportedError("nu_0 requires a cutoff angular part")
    if k.gamma < 0:
        raise UnsupportedError("nu_0 at the origin is only asserted for gamma >= 0")
    e = np.zeros(k.dimension)
    e[0] = 1.0
    radii = np.linspace(0.0, r_max, samples)
    nus = collision_frequency(k, radii[:, None] * e)
    if nus.min() < nus[0] * (1.0 - 1e-11):
        raise InternalAssertionError(
            f"sampled minimum of nu at |v| = {radii[nus.argmin()]} is below nu(0)")
    return float(nus[0])


def kernel_from_config(cfg: dict, N: int = 3) -> CollisionKernel:
    """Build a kernel from the config-file description."""
    kin = cfg.get("kinetic", {})
    ang = cfg.get("angular", {})
    fam = kin.get("family", "hard_spheres")
    if fam == "hard_spheres":
        kp = KineticPart.hard_spheres(kin.get("C_phi", 1.0))
    elif fam == "constant":
        kp = KineticPart.constant(kin.get("C_phi", 1.0))
    elif fam == "power_law":
        kp = KineticPart.power_law(kin.get("gamma", 1.0), kin.get("C_phi", 1.0))
    else:
        raise ConfigurationError(f"unknown kinetic family {fam!r}")
    afam = ang.get("family", "cutoff")
    expr = ang.get("expr", "one" if afam == "cutoff" else "theta_power")
    if afam == "cutoff":
        if expr == "one":
            ap = AngularPart.one()
        elif expr == "one_plus_cos":
            ap = AngularPart.one_plus_cos()
        else:
            raise ConfigurationError(f"cutoff expression {expr!r} is not available in configs")
    elif afam == "singular":
        if expr != "theta_power":
            raise ConfigurationError("singular kernels use expr 'theta_power'")
        ap = AngularPart.singular(ang.get("alpha", 0.5), ang.get("c_b", 1.0), C_b=ang.get("C_b"))
    else:
        raise ConfigurationError(f"unknown angular family {afam!r}")
    return CollisionKernel(kp, ap, N)


def kernel_descriptor(k: CollisionKernel) -> dict:
    a = k.angular
    ang = {"family": a.family, "expr": a.expr}
    if a.family == "singular":
        ang.update(alpha=a.alpha, c_b=a.c_b)
        if a.C_b is not None:
            ang["C_b"] = a.C_b
    return {
        "dimension": k.dimension,
        "kinetic": {"family": k.kinetic.family, "gamma": k.kinetic.gamma, "C_phi": k.kinetic.C_phi,
                    "r_min": k.kinetic.r_min},
        "angular": ang,
    }
