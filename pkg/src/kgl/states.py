"""Maxwellian states, velocity moments and the H functional."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError, DomainError, NegativityError
from .quadrature import gauss_legendre_interval

__all__ = [
    "GaussianState",
    "reference_state",
    "maxwellian_eval",
    "moments_of",
    "h_functional",
    "state_from_config",
]

NEG_BAND = 1e-12
MASS_TOL = 1e-14


@dataclass(frozen=True)
class GaussianState:
    rho: float
    u: tuple
    T: float

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError(f"density must be positive, got {self.rho}")
        if not self.T > 0:
            raise DomainError(f"temperature must be positive, got {self.T}")
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dim(self) -> int:
        return len(self.u)

    def as_dict(self) -> dict:
        return {"rho": self.rho, "u": list(self.u), "T": self.T}


def reference_state(N: int = 3) -> GaussianState:
    """The state whose Maxwellian is ``exp(-|v|^2)``."""
    return GaussianState(math.pi ** (N / 2), (0.0,) * N, 0.5)


def maxwellian_eval(s: GaussianState, v):
    """``rho (2 pi T)^(-N/2) exp(-|v - u|^2 / (2T))`` at one or many velocities."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != s.dim:
        raise ConfigurationError(f"velocity must have {s.dim} components")
    d2 = np.sum((v - np.asarray(s.u)) ** 2, axis=-1)
    out = s.rho * (2.0 * math.pi * s.T) ** (-s.dim / 2) * np.exp(-d2 / (2.0 * s.T))
    return float(out) if out.ndim == 0 else out


def _box_rule(N: int, n: int = 64, half_width: float = 10.0):
    x, w = gauss_legendre_interval(n, -half_width, half_width)
    grids = np.meshgrid(*([x] * N), indexing="ij")
    wg = np.meshgrid(*([w] * N), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    return nodes, weights


def _samples(f, N: int):
    """Return (velocities, cell weights, values) for a callable or a grid."""
    if callable(f):
        nodes, weights = _box_rule(N)
        return nodes, weights, np.asarray(f(nodes), dtype=float)
    # duck-typed DistributionGrid
    return f.velocities, np.full(f.values.size, f.cell_volume), np.asarray(f.values, float).ravel()


def moments_of(f: Union[Callable, "object"], N: int = 3) -> GaussianState:
    """Mass, mean velocity and temperature of a density.

    ``f`` is either a vectorised callable ``f(v)`` with ``v`` of shape
    ``(..., N)`` (integrated by Gauss-Legendre on ``[-10, 10]^N``) or a
    distribution grid (integrated by cell sums).
    """
    v, w, vals = _samples(f, N)
    rho = float(w @ vals)
    if rho <= MASS_TOL:
        raise DomainError(f"degenerate mass {rho!r}")
    u = (w * vals) @ v / rho
    d2 = np.sum((v - u) ** 2, axis=-1)
    T = float((w * vals) @ d2) / (v.shape[-1] * rho)
    return GaussianState(rho, tuple(u), T)


def h_functional(f, N: int = 3) -> float:
    """``int f log f`` with ``0 log 0 = 0``.

    Values in ``[-1e-12, 0]`` are round-off and count as zero; anything more
    negative raises :class:`NegativityError`.
    """
    _, w, vals = _samples(f, N)
    if vals.size and vals.min() < -NEG_BAND:
        raise NegativityError(f"density has value {vals.min()!r} below the round-off band")
    pos = vals > 0.0
    return float(w[pos] @ (vals[pos] * np.log(vals[pos])))


def state_from_config(obj, N: int = 3) -> GaussianState:
    if obj == "reference":
        return reference_state(N)
    if not isinstance(obj, dict):
        raise ConfigurationError(f"state must be 'reference' or an object, got {obj!r}")
    unknown = set(obj) - {"rho", "u", "T"}
    if unknown:
        raise ConfigurationError(f"unknown state keys {sorted(unknown)}")
    try:
        return GaussianState(obj["rho"], tuple(obj.get("u", (0.0,) * N)), obj["T"])
    except KeyError as e:
        raise ConfigurationError(f"state is missing {e.args[0]!r}") from None
