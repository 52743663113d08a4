"""Discrete-velocity solver for the space-homogeneous Boltzmann equation.

The collision operator is evaluated by direct summation over grid partners
and a sphere rule in sigma. Gain terms interpolate ``R = f / M_m`` where
``M_m`` is the Gaussian carrying the same discrete mass, momentum and
energy as ``f``; since ``M_m(v') M_m(v'*) = M_m(v) M_m(v*)`` the scheme
keeps ``M_m`` as an exact discrete equilibrium. Conservation is restored
after each evaluation by a projection onto the discrete invariants.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import _dvm
from .errors import (
    ConfigurationError,
    DomainError,
    NegativityError,
    StabilityError,
    UnsupportedError,
)
from .kernels import CollisionKernel
from .quadrature import build_sphere_rule
from .states import GaussianState, maxwellian_eval

__all__ = [
    "DistributionGrid",
    "RelaxationTrace",
    "DVMOperator",
    "DecayFit",
    "q_dvm",
    "conserve_project",
    "discrete_maxwellian",
    "rk4_step",
    "fit_decay_rate",
    "run_relaxation",
    "two_bump_datum",
]

log = logging.getLogger(__name__)

NEG_BAND = 1e-12


@dataclass(eq=False)
class DistributionGrid:
    """Values of f on the cell-centred grid of ``n^3`` points in ``[-L, L]^3``.

    Nodes outside the ball ``|v| <= L`` are inactive and hold zero.
    """

    L: float
    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.n, self.n, self.n)
        if self.values.min() < -NEG_BAND:
            raise NegativityError(f"grid value {self.values.min()!r} below the round-off band")
        if not self.mass > 0:
            raise DomainError("grid carries no mass")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def velocities(self) -> np.ndarray:
        a = self.axis
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    @cached_property
    def active(self) -> np.ndarray:
        return np.sum(self.velocities**2, axis=1) <= self.L**2 * (1.0 + 1e-12)

    @property
    def mass(self) -> float:
        return self.cell_volume * float(self.values.sum())

    def with_values(self, values) -> "DistributionGrid":
        return DistributionGrid(self.L, self.n, values)

    @classmethod
    def from_function(cls, fn: Callable, n: int = 16, L: float = 4.2) -> "DistributionGrid":
        tmp = cls.__new__(cls)
        tmp.L, tmp.n = L, n
        vals = np.where(tmp.active, np.asarray(fn(tmp.velocities), float), 0.0)
        return cls(L, n, vals.reshape(n, n, n))

    def invariant_matrix(self) -> np.ndarray:
        """Columns 1, v1, v2, v3, |v|^2 on the active nodes."""
        v = self.velocities[self.active]
        return np.column_stack([np.ones(len(v)), v, np.sum(v * v, axis=1)])

    def moments(self) -> np.ndarray:
        """Discrete mass, momentum and energy ``h^3 sum f (1, v, |v|^2)``."""
        return self.cell_volume * (self.invariant_matrix().T @ self.values.ravel()[self.active])


def _state_from_moments(mom: np.ndarray) -> GaussianState:
    rho = mom[0]
    u = mom[1:4] / rho
    T = (mom[4] / rho - u @ u) / 3.0
    return GaussianState(rho, tuple(u), T)


def discrete_maxwellian(grid: DistributionGrid, target: Optional[np.ndarray] = None,
                        tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    """Gaussian ``exp(a + b.v - c|v|^2)`` on the active nodes with prescribed discrete moments.

    Newton iteration on the (convex) moment map, started from the
    continuous Maxwellian with the same moments. Returns the full grid.
    """
    target = grid.moments() if target is None else np.asarray(target, float)
    Phi = grid.invariant_matrix()
    hv = grid.cell_volume
    s = _state_from_moments(target)
    u = np.asarray(s.u)
    coef = np.array([math.log(s.rho / (2 * math.pi * s.T) ** 1.5) - u @ u / (2 * s.T),
                     *(u / s.T), -1.0 / (2 * s.T)])
    for _ in range(max_iter):
        M = np.exp(Phi @ coef)
        resid = hv * (Phi.T @ M) - target
        if np.max(np.abs(resid) / np.maximum(np.abs(target), target[0])) < tol:
            break
        J = hv * (Phi.T @ (M[:, None] * Phi))
        coef = coef - np.linalg.solve(J, resid)
    else:
        raise ConfigurationError("discrete Maxwellian matching did not converge")
    out = np.zeros(grid.n**3)
    out[grid.active] = np.exp(Phi @ coef)
    return out.reshape(grid.values.shape)


class DVMOperator:
    """Precomputed collision geometry for one grid, kernel and sphere rule.

    For a constant angular factor the sigma-sum depends only on the pair
    midpoint and ``|v - v*|``, so it is computed once per distinct key and
    shared by all pairs with that key.
    """

    def __init__(self, k: CollisionKernel, L: float = 4.2, n: int = 16, sphere_degree: int = 11):
        if not k.is_cutoff:
            raise UnsupportedError("the discrete-velocity solver needs a cutoff angular kernel")
        if k.gamma < 0:
            raise UnsupportedError("the discrete-velocity solver is restricted to gamma >= 0")
        if k.dimension != 3:
            raise ConfigurationError("the discrete-velocity solver is implemented for N = 3")
        self.kernel, self.L, self.n = k, float(L), int(n)
        self.h = 2.0 * self.L / self.n
        probe = DistributionGrid.__new__(DistributionGrid)
        probe.L, probe.n = self.L, self.n
        self.active = probe.active
        self.vel = probe.velocities[self.active]
        self.na = int(self.active.sum())
        self.amap = np.full(self.n**3, -1, dtype=np.int64)
        self.amap[np.flatnonzero(self.active)] = np.arange(self.na)
        S = build_sphere_rule(3, sphere_degree)
        self.sphere_degree = sphere_degree
        self.keyed = k.angular.is_constant
        if self.keyed:
            # sigma -> -sigma swaps v' and v'*: keep one hemisphere, double the weight
            z = S.nodes[:, 2]
            keep = z >= 0.0
            self.sig = np.ascontiguousarray(S.nodes[keep])
            self.sw = np.where(z[keep] > 0.0, 2.0, 1.0) * S.weights[keep]
            self._build_keys()
        else:
            self.sig = np.ascontiguousarray(S.nodes)
            self.sw = S.weights.copy()
            self.cos_grid = np.linspace(-1.0, 1.0, 4097)
            self.b_table = np.asarray(k.b(self.cos_grid), float)
        self.Ktot = float(self.sw.sum()) * (float(k.b(np.array(0.0))) if self.keyed else 1.0)

    def _build_keys(self):
        n = self.n
        I = np.rint((self.vel + self.L) / self.h - 0.5).astype(np.int64)
        s = I[:, None, :] + I[None, :, :]  # twice the midpoint index, in [0, 2n-2]
        d = I[:, None, :] - I[None, :, :]
        d2 = np.sum(d * d, axis=-1)
        base = 2 * n - 1
        code = ((s[..., 0] * base + s[..., 1]) * base + s[..., 2]) * (3 * n * n) + d2
        uniq, inv = np.unique(code.ravel(), return_inverse=True)
        self.pair_key = inv.astype(np.int64)
        d2u = uniq % (3 * n * n)
        su = uniq // (3 * n * n)
        sz = su % base
        sy = (su // base) % base
        sx = su // (base * base)
        sidx = np.stack([sx, sy, sz], axis=-1).astype(float)
        self.centers = np.ascontiguousarray(-self.L + (0.5 * sidx + 0.5) * self.h)
        self.radii = np.sqrt(d2u.astype(float)) * self.h
        self.phi_key = np.asarray(self.kernel.phi(self.radii), float)
        b0 = float(self.kernel.b(np.array(0.0)))
        K, _ = _dvm.key_sums(self.centers, self.radii, self.sig, self.sw, self.L, self.h, n,
                             self.amap, np.ones(self.na), False)
        self.K = K * b0
        self.b0 = b0
        self.nkeys = uniq.size

    def evaluate(self, f_act: np.ndarray, M_act: np.ndarray):
        """Raw ``Q`` on active nodes plus loss rates and dropped loss per node."""
        R = f_act / M_act
        hv = self.h**3
        if self.keyed:
            _, S = _dvm.key_sums(self.centers, self.radii, self.sig, self.sw, self.L, self.h,
                                 self.n, self.amap, R, True)
            Q, loss, drop = _dvm.pair_sums(self.pair_key, self.phi_key, self.K, S * self.b0,
                                           M_act, f_act, self.Ktot)
        else:
            Q, loss, drop = _dvm.general_sums(self.vel, self.sig, self.sw, self.b_table,
                                              self.cos_grid, self.L, self.h, self.n, self.amap,
                                              R, M_act, f_act, self.kernel.gamma,
                                              self.kernel.kinetic.C_phi)
        return hv * Q, hv * loss, hv * drop


class QResult(NamedTuple):
    q: np.ndarray  # full grid, raw (before projection)
    loss_rate: np.ndarray  # per active node
    dropped_rate: float  # collision mass rate lost to events leaving the ball
    maxwellian: np.ndarray  # moment-matched Gaussian used for the ratio


def q_dvm(f: DistributionGrid, op: DVMOperator, M: Optional[np.ndarray] = None) -> QResult:
    """Collision operator ``Q(f, f)`` at every grid node.

    Events whose post-collisional points cannot be interpolated from active
    nodes are dropped from both gain and loss; the dropped rate is returned.
    """
    if (f.L, f.n) != (op.L, op.n):
        raise ConfigurationError("grid does not match the operator")
    M = discrete_maxwellian(f) if M is None else M
    act = f.active
    Q, loss, drop = op.evaluate(np.ascontiguousarray(f.values.ravel()[act]),
                                np.ascontiguousarray(M.ravel()[act]))
    q = np.zeros(f.n**3)
    q[act] = Q
    return QResult(q.reshape(f.values.shape), loss, f.cell_volume * float(drop.sum()), M)


def conserve_project(q: np.ndarray, f: DistributionGrid, weight: str = "uniform",
                     M: Optional[np.ndarray] = None) -> np.ndarray:
    """Remove the discrete mass, momentum and energy carried by ``q``.

    ``weight="uniform"`` subtracts the least-squares projection onto the
    invariant vectors ``{1, v, |v|^2}``; ``weight="maxwellian"`` puts the
    correction in ``{1, v, |v|^2} M`` instead, which keeps it small where
    ``f`` is small. Either way the result has zero discrete moments.
    """
    act = f.active
    Phi = f.invariant_matrix()
    qa = np.asarray(q, float).ravel()[act]
    if weight == "uniform":
        basis = Phi
    elif weight == "maxwellian":
        Mv = (discrete_maxwellian(f) if M is None else M).ravel()[act]
        basis = Phi * Mv[:, None]
    else:
        raise ConfigurationError(f"unknown projection weight {weight!r}")
    G = Phi.T @ basis
    if np.linalg.cond(G) > 1e14:
        raise ConfigurationError("invariant Gram matrix is singular on this grid")
    c = np.linalg.solve(G, Phi.T @ qa)
    out = np.zeros(f.n**3)
    out[act] = qa - basis @ c
    return out.reshape(f.values.shape)


def _rhs(f: DistributionGrid, op: DVMOperator, M: np.ndarray):
    r = q_dvm(f, op, M)
    return conserve_project(r.q, f, "maxwellian", M), r


def _clip_band(values: np.ndarray) -> tuple[np.ndarray, float]:
    if values.min() < -NEG_BAND:
        raise NegativityError(f"value {values.min()!r} below the round-off band")
    neg = values < 0.0
    clipped = float(-values[neg].sum())
    return np.where(neg, 0.0, values), clipped


def rk4_step(f: DistributionGrid, dt: float, op: DVMOperator,
             M: Optional[np.ndarray] = None) -> tuple[DistributionGrid, dict]:
    """One classical Runge-Kutta step of ``df/dt = P Q(f, f)`` (P the conservation projection)."""
    M = discrete_maxwellian(f) if M is None else M
    k1, r1 = _rhs(f, op, M)
    nu_max = float(r1.loss_rate.max())
    if dt > 0.5 / nu_max * (1.0 + 1e-12):
        raise StabilityError(f"dt = {dt} exceeds 0.5 / nu_max = {0.5 / nu_max}")
    v = f.values

    def stage(k, a):
        vals, _ = _clip_band(v + a * dt * k)
        return f.with_values(vals)

    k2, _ = _rhs(stage(k1, 0.5), op, M)
    k3, _ = _rhs(stage(k2, 0.5), op, M)
    k4, _ = _rhs(stage(k3, 1.0), op, M)
    new, clipped = _clip_band(v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    info = {"nu_max": nu_max, "dropped_rate": r1.dropped_rate,
            "clipped_mass": clipped * f.cell_volume}
    return f.with_values(new), info


@dataclass
class RelaxationTrace:
    times: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    momenta: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    temperatures: list = field(default_factory=list)
    H: list = field(default_factory=list)
    l1: list = field(default_factory=list)
    dropped: list = field(default_factory=list)

    def record(self, t: float, f: DistributionGrid, M_eq: np.ndarray, dropped: float = 0.0):
        mom = f.moments()
        s = _state_from_moments(mom)
        vals = f.values.ravel()
        pos = vals > 0
        hv = f.cell_volume
        self.times.append(float(t))
        self.masses.append(float(mom[0]))
        self.momenta.append([float(x) for x in mom[1:4]])
        self.energies.append(float(mom[4]))
        self.temperatures.append(float(s.T))
        self.H.append(hv * float(vals[pos] @ np.log(vals[pos])))
        self.l1.append(hv * float(np.abs(vals - M_eq.ravel()).sum()))
        self.dropped.append(float(dropped))

    def rows(self) -> list:
        out = []
        for i, t in enumerate(self.times):
            rho = self.masses[i]
            u = [p / rho for p in self.momenta[i]]
            out.append([t, rho, *u, self.temperatures[i], self.H[i], self.l1[i]])
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "rho", "ux", "uy", "uz", "T", "H", "l1_dist"])
            for row in self.rows():
                w.writerow([format(x, ".17g") for x in row])

    def conservation_drift(self) -> dict:
        m0, e0 = self.masses[0], self.energies[0]
        p = np.array(self.momenta)
        return {
            "mass": float(np.max(np.abs(np.array(self.masses) - m0)) / abs(m0)),
            "momentum": float(np.max(np.abs(p - p[0]))) / abs(m0),
            "energy": float(np.max(np.abs(np.array(self.energies) - e0)) / abs(e0)),
        }

    def max_h_increase(self) -> float:
        H = np.array(self.H)
        return float(np.max(np.diff(H), initial=-np.inf))


class DecayFit(NamedTuple):
    mu: float
    C: float
    r2: float
    window: tuple
    reliable: bool


def _auto_window(t: np.ndarray, d: np.ndarray, lo: float, hi: float) -> tuple[int, int]:
    """Last contiguous run of samples with ``lo*d0 <= d <= hi*d0``."""
    inside = (d >= lo * d[0]) & (d <= hi * d[0])
    idx = np.flatnonzero(inside)
    if idx.size < 2:
        raise DomainError("no usable fitting window in the trace")
    end = idx[-1]
    start = end
    while start - 1 >= 0 and inside[start - 1]:
        start -= 1
    return start, end


def fit_decay_rate(trace, window: Optional[Sequence[float]] = None,
                   band: tuple = (1e-6, 0.05)) -> DecayFit:
    """Least-squares line through ``(t, log d)``: ``d ~ C exp(-mu t)``.

    ``trace`` is a :class:`RelaxationTrace` or a ``(times, distances)`` pair.
    Without ``window`` the fit uses the last contiguous stretch where the
    distance lies within ``band`` times its initial value.
    """
    if isinstance(trace, RelaxationTrace):
        t, d = np.array(trace.times), np.array(trace.l1)
    else:
        t, d = (np.asarray(x, float) for x in trace)
    if window is None:
        i0, i1 = _auto_window(t, d, *band)
        sel = slice(i0, i1 + 1)
    else:
        t0, t1 = window
        if t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12 or t1 <= t0:
            raise DomainError("fit window lies outside the trace")
        sel = (t >= t0) & (t <= t1)
    ts, ds = t[sel], d[sel]
    if ts.size < 2 or np.any(ds <= 0):
        raise DomainError("fit window needs at least two positive distances")
    y = np.log(ds)
    A = np.column_stack([np.ones_like(ts), ts])
    (c0, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([c0, slope])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    reliable = r2 >= 0.99
    if not reliable:
        warnings.warn(f"decay fit has r^2 = {r2:.4f} < 0.99", RuntimeWarning, stacklevel=2)
    return DecayFit(float(-slope), float(math.exp(c0)), r2, (float(ts[0]), float(ts[-1])), reliable)


def two_bump_datum(rho: float = math.pi**1.5, T: float = 0.5):
    """Anisotropic datum: two Gaussians of unequal mass and temperature.

    Momentum is zero and the total mass and temperature equal ``rho``, ``T``.
    """
    m1, m2 = 0.6 * rho, 0.4 * rho
    u1 = np.array([0.5, 0.25, -0.15])
    u2 = -m1 * u1 / m2
    # diagonal covariances, rescaled below to reach the target temperature
    c1 = np.array([0.30, 0.18, 0.24])
    c2 = np.array([0.20, 0.34, 0.26])
    spread = (m1 * (c1.sum() + u1 @ u1) + m2 * (c2.sum() + u2 @ u2)) / (3.0 * rho)
    kin = (m1 * (u1 @ u1) + m2 * (u2 @ u2)) / (3.0 * rho)
    s = (T - kin) / (spread - kin)
    c1, c2 = c1 * s, c2 * s

    def f(v):
        out = np.zeros(v.shape[:-1])
        for m, u, c in ((m1, u1, c1), (m2, u2, c2)):
            z = np.sum((v - u) ** 2 / (2.0 * c), axis=-1)
            out = out + m * np.exp(-z) / math.sqrt((2 * math.pi) ** 3 * np.prod(c))
        return out

    return f


@dataclass
class RelaxationResult:
    trace: RelaxationTrace
    grid: DistributionGrid
    equilibrium: np.ndarray
    dt: float
    steps: int
    state: GaussianState
    truncation_rate: float  # max dropped collision mass per unit time, relative to mass
    clipped_mass: float


def run_relaxation(k: CollisionKernel, datum: Callable, t_end: float, n: int = 16, L: float = 4.2,
                   sphere_degree: int = 11, dt: Optional[float] = None, stop_ratio: float = 1e-7,
                   record_every: int = 1, op: Optional[DVMOperator] = None) -> RelaxationResult:
    """Integrate from ``datum`` until ``t_end`` or until the L1 distance to equilibrium
    falls below ``stop_ratio`` times its initial value."""
    op = op or DVMOperator(k, L, n, sphere_degree)
    f = DistributionGrid.from_function(datum, n, L)
    M = discrete_maxwellian(f)
    first = q_dvm(f, op, M)
    nu_max = float(first.loss_rate.max())
    dt = 0.5 / nu_max if dt is None else dt
    trace = RelaxationTrace()
    trace.record(0.0, f, M, first.dropped_rate)
    t, steps, clipped, trunc = 0.0, 0, 0.0, first.dropped_rate / f.mass
    while t < t_end - 1e-14:
        step = min(dt, t_end - t)
        f, info = rk4_step(f, step, op, M)
        t += step
        steps += 1
        clipped += info["clipped_mass"]
        trunc = max(trunc, info["dropped_rate"] / f.mass)
        if steps % record_every == 0:
            trace.record(t, f, M, info["dropped_rate"])
            if trace.l1[-1] < stop_ratio * trace.l1[0]:
                break
        if steps % 50 == 0:
            log.info("t = %.4f, l1 = %.3e", t, trace.l1[-1])
    state = _state_from_moments(f.moments())
    return RelaxationResult(trace, f, M, dt, steps, state, trunc, clipped)
