"""Burnett basis and Galerkin matrices of the linearized collision operator.

Basis functions are ``p_nlm(v) = N_nl |v|^l L_n^(l+1/2)(|v|^2) Y_lm(v/|v|)``
(real spherical harmonics), orthonormal for the weight ``exp(-|v|^2)``.
Indices run over l ascending, then m = -l..l, then n ascending.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dirichlet import CollisionRules, _weighted_rule, collision_nodes
from .errors import AssemblyError, ConfigurationError, QuadratureError
from .kernels import CollisionKernel, kernel_descriptor

__all__ = [
    "BasisSpec",
    "OperatorMatrix",
    "WeightGram",
    "eval_basis",
    "rules_for_basis",
    "assemble_operator",
    "assemble_weight_gram",
    "block_structure_check",
    "save_kgl1",
    "load_kgl1",
]


@dataclass(frozen=True)
class BasisSpec:
    n_max: int
    l_max: int
    N: int = 3

    def __post_init__(self):
        if self.N != 3:
            raise ConfigurationError("the Burnett basis is implemented for N = 3")
        if self.n_max < 1 or self.l_max < 1:
            raise ConfigurationError("n_max >= 1 and l_max >= 1 are needed to span the invariants")

    @property
    def size(self) -> int:
        return (self.l_max + 1) ** 2 * (self.n_max + 1)

    @property
    def degree(self) -> int:
        return 2 * self.n_max + self.l_max

    def index(self, n: int, l: int, m: int) -> int:
        nn = self.n_max + 1
        return (l * l + m + l) * nn + n

    def labels(self) -> list[tuple[int, int, int]]:
        """``(n, l, m)`` for every index."""
        return [(n, l, m) for l in range(self.l_max + 1) for m in range(-l, l + 1)
                for n in range(self.n_max + 1)]

    def invariant_indices(self) -> list[int]:
        return [self.index(0, 0, 0), self.index(1, 0, 0)] + [self.index(0, 1, m) for m in (-1, 0, 1)]

    def sub(self, n_max: int, l_max: int) -> np.ndarray:
        """Indices of the nested sub-basis ``(n_max, l_max)`` inside this one."""
        if n_max > self.n_max or l_max > self.l_max:
            raise ConfigurationError("sub-basis must be contained in the basis")
        return np.array([self.index(n, l, m) for l in range(l_max + 1) for m in range(-l, l + 1)
                         for n in range(n_max + 1)])

    def as_dict(self) -> dict:
        return {"N": self.N, "n_max": self.n_max, "l_max": self.l_max, "size": self.size}


def _solid_harmonics(v: np.ndarray, l_max: int) -> list[np.ndarray]:
    """Orthonormal real solid harmonics ``|v|^l Y_lm``; entry l has shape (P, 2l+1)."""
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    r2 = x * x + y * y + z * z
    # Re/Im of (x + i y)^m
    cm = [np.ones_like(x)]
    sm = [np.zeros_like(x)]
    for m in range(1, l_max + 1):
        cm.append(cm[-1] * x - sm[-1] * y)
        sm.append(cm[-2] * y + sm[-1] * x)
    # Q[l][m]: polynomial in z and r^2 with r^l P_l^m(cos) = Q (x+iy)^m
    Q = [[None] * (l_max + 1) for _ in range(l_max + 1)]
    for m in range(l_max + 1):
        dfact = float(np.prod(np.arange(2 * m - 1, 0, -2))) if m > 0 else 1.0
        Q[m][m] = np.full_like(x, dfact)
        if m + 1 <= l_max:
            Q[m + 1][m] = (2 * m + 1) * z * Q[m][m]
        for l in range(m + 1, l_max):
            Q[l + 1][m] = ((2 * l + 1) * z * Q[l][m] - (l + m) * r2 * Q[l - 1][m]) / (l - m + 1)
    out = []
    for l in range(l_max + 1):
        block = np.empty((x.size, 2 * l + 1))
        for m in range(l + 1):
            K = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
            if m == 0:
                block[:, l] = K * Q[l][0]
            else:
                K *= math.sqrt(2.0)
                block[:, l + m] = K * Q[l][m] * cm[m]
                block[:, l - m] = K * Q[l][m] * sm[m]
        out.append(block)
    return out


def _radial(s: np.ndarray, n_max: int, l: int) -> np.ndarray:
    """Normalised ``N_nl L_n^(l+1/2)(s)`` for n = 0..n_max, shape (P, n_max+1)."""
    a = l + 0.5
    L = np.empty((s.size, n_max + 1))
    L[:, 0] = 1.0
    if n_max >= 1:
        L[:, 1] = 1.0 + a - s
    for k in range(1, n_max):
        L[:, k + 1] = ((2 * k + 1 + a - s) * L[:, k] - (k + a) * L[:, k - 1]) / (k + 1)
    norms = np.array([math.sqrt(2.0 * math.factorial(n) / math.gamma(n + l + 1.5))
                      for n in range(n_max + 1)])
    return L * norms


def eval_basis(spec: BasisSpec, v) -> np.ndarray:
    """All basis functions at one or many velocities; trailing axis is the basis index."""
    v = np.asarray(v, dtype=float)
    flat = v.reshape(-1, 3)
    s = np.sum(flat * flat, axis=1)
    Y = _solid_harmonics(flat, spec.l_max)
    cols = []
    for l in range(spec.l_max + 1):
        R = _radial(s, spec.n_max, l)
        cols.append((Y[l][:, :, None] * R[:, None, :]).reshape(flat.shape[0], -1))
    out = np.concatenate(cols, axis=1)
    return out.reshape(v.shape[:-1] + (spec.size,))


def _eval_block(spec: BasisSpec, pts: np.ndarray) -> list[np.ndarray]:
    """Per-l blocks of shape (P, 2l+1, n_max+1)."""
    s = np.sum(pts * pts, axis=1)
    Y = _solid_harmonics(pts, spec.l_max)
    return [Y[l][:, :, None] * _radial(s, spec.n_max, l)[:, None, :] for l in range(spec.l_max + 1)]


@dataclass(eq=False)
class OperatorMatrix:
    """Dense symmetric Galerkin matrix of the Dirichlet form on a Burnett basis."""

    A: np.ndarray
    basis: BasisSpec
    kernel: dict
    quadrature: dict
    kernel_obj: Optional[CollisionKernel] = field(default=None, repr=False)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A)))) if self.A.size else 0.0

    def restrict(self, n_max: int, l_max: int) -> "OperatorMatrix":
        """Principal submatrix on a nested sub-basis (Rayleigh-Ritz on the smaller space)."""
        idx = self.basis.sub(n_max, l_max)
        return OperatorMatrix(self.A[np.ix_(idx, idx)].copy(), BasisSpec(n_max, l_max),
                              self.kernel, self.quadrature, self.kernel_obj)


@dataclass(eq=False)
class WeightGram:
    G: np.ndarray
    basis: BasisSpec
    gamma: float

    def restrict(self, n_max: int, l_max: int) -> "WeightGram":
        idx = self.basis.sub(n_max, l_max)
        return WeightGram(self.G[np.ix_(idx, idx)].copy(), BasisSpec(n_max, l_max), self.gamma)


def rules_for_basis(k: CollisionKernel, spec: BasisSpec, **overrides) -> CollisionRules:
    """Rules exact (or, for singular kernels, converged) for products of basis functions."""
    d = spec.degree
    theta = d + 4
    if k.is_cutoff and k.angular.expr not in ("one", "one_plus_cos"):
        theta = 2 * d + 24
    base = CollisionRules(
        gh_order=max(d - 1, 2),
        radial_order=d // 2 + 2,
        sphere_degree=min(2 * d + 1, 35),
        theta_nodes=theta,
        angular_panels=16,
        panel_order=d + 8,
        chunk=max(2000, 2_000_000 // spec.size),
    )
    return base.with_(**overrides)


def _assemble_reduced(k: CollisionKernel, spec: BasisSpec, rules: CollisionRules) -> np.ndarray:
    nn = spec.n_max + 1
    F = [np.zeros((nn, nn)) for _ in range(spec.l_max + 1)]
    for c in collision_nodes(k, rules, reduced=True):
        blocks = [_eval_block(spec, pts) for pts in (c.vps, c.vp, c.vs, c.v)]
        sw = np.sqrt(c.w)  # weights are positive
        for l in range(spec.l_max + 1):
            D = (blocks[0][l] + blocks[1][l]) - (blocks[2][l] + blocks[3][l])
            D = (D * sw[:, None, None]).reshape(-1, nn)
            F[l] += D.T @ D
    A = np.zeros((spec.size, spec.size))
    for l in range(spec.l_max + 1):
        # averaging over rotations: Schur orthogonality of the degree-l representation
        blk = 8.0 * math.pi**2 / (2 * l + 1) * 0.5 * (F[l] + F[l].T)
        for m in range(-l, l + 1):
            i0 = spec.index(0, l, m)
            A[i0:i0 + nn, i0:i0 + nn] = blk
    return A


def _assemble_full(k: CollisionKernel, spec: BasisSpec, rules: CollisionRules) -> np.ndarray:
    A = np.zeros((spec.size, spec.size))
    for c in collision_nodes(k, rules, reduced=False):
        D = (eval_basis(spec, c.vps) + eval_basis(spec, c.vp)) - (eval_basis(spec, c.vs) + eval_basis(spec, c.v))
        A += D.T @ (c.w[:, None] * D)
    return 0.5 * (A + A.T)


def assemble_operator(k: CollisionKernel, spec: BasisSpec, rules: Optional[CollisionRules] = None,
                      method: str = "reduced", check: bool = True) -> OperatorMatrix:
    """Galerkin matrix ``A_ij = D(psi_i, psi_j)`` of the Dirichlet form.

    ``method="reduced"`` pins the collision frame and recovers the full
    integral by averaging over rotations, which leaves one small
    ``(n, n')`` block per l. ``method="full"`` integrates over all of
    ``(v, v*, sigma)`` and is meant for cross-checking on small bases.
    """
    if k.dimension != 3:
        raise ConfigurationError("Galerkin assembly is implemented for N = 3")
    rules = rules or rules_for_basis(k, spec)
    if method == "reduced":
        A = _assemble_reduced(k, spec, rules)
    elif method == "full":
        A = _assemble_full(k, spec, rules)
    else:
        raise ConfigurationError(f"unknown assembly method {method!r}")
    quad = {"method": method, "gh_order": rules.gh_order, "radial_order": rules.radial_order,
            "sphere_degree": rules.sphere_degree, "theta_nodes": rules.theta_nodes,
            "angular_panels": rules.angular_panels, "panel_order": rules.panel_order,
            "angular": rules.angular}
    op = OperatorMatrix(A, spec, kernel_descriptor(k), quad, k)
    if check:
        _check_operator(op)
    return op


def _check_operator(op: OperatorMatrix) -> None:
    A = op.A
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    nrm = max(float(np.max(np.abs(ev))), 1e-300)
    asym = float(np.max(np.abs(A - A.T))) / nrm
    if asym > 1e-12:
        raise AssemblyError(f"matrix not symmetric: relative asymmetry {asym:.3e}")
    if ev[0] < -1e-9 * max(nrm, 1.0):
        raise AssemblyError(f"matrix not positive semidefinite: smallest eigenvalue {ev[0]:.3e}")
    inv = op.basis.invariant_indices()
    leak = float(np.max(np.abs(A[inv, :]))) / nrm
    if leak > 1e-8:
        raise AssemblyError(f"invariant rows do not vanish: relative size {leak:.3e}")


def block_structure_check(op: OperatorMatrix, tol: float = 1e-8) -> dict:
    """Check that entries coupling different (l, m) vanish; return per-l spectra.

    The report's ``ok`` is False when some off-block entry exceeds
    ``tol * ||A||``, which indicates inadequate quadrature.
    """
    spec = op.basis
    labels = spec.labels()
    lm = np.array([(l, m) for (_, l, m) in labels])
    same = (lm[:, None, 0] == lm[None, :, 0]) & (lm[:, None, 1] == lm[None, :, 1])
    nrm = max(op.norm, 1e-300)
    off = float(np.max(np.abs(np.where(same, 0.0, op.A)))) / nrm
    sub = {}
    for l in range(spec.l_max + 1):
        spectra = []
        for m in range(-l, l + 1):
            i0 = spec.index(0, l, m)
            blk = op.A[i0:i0 + spec.n_max + 1, i0:i0 + spec.n_max + 1]
            spectra.append(np.linalg.eigvalsh(blk))
        spectra = np.array(spectra)
        sub[l] = {"eigenvalues": spectra.mean(axis=0).tolist(),
                  "m_spread": float(np.max(spectra.max(axis=0) - spectra.min(axis=0)))}
    return {"ok": off <= tol, "max_offblock_relative": off, "per_l": sub}


def assemble_weight_gram(spec: BasisSpec, gamma: float, radial_order: int = 120,
                         sphere_degree: Optional[int] = None) -> WeightGram:
    """``G_ij = int p_i p_j <v>^gamma exp(-|v|^2) dv``.

    Radial Gauss-Laguerre in ``s = |v|^2`` times a product sphere rule.
    """
    deg = sphere_degree if sphere_degree is not None else min(2 * spec.l_max + 1, 35)
    nodes, w, s = _weighted_rule(radial_order, deg)
    P = eval_basis(spec, nodes)
    G = P.T @ ((w * (1.0 + s) ** (0.5 * gamma))[:, None] * P)
    G = 0.5 * (G + G.T)
    if np.linalg.eigvalsh(G)[0] <= 0:
        raise QuadratureError("weighted Gram matrix is not positive definite; raise the order")
    return WeightGram(G, spec, float(gamma))


MAGIC = b"KGL1"
VERSION = 1


def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def save_kgl1(path, matrix: np.ndarray, meta: dict) -> Path:
    """Write a matrix in the KGL1 binary layout plus its JSON sidecar."""
    path = Path(path)
    M = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, dtype="<f8")))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQQ", VERSION, M.shape[0], M.shape[1]))
        fh.write(M.tobytes(order="C"))
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_kgl1(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not a KGL1 file")
    version, rows, cols = struct.unpack("<IQQ", raw[4:24])
    if version != VERSION:
        raise ConfigurationError(f"unsupported KGL1 version {version}")
    data = np.frombuffer(raw, dtype="<f8", offset=24, count=rows * cols).reshape(rows, cols).copy()
    side = _sidecar(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return data, meta
