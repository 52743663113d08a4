"""Eigenvalues, spectral gaps and coercivity constants of Galerkin matrices."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, linalg, special

from .errors import (
    ConfigurationError,
    DegenerateClassificationError,
    EigensolverError,
    InternalAssertionError,
    QuadratureError,
)
from .galerkin import OperatorMatrix, WeightGram
from .kernels import AngularPart, nu_zero

__all__ = [
    "SpectralReport",
    "eigendecompose",
    "spectral_gap",
    "coercivity_constant",
    "maxwell_oracle",
    "ZERO_THRESHOLD",
]

ZERO_THRESHOLD = 1e-7


@dataclass
class SpectralReport:
    eigenvalues: list
    gap: float
    zero_count: int
    coercivity: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    convergence: list = field(default_factory=list)  # [(n_max, l_max, gap), ...]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["coercivity"] = {str(k): v for k, v in self.coercivity.items()}
        return d


def _matrix(A: Union[OperatorMatrix, WeightGram, np.ndarray]) -> np.ndarray:
    if isinstance(A, OperatorMatrix):
        return A.A
    if isinstance(A, WeightGram):
        return A.G
    return np.asarray(A, dtype=float)


def eigendecompose(A) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition with a residual check per pair."""
    M = _matrix(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError("eigendecomposition needs a square matrix")
    try:
        w, V = linalg.eigh(M)
    except linalg.LinAlgError as e:
        raise EigensolverError(str(e)) from e
    nrm = max(float(np.max(np.abs(w))), 1e-300) if w.size else 1.0
    res = np.linalg.norm(M @ V - V * w, axis=0)
    if res.size and res.max() > 1e-10 * nrm:
        raise EigensolverError(f"eigen-residual {res.max():.3e} exceeds tolerance")
    return w, V


def spectral_gap(A: OperatorMatrix, nu0: Optional[float] = None) -> tuple[float, int]:
    """Smallest eigenvalue above ``1e-7 * lambda_max`` and the number below it.

    The zero count must equal N + 2. For cutoff kernels with gamma >= 0 the
    gap is also checked against the minimum collision frequency.
    """
    w, _ = eigendecompose(A)
    lam_max = float(w[-1])
    thr = ZERO_THRESHOLD * lam_max
    zeros = int(np.sum(w <= thr))
    expected = A.basis.N + 2
    if zeros != expected:
        raise DegenerateClassificationError(
            f"found {zeros} eigenvalues below {thr:.3e}, expected {expected}")
    gap = float(w[zeros])
    k = A.kernel_obj
    if nu0 is None and k is not None and k.is_cutoff and k.gamma >= 0:
        nu0 = nu_zero(k)
    if nu0 is not None and not gap < nu0:
        raise InternalAssertionError(f"gap {gap!r} is not below nu_0 = {nu0!r}")
    return gap, zeros


def coercivity_constant(A: OperatorMatrix, G: WeightGram) -> float:
    """Smallest generalized eigenvalue of ``(A, G)`` off the collision invariants.

    The invariants are exact basis coordinates, so deflation deletes them.
    """
    if A.basis != G.basis:
        raise ConfigurationError("operator and Gram matrix use different bases")
    keep = np.setdiff1d(np.arange(A.basis.size), A.basis.invariant_indices())
    Ad = A.A[np.ix_(keep, keep)]
    Gd = G.G[np.ix_(keep, keep)]
    try:
        w = linalg.eigh(Ad, Gd, eigvals_only=True)
    except linalg.LinAlgError as e:
        raise ConfigurationError(f"weighted Gram matrix is not positive definite: {e}") from e
    return float(w[0])


def _oracle_integrand(b: AngularPart, n: int, l: int):
    leg = special.legendre(l)
    k = 2 * n + l
    extra = 1.0 if (n == 0 and l == 0) else 0.0

    def f(theta):
        c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
        bracket = 1.0 + extra - c**k * leg(c) - s**k * leg(s)
        return float(b(math.cos(theta))) * math.sin(theta) * bracket

    return f


def maxwell_oracle(b: AngularPart, n_max: int, l_max: int, rho: float = math.pi**1.5
                   ) -> dict[tuple[int, int], float]:
    """Eigenvalues ``lambda_{n,l}`` of the Maxwell-molecule operator (``Phi = 1``).

    For ``Phi = 1`` the Burnett functions diagonalise the operator and

        lambda_{n,l} = rho 2 pi int_0^pi b(cos t) sin t
                       [1 + delta_{n0} delta_{l0} - c^(2n+l) P_l(c) - s^(2n+l) P_l(s)] dt

    with ``c = cos(t/2)``, ``s = sin(t/2)`` and ``rho`` the Maxwellian mass
    (``pi^(3/2)`` for ``exp(-|v|^2)``). Each entry is a 1D adaptive quadrature.
    """
    if not b.is_cutoff:
        raise ConfigurationError("the oracle needs a cutoff angular part")
    table = {}
    for l in range(l_max + 1):
        for n in range(n_max + 1):
            val, err = integrate.quad(_oracle_integrand(b, n, l), 0.0, math.pi,
                                      epsabs=1e-14, epsrel=1e-13, limit=200)
            if err > 1e-9 * max(abs(val), 1.0):
                raise QuadratureError(f"oracle quadrature for (n, l) = ({n}, {l}) did not converge")
            v = rho * 2.0 * math.pi * val
            # invariants are zero in exact arithmetic
            table[(n, l)] = 0.0 if (n, l) in ((0, 0), (1, 0), (0, 1)) else v
    return table
