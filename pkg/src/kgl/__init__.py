"""Numerical laboratory for the linearized Boltzmann collision operator.

Quadrature, collision kernels, the Dirichlet form of the linearized
operator, Burnett-basis Galerkin matrices and their spectra, explicit gap
bounds, and a discrete-velocity solver for the nonlinear relaxation.
"""
from __future__ import annotations

from .errors import (
    AssemblyError,
    ConfigurationError,
    DegenerateClassificationError,
    DomainError,
    EigensolverError,
    EstimateUnreliableError,
    InternalAssertionError,
    KGLError,
    NegativityError,
    QuadratureError,
    StabilityError,
    UnsupportedError,
)
from .quadrature import *  # noqa: F401,F403
from .kernels import *  # noqa: F401,F403
from .states import *  # noqa: F401,F403
from .dirichlet import *  # noqa: F401,F403
from .galerkin import *  # noqa: F401,F403
from .spectra import *  # noqa: F401,F403
from .bounds import *  # noqa: F401,F403
from .relax import *  # noqa: F401,F403

__version__ = "0.1.0"
