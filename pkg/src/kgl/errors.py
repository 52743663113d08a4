"""Exception hierarchy shared by all kgl modules."""


class KGLError(Exception):
    """Base class for every error raised by kgl."""


class DomainError(KGLError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(KGLError, ValueError):
    """Inconsistent or unsupported combination of inputs or config keys."""


class UnsupportedError(KGLError, ValueError):
    """The requested quantity is not defined for this kernel (e.g. infinite)."""


class EstimateUnreliableError(KGLError, RuntimeError):
    """A numerical estimate did not stabilise under refinement."""


class QuadratureError(KGLError, RuntimeError):
    """A quadrature produced a value violating a structural property."""


class AssemblyError(KGLError, RuntimeError):
    """An assembled matrix violates symmetry, PSD or null-space invariants."""


class DegenerateClassificationError(KGLError, RuntimeError):
    """The near-zero eigenvalue count differs from the collision-invariant count."""


class EigensolverError(KGLError, RuntimeError):
    """Eigen-residuals exceed tolerance."""


class StabilityError(KGLError, RuntimeError):
    """Explicit time step exceeds the stability bound."""


class NegativityError(KGLError, RuntimeError):
    """A density became negative beyond the round-off band."""


class InternalAssertionError(KGLError, AssertionError):
    """A post-condition that should hold by construction failed."""
