"""Exception hierarchy shared by all modules."""


class ShellError(Exception):
    """Base class for every error raised by klshell."""


class GeometryError(ShellError):
    """Degenerate parametrization or mapped Jacobian."""


class MeshError(ShellError):
    """Inconsistent mesh topology or seam identification."""


class SpecificationError(ShellError):
    """Boundary-condition or case specification that cannot be honoured."""


class ProbeError(ShellError):
    """A point probe could not be located on the discrete surface."""


class ConditioningError(ShellError):
    """An element moment block could not be factorized."""


class SolverError(ShellError):
    """Factorization or solution of the condensed global system failed."""
