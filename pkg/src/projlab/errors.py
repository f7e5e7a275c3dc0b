"""Exception types raised across the package."""


class ProjlabError(Exception):
    """Base class for all package errors."""


class GridError(ProjlabError, ValueError):
    """Invalid grid construction parameters."""


class DegeneratePlane(ProjlabError, ValueError):
    pass


class ValenceMismatch(ProjlabError, ValueError):
    pass


class InvalidField(ProjlabError, ValueError):
    pass


class InvalidMetric(ProjlabError, ValueError):
    pass


class SolverError(ProjlabError, RuntimeError):
    """An eigen- or linear solver failed to converge or factorize."""


class DegenerateTensor(ProjlabError, ValueError):
    pass


class NonIntegrable(ProjlabError, RuntimeError):
    """The target gradient field is not closed to the requested tolerance."""


class PoleProximity(ProjlabError, RuntimeError):
    """A trajectory entered the unresolved polar cap of the sphere chart."""


class InvalidCurve(ProjlabError, ValueError):
    pass
