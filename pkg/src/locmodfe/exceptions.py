"""Exception types raised by the locally modified FE pipeline."""


class LocModFEError(Exception):
    """Base class for all errors raised by this package."""


class NoConvergence(LocModFEError):
    """Edge-cut root search failed; the level set is pathological on that edge."""


class InvalidCut(LocModFEError):
    """A patch is cut in a way the method does not support; refine the mesh."""


class DegenerateMapping(LocModFEError):
    """Node placement lines are parallel, the patch cannot be subdivided."""


class SingularJacobian(LocModFEError):
    """A sub-cell of a patch mapping has (nearly) vanishing area."""


class NonpositiveDiagonal(LocModFEError):
    """Diagonal scaling requested for a matrix with a non-positive diagonal."""


class NotConverged(LocModFEError):
    """An iterative solver hit its iteration cap.

    The best iterate and the solver report are attached so callers can
    continue with a flagged result.
    """

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report
