"""Implicit interface geometry.

The interface is the zero contour of a scalar function ``chi``.  Points with
``chi < 0`` belong to the inner sub-domain (domain id -1), all others,
including points exactly on the interface, to the outer one (+1).
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .exceptions import NoConvergence

NEWTON_MAX_ITER = 50
BISECTION_MAX_ITER = 200
RESIDUAL_TOL = 1e-12


class LevelSet(abc.ABC):
    """Abstract level-set evaluator."""

    @abc.abstractmethod
    def value(self, p):
        """Return chi at ``p`` (shape ``(2,)`` or ``(n, 2)``)."""

    @abc.abstractmethod
    def grad(self, p):
        """Return the gradient of chi at ``p``."""

    def domain(self, p):
        """Return +1 where chi >= 0 and -1 elsewhere."""
        v = self.value(p)
        if np.ndim(v) == 0:
            return 1 if v >= 0 else -1
        return np.where(v >= 0, 1, -1)


@dataclass(frozen=True)
class CircleLevelSet(LevelSet):
    """``chi(p) = (x - cx)^2 + (y - y_offset)^2 - radius^2``."""

    radius: float = 0.5
    y_offset: float = 0.0
    center_x: float = 0.0

    @property
    def center(self):
        return np.array([self.center_x, self.y_offset])

    def value(self, p):
        p = np.asarray(p, dtype=float)
        dx = p[..., 0] - self.center_x
        dy = p[..., 1] - self.y_offset
        return dx * dx + dy * dy - self.radius * self.radius

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        return np.stack(
            [2.0 * (p[..., 0] - self.center_x), 2.0 * (p[..., 1] - self.y_offset)],
            axis=-1,
        )


def find_edge_cut(v1, v2, ls: LevelSet, tol=RESIDUAL_TOL):
    """Locate the interface crossing on the segment ``v1 -> v2``.

    Solves ``f(s) = chi(v1 + s (v2 - v1)) = 0`` by Newton's method started at
    ``s = 0.5``.  Iterates leaving ``[-0.1, 1.1]`` or a vanishing derivative
    switch to bisection on ``[0, 1]``, which terminates because the two end
    points lie in different sub-domains.

    Returns the edge fraction ``s0`` in ``[0, 1]``.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    d = v2 - v1
    f0 = float(ls.value(v1))
    f1 = float(ls.value(v2))
    if ls.domain(v1) == ls.domain(v2):
        raise ValueError("edge end points lie in the same sub-domain")
    if f0 == 0.0:
        return 0.0
    if f1 == 0.0:
        return 1.0

    s = 0.5
    for _ in range(NEWTON_MAX_ITER):
        p = v1 + s * d
        f = float(ls.value(p))
        if abs(f) <= tol:
            return min(max(s, 0.0), 1.0)
        df = float(np.dot(ls.grad(p), d))
        if abs(df) < 1e-14:
            break
        s = s - f / df
        if not -0.1 <= s <= 1.1:
            break

    lo, hi, flo = 0.0, 1.0, f0
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        fm = float(ls.value(v1 + mid * d))
        if abs(fm) <= tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-300:
            break
    raise NoConvergence(f"no root of chi on edge {v1.tolist()} -> {v2.tolist()}")
