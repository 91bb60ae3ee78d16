"""Interface problems with manufactured solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levelset import CircleLevelSet


@dataclass(frozen=True)
class InterfaceProblem:
    """Diffusion problem with a circular interface around ``x_m = (0, y_offset)``.

    Inside the circle (sub-domain 1, ``chi < 0``)::

        u1 = -kappa1 r^2 + kappa1/4 - kappa2/8

    and outside (sub-domain 2)::

        u2 = -2 kappa2 r^4

    with ``r = |x - x_m|``.  The solution is continuous across ``r = 1/2`` but
    its co-normal derivative is not: ``kappa2 du2/dr - kappa1 du1/dr`` equals
    ``kappa1^2 - kappa2^2`` on the circle.  ``interface_flux_jump`` returns the
    constant that has to be added as an interface source so the manufactured
    pair ``(u, f)`` solves the discrete problem consistently.

    Branch selection uses an explicit ``domain`` array (-1 inside, +1
    outside) so callers can decide between ``chi`` and ``chi_h``.
    """

    kappa1: float = 0.1
    kappa2: float = 1.0
    y_offset: float = 0.0
    radius: float = 0.5

    @property
    def x_m(self):
        return np.array([0.0, self.y_offset])

    @property
    def level_set(self):
        return CircleLevelSet(self.radius, self.y_offset)

    def _r2(self, p):
        p = np.asarray(p, dtype=float)
        dx = p[..., 0]
        dy = p[..., 1] - self.y_offset
        return dx * dx + dy * dy

    def _domain(self, p, domain):
        if domain is None:
            return self.level_set.domain(p)
        return np.asarray(domain)

    def kappa(self, domain):
        return np.where(np.asarray(domain) < 0, self.kappa1, self.kappa2)

    def exact(self, p, domain=None):
        r2 = self._r2(p)
        k1, k2 = self.kappa1, self.kappa2
        u1 = -k1 * r2 + 0.25 * k1 - 0.125 * k2
        u2 = -2.0 * k2 * r2 * r2
        return np.where(self._domain(p, domain) < 0, u1, u2)

    def exact_grad(self, p, domain=None):
        p = np.asarray(p, dtype=float)
        d = np.stack([p[..., 0], p[..., 1] - self.y_offset], axis=-1)
        r2 = self._r2(p)
        # grad r^2 = 2 d, grad r^4 = 4 r^2 d
        g1 = -2.0 * self.kappa1 * d
        g2 = -8.0 * self.kappa2 * r2[..., None] * d
        inside = (self._domain(p, domain) < 0)[..., None]
        return np.where(inside, g1, g2)

    def source(self, p, domain=None):
        r2 = self._r2(p)
        f1 = np.full_like(r2, 4.0 * self.kappa1**2)
        f2 = 32.0 * self.kappa2**2 * r2
        return np.where(self._domain(p, domain) < 0, f1, f2)

    def dirichlet(self, p):
        return self.exact(p)

    def interface_flux_jump(self):
        """``g = kappa1 du1/dr - kappa2 du2/dr`` at ``r = radius``.

        Adding ``int_Gamma g phi`` to the right-hand side makes the weak form
        consistent with the manufactured solution.
        """
        R = self.radius
        du1 = -2.0 * self.kappa1 * R
        du2 = -8.0 * self.kappa2 * R**3
        return self.kappa1 * du1 - self.kappa2 * du2


@dataclass(frozen=True)
class ConstantProblem:
    """Homogeneous helper problem used in tests: constant source and data."""

    kappa1: float = 1.0
    kappa2: float = 1.0
    f: float = 0.0
    g: float = 0.0
    level_set: object = field(default_factory=CircleLevelSet)

    def kappa(self, domain):
        return np.where(np.asarray(domain) < 0, self.kappa1, self.kappa2)

    def source(self, p, domain=None):
        return np.full(np.shape(p)[:-1], float(self.f))

    def exact(self, p, domain=None):
        return np.full(np.shape(p)[:-1], float(self.g))

    def exact_grad(self, p, domain=None):
        return np.zeros(np.shape(p))

    def dirichlet(self, p):
        return self.exact(p)

    def interface_flux_jump(self):
        return 0.0
