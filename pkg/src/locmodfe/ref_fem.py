"""Reference patches, local shape functions and quadrature rules.

Local node numbering is row-wise lexicographic on ``{0, 1/2, 1}^2``::

    6 --- 7 --- 8
    |     |     |
    3 --- 4 --- 5
    |     |     |
    0 --- 1 --- 2

Patch type P0 is split into four quadrilaterals, P1..P3 into eight
triangles.  P1 connects every node to the midpoint (both patch diagonals are
mesh lines), P2 splits each quarter along its lower-left/upper-right
diagonal, P3 along the lower-right/upper-left one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

P0, P1, P2, P3 = 0, 1, 2, 3
FEMTYPE_NAMES = ("P0", "P1", "P2", "P3")

STANDARD = "standard"
HIERARCHICAL = "hierarchical"

MAIN = "main"
ANTI = "anti"

NODES = np.array([[(i % 3) / 2.0, (i // 3) / 2.0] for i in range(9)])
CORNERS = (0, 2, 6, 8)
FINE_NODES = (1, 3, 4, 5, 7)

QUADS = np.array([[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]])

TRIANGLES = {
    P1: np.array(
        [[0, 1, 4], [0, 4, 3], [1, 2, 4], [2, 5, 4],
         [3, 4, 6], [4, 7, 6], [4, 5, 8], [4, 8, 7]]
    ),
    P2: np.array(
        [[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4],
         [3, 4, 7], [3, 7, 6], [4, 5, 8], [4, 8, 7]]
    ),
    P3: np.array(
        [[0, 1, 3], [1, 4, 3], [1, 2, 4], [2, 5, 4],
         [3, 4, 6], [4, 7, 6], [4, 5, 7], [5, 8, 7]]
    ),
}

# bilinear reference quad vertex coordinates, counter-clockwise
_QUAD_REF = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def cells(femtype):
    """Sub-cell connectivity (local node ids) of a reference patch."""
    return QUADS if femtype == P0 else TRIANGLES[femtype]


def default_coarse_diagonal(femtype):
    return ANTI if femtype == P3 else MAIN


# ---------------------------------------------------------------------------
# sub-cell local shape functions

def _bilinear(xi, eta):
    """Values and gradients of the four bilinear functions on [0,1]^2."""
    v = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    g = np.array(
        [[-(1 - eta), -(1 - xi)], [1 - eta, -xi], [eta, xi], [-eta, 1 - xi]]
    )
    return v, g


def _barycentric(tri_xy, p):
    """Barycentric coordinates of ``p`` in the triangle and their gradients."""
    a, b, c = tri_xy
    T = np.column_stack([b - a, c - a])
    lam12 = np.linalg.solve(T, np.asarray(p) - a)
    lam = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
    Tinv = np.linalg.inv(T)
    g = np.vstack([-Tinv.sum(axis=0), Tinv[0], Tinv[1]])
    return lam, g


def locate(femtype, xhat, tol=1e-14):
    """Index of the sub-cell owning the reference point ``xhat``.

    Ownership is decided by the first sub-cell (in table order) that contains
    the point up to ``tol``; since the basis is continuous this only affects
    which one-sided gradient is reported on sub-cell boundaries.
    """
    xhat = np.asarray(xhat, dtype=float)
    if femtype == P0:
        qx = min(int(xhat[0] >= 0.5), 1)
        qy = min(int(xhat[1] >= 0.5), 1)
        return 2 * qy + qx
    for k, tri in enumerate(TRIANGLES[femtype]):
        lam, _ = _barycentric(NODES[tri], xhat)
        if lam.min() >= -tol:
            return k
    raise ValueError(f"point {xhat} outside the reference patch")


def standard_local(femtype, xhat, cell=None):
    """Values (9,) and reference gradients (9, 2) of the Lagrange basis."""
    xhat = np.asarray(xhat, dtype=float)
    if cell is None:
        cell = locate(femtype, xhat)
    val = np.zeros(9)
    grad = np.zeros((9, 2))
    if femtype == P0:
        quad = QUADS[cell]
        origin = NODES[quad[0]]
        v, g = _bilinear(2 * (xhat[0] - origin[0]), 2 * (xhat[1] - origin[1]))
        val[quad] = v
        grad[quad] = 2.0 * g
    else:
        tri = TRIANGLES[femtype][cell]
        lam, g = _barycentric(NODES[tri], xhat)
        val[tri] = lam
        grad[tri] = g
    return val, grad


# ---------------------------------------------------------------------------
# hierarchical basis

def coarse_values(femtype, points, coarse_diagonal=None):
    """Values of the four coarse (patch-corner) functions at ``points``.

    ``points`` are local patch coordinates in [0,1]^2.  Uncut patches use the
    bilinear functions of the whole patch, cut patches the linear functions
    on the two large triangles along ``coarse_diagonal``.  Returns an array of
    shape ``(4, n)`` ordered like ``CORNERS``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    if femtype == P0:
        return np.array([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y])
    if coarse_diagonal is None:
        coarse_diagonal = default_coarse_diagonal(femtype)
    out = np.zeros((4, len(pts)))
    if coarse_diagonal == MAIN:
        low = x >= y
        out[0] = np.where(low, 1 - x, 1 - y)
        out[1] = np.where(low, x - y, 0.0)
        out[2] = np.where(low, 0.0, y - x)
        out[3] = np.where(low, y, x)
    else:
        low = x + y <= 1
        out[0] = np.where(low, 1 - x - y, 0.0)
        out[1] = np.where(low, x, 1 - y)
        out[2] = np.where(low, y, 1 - x)
        out[3] = np.where(low, 0.0, x + y - 1)
    return out


def hierarchical_transform(femtype, local_nodes=None, coarse_diagonal=None):
    """9x9 matrix ``T`` with hierarchical function i = sum_j T[i, j] phi_j.

    Row ``i`` holds the nodal values of hierarchical function ``i``; rows of
    the five fine nodes are unit vectors, corner rows hold the coarse
    function evaluated at the (possibly moved) node positions
    ``local_nodes`` given in local patch coordinates.
    """
    if local_nodes is None:
        local_nodes = NODES
    T = np.eye(9)
    cv = coarse_values(femtype, local_nodes, coarse_diagonal)
    for k, c in enumerate(CORNERS):
        T[c] = cv[k]
        T[c, list(CORNERS)] = 0.0
        T[c, c] = 1.0
    return T


@dataclass(frozen=True)
class ShapeSet:
    """Evaluator for the nine local basis functions of one reference patch."""

    femtype: int
    basis_kind: str = STANDARD
    coarse_diagonal: str | None = None

    @property
    def transform(self):
        if self.basis_kind == STANDARD:
            return np.eye(9)
        return hierarchical_transform(self.femtype, NODES, self.coarse_diagonal)

    def values(self, xhat):
        v, _ = standard_local(self.femtype, xhat)
        return self.transform @ v

    def grads(self, xhat):
        _, g = standard_local(self.femtype, xhat)
        return self.transform @ g


def shape_value(femtype, basis_kind, i, xhat):
    """Value of local function ``i`` (0-based) at reference point ``xhat``."""
    return ShapeSet(femtype, basis_kind).values(xhat)[i]


def shape_grad(femtype, basis_kind, i, xhat):
    return ShapeSet(femtype, basis_kind).grads(xhat)[i]


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray      # (nq, 2) reference coordinates
    weights: np.ndarray     # (nq,), sum 1
    cell_of_point: np.ndarray  # (nq,) owning sub-cell

    def __len__(self):
        return len(self.weights)


_GAUSS_1D = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
_TRI_BARY = np.array(
    [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]
)


def compute_quadrature(femtype):
    """2x2 Gauss per sub-quad (16 points) or 3-point rule per triangle (24)."""
    pts, wts, owner = [], [], []
    if femtype == P0:
        for k, quad in enumerate(QUADS):
            origin = NODES[quad[0]]
            for gy in _GAUSS_1D:
                for gx in _GAUSS_1D:
                    pts.append(origin + 0.5 * np.array([gx, gy]))
                    wts.append(1.0 / 16.0)
                    owner.append(k)
    else:
        for k, tri in enumerate(TRIANGLES[femtype]):
            xy = NODES[tri]
            for bary in _TRI_BARY:
                pts.append(bary @ xy)
                wts.append(1.0 / 24.0)
                owner.append(k)
    return QuadratureRule(np.array(pts), np.array(wts), np.array(owner))


@dataclass(frozen=True)
class ReferenceTables:
    """Standard basis values/gradients tabulated at a rule's points."""

    femtype: int
    rule: QuadratureRule
    values: np.ndarray  # (9, nq)
    grads: np.ndarray   # (9, nq, 2)


_TABLE_CACHE: dict[int, ReferenceTables] = {}


def reference_tables(femtype):
    if femtype not in _TABLE_CACHE:
        rule = compute_quadrature(femtype)
        vals = np.zeros((9, len(rule)))
        grads = np.zeros((9, len(rule), 2))
        for q, (p, c) in enumerate(zip(rule.points, rule.cell_of_point)):
            v, g = standard_local(femtype, p, cell=c)
            vals[:, q] = v
            grads[:, q] = g
        _TABLE_CACHE[femtype] = ReferenceTables(femtype, rule, vals, grads)
    return _TABLE_CACHE[femtype]
