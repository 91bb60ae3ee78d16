"""Mapped shape functions on physical patches.

The patch map is the isoparametric map built from the nine standard Lagrange
functions of the reference patch; it is bilinear on sub-quads and affine on
sub-triangles.  Field bases may be standard or hierarchical, geometry always
uses the standard basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ref_fem
from .exceptions import SingularJacobian
from .ref_fem import STANDARD

DET_TOL = 1e-14


@dataclass
class FemValues:
    """Per-quadrature-point data for a batch of patches of one femtype.

    Arrays are indexed ``[patch, ...]``; ``values`` is ``(n, 9, nq)``,
    ``grads`` is ``(n, 9, nq, 2)`` in physical coordinates, ``det`` and
    ``JxW`` are ``(n, nq)`` and ``points`` is ``(n, nq, 2)``.
    """

    femtype: int
    basis_kind: str
    rule: ref_fem.QuadratureRule
    values: np.ndarray
    grads: np.ndarray
    det: np.ndarray
    JxW: np.ndarray
    points: np.ndarray
    std_values: np.ndarray  # (9, nq) standard basis, used for chi_h

    def __len__(self):
        return self.values.shape[0]


def reinit(M, femtype, basis_kind=STANDARD, transforms=None, rule=None):
    """Evaluate the mapped basis on patches with node coordinates ``M``.

    Parameters
    ----------
    M : array, shape (n, 9, 2) or (9, 2)
        Physical node coordinates per patch.  A ``(2, 9)`` array is accepted
        for a single patch as well.
    femtype : int
    basis_kind : {"standard", "hierarchical"}
    transforms : array, shape (n, 9, 9), optional
        Hierarchical change of basis per patch; required for the hierarchical
        basis, ignored otherwise.
    """
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 9):
        M = M.T
    if M.ndim == 2:
        M = M[None]
        if transforms is not None and np.ndim(transforms) == 2:
            transforms = np.asarray(transforms)[None]
    tables = ref_fem.reference_tables(femtype)
    if rule is not None and rule is not tables.rule:
        # tabulate on a user supplied rule
        vals = np.zeros((9, len(rule)))
        rgrads = np.zeros((9, len(rule), 2))
        for q, (p, c) in enumerate(zip(rule.points, rule.cell_of_point)):
            vals[:, q], rgrads[:, q] = ref_fem.standard_local(femtype, p, cell=c)
    else:
        rule, vals, rgrads = tables.rule, tables.values, tables.grads

    # J[n, q, a, b] = sum_i M[n, i, a] * dphi_i/dxhat_b
    J = np.einsum("nia,iqb->nqab", M, rgrads)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    area_scale = _patch_area(M)
    if np.any(det <= DET_TOL * area_scale[:, None]):
        bad = int(np.flatnonzero((det <= DET_TOL * area_scale[:, None]).any(axis=1))[0])
        raise SingularJacobian(f"degenerate sub-cell mapping in patch batch entry {bad}")
    inv_det = 1.0 / det
    # J^{-T}
    JinvT = np.empty_like(J)
    JinvT[..., 0, 0] = J[..., 1, 1] * inv_det
    JinvT[..., 0, 1] = -J[..., 1, 0] * inv_det
    JinvT[..., 1, 0] = -J[..., 0, 1] * inv_det
    JinvT[..., 1, 1] = J[..., 0, 0] * inv_det
    grads = np.einsum("nqab,iqb->niqa", JinvT, rgrads)
    values = np.broadcast_to(vals, (len(M),) + vals.shape)
    if basis_kind != STANDARD:
        if transforms is None:
            raise ValueError("hierarchical basis needs per-patch transforms")
        T = np.asarray(transforms)
        values = np.einsum("nij,jq->niq", T, vals)
        grads = np.einsum("nij,njqa->niqa", T, grads)
    else:
        values = values.copy()
    points = np.einsum("nia,iq->nqa", M, vals)
    return FemValues(femtype, basis_kind, rule, values, grads, det,
                     det * rule.weights[None, :], points, vals)


def _patch_area(M):
    """Area of the quadrilateral spanned by the patch corners."""
    c = M[:, list(ref_fem.CORNERS)][:, [0, 1, 3, 2]]
    x, y = c[..., 0], c[..., 1]
    return 0.5 * np.abs((x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y).sum(axis=1))


def compute_local_disc_chi(fv: FemValues, local_disc_chi):
    """Discrete level set at the quadrature points, shape ``(n, nq)``.

    ``local_disc_chi`` holds nodal values ``(n, 9)`` (or ``(9,)`` for a
    single patch); interpolation uses the standard Lagrange basis.
    """
    chi = np.atleast_2d(np.asarray(local_disc_chi, dtype=float))
    return chi @ fv.std_values
