"""Degrees of freedom, sparsity pattern, assembly and Dirichlet constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import fe_values, ref_fem
from .patch_mesh import Geometry, PatchMesh, SubCellMesh
from .ref_fem import HIERARCHICAL, STANDARD

CHUNK = 4096


CELLWISE = "cellwise"
LEXICOGRAPHIC = "lexicographic"

# per-patch dof visiting order of the cell-wise numbering: vertices, edges
# (left, right, bottom, top), interior
_CELLWISE_LOCAL = (0, 2, 6, 8, 3, 5, 1, 7, 4)


def _morton(px, py):
    z = np.zeros_like(px, dtype=np.int64)
    bits = int(max(px.max(), py.max(), 1)).bit_length()
    for b in range(bits):
        z |= ((px >> b) & 1) << (2 * b)
        z |= ((py >> b) & 1) << (2 * b + 1)
    return z


class DofHandler:
    """One global dof per fine-lattice node of a patch mesh.

    ``numbering="cellwise"`` enumerates dofs patch by patch with patches in
    Z-order (the order a quadtree-refined mesh traverses its cells), which is
    what the SSOR preconditioner sees.  ``"lexicographic"`` uses lattice ids
    directly.  ``node_of_dof[k]`` is the lattice node of dof ``k`` and
    ``dof_of_node`` its inverse.
    """

    def __init__(self, mesh: PatchMesh, numbering=CELLWISE):
        self.mesh = mesh
        self.numbering = numbering
        self.n_dofs = mesh.n_nodes
        lattice = mesh.patch_dofs()
        if numbering == CELLWISE:
            px, py = mesh.patch_indices()
            order = np.argsort(_morton(px, py), kind="stable")
            visit = lattice[order][:, list(_CELLWISE_LOCAL)].ravel()
            _, first = np.unique(visit, return_index=True)
            self.node_of_dof = visit[np.sort(first)]
        elif numbering == LEXICOGRAPHIC:
            self.node_of_dof = np.arange(self.n_dofs)
        else:
            raise ValueError(f"unknown numbering {numbering!r}")
        self.dof_of_node = np.empty(self.n_dofs, dtype=np.int64)
        self.dof_of_node[self.node_of_dof] = np.arange(self.n_dofs)
        self.patch_dofs = self.dof_of_node[lattice]
        self.boundary_dofs = np.sort(self.dof_of_node[mesh.boundary_nodes()])
        self._pattern = None

    @property
    def coarse_dofs(self):
        return np.sort(self.dof_of_node[self.mesh.corner_lattice_ids().ravel()])

    @property
    def n_coarse(self):
        return len(self.coarse_dofs)

    @property
    def n_fine(self):
        return self.n_dofs - self.n_coarse

    def to_nodes(self, x):
        """Reorder a dof vector into lattice-node order."""
        return np.asarray(x)[self.dof_of_node]

    def from_nodes(self, v):
        """Reorder a lattice-node vector into dof order."""
        return np.asarray(v)[self.node_of_dof]

    def sparsity_pattern(self):
        """CSR pattern of the 9x9 patch stencils and the entry map.

        Returns ``(indptr, indices, entry)`` where ``entry[p, i, j]`` is the
        position in the CSR data array of the coupling between local nodes
        ``i`` and ``j`` of patch ``p``.
        """
        if self._pattern is None:
            d = self.patch_dofs
            rows = np.repeat(d, 9, axis=1)
            cols = np.tile(d, (1, 9))
            keys = (rows.astype(np.int64) * self.n_dofs + cols).ravel()
            uniq = np.unique(keys)
            entry = np.searchsorted(uniq, keys).reshape(-1, 9, 9)
            r = uniq // self.n_dofs
            indices = (uniq % self.n_dofs).astype(np.int64)
            indptr = np.zeros(self.n_dofs + 1, dtype=np.int64)
            np.add.at(indptr, r + 1, 1)
            indptr = np.cumsum(indptr)
            self._pattern = (indptr, indices, entry)
        return self._pattern

    def empty_matrix(self):
        indptr, indices, _ = self.sparsity_pattern()
        return sp.csr_matrix((np.zeros(len(indices)), indices, indptr),
                             shape=(self.n_dofs, self.n_dofs))


def hierarchical_prolongation(geom: Geometry, dofh: "DofHandler | None" = None):
    """Sparse ``P`` with nodal values ``u = P U`` for hierarchical coefficients ``U``.

    Columns of coarse nodes hold the coarse hat function evaluated at the
    (moved) node positions, all other columns are unit vectors.
    """
    n = geom.mesh.n_nodes
    fine, coarse, vals = [], [], []
    for ft in (ref_fem.P0, ref_fem.P1, ref_fem.P2, ref_fem.P3):
        pids = np.flatnonzero(geom.femtype == ft)
        if not len(pids):
            continue
        T = geom.hierarchical_transforms(pids)
        d = geom.dofs[pids] if dofh is None else dofh.patch_dofs[pids]
        for c in ref_fem.CORNERS:
            for f in ref_fem.FINE_NODES:
                fine.append(d[:, f]); coarse.append(d[:, c]); vals.append(T[:, c, f])
    fine = np.concatenate(fine)
    coarse = np.concatenate(coarse)
    vals = np.concatenate(vals)
    # shared fine nodes see the same coarse value from every patch; keep one
    key = fine.astype(np.int64) * n + coarse
    _, first = np.unique(key, return_index=True)
    first = first[vals[first] != 0.0]
    rows = np.concatenate([np.arange(n), fine[first]])
    cols = np.concatenate([np.arange(n), coarse[first]])
    data = np.concatenate([np.ones(n), vals[first]])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    x0: np.ndarray                 # initial guess carrying constraint values
    basis_kind: str
    constrained: np.ndarray        # constrained dof ids
    constraint_values: np.ndarray
    prolongation: sp.csr_matrix | None = None

    dofh: "DofHandler | None" = None

    def nodal_dofs(self, x):
        """Nodal values (dof order) of the function with coefficients ``x``."""
        if self.prolongation is None:
            return np.asarray(x)
        return self.prolongation @ x

    def nodal(self, x):
        """Nodal values in lattice-node order of the function with coefficients ``x``."""
        u = self.nodal_dofs(x)
        return u if self.dofh is None else self.dofh.to_nodes(u)


def _domain_at_quadrature(fv, chi_nodes):
    chi_q = fe_values.compute_local_disc_chi(fv, chi_nodes)
    return np.where(chi_q < 0, -1, 1)


def _batches(geom: Geometry, basis_kind, chunk=CHUNK):
    """Yield ``(pids, FemValues)`` grouped by femtype in fixed order."""
    for ft in (ref_fem.P0, ref_fem.P1, ref_fem.P2, ref_fem.P3):
        pids_all = np.flatnonzero(geom.femtype == ft)
        for start in range(0, len(pids_all), chunk):
            pids = pids_all[start:start + chunk]
            M = geom.node_coords(pids)
            T = geom.hierarchical_transforms(pids) if basis_kind == HIERARCHICAL else None
            yield pids, fe_values.reinit(M, ft, basis_kind, T)


def local_matrices(geom, problem, basis_kind=STANDARD):
    """Yield ``(pids, K)`` with local stiffness matrices ``K`` of shape ``(n, 9, 9)``."""
    for pids, fv in _batches(geom, basis_kind):
        dom = _domain_at_quadrature(fv, geom.local_disc_chi[pids])
        w = problem.kappa(dom) * fv.JxW
        K = np.einsum("niqa,njqa,nq->nij", fv.grads, fv.grads, w)
        yield pids, K


def local_vectors(geom, problem, basis_kind=STANDARD):
    for pids, fv in _batches(geom, basis_kind):
        dom = _domain_at_quadrature(fv, geom.local_disc_chi[pids])
        f = problem.source(fv.points, dom)
        yield pids, np.einsum("niq,nq->ni", fv.values, f * fv.JxW)


def assemble_matrix(dofh: DofHandler, geom: Geometry, problem, basis_kind=STANDARD):
    """Global stiffness matrix on the fixed patch-stencil pattern."""
    indptr, indices, entry = dofh.sparsity_pattern()
    data = np.zeros(len(indices))
    for pids, K in local_matrices(geom, problem, basis_kind):
        data += np.bincount(entry[pids].ravel(), weights=K.ravel(), minlength=len(data))
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(dofh.n_dofs, dofh.n_dofs))


def assemble_rhs(dofh: DofHandler, geom: Geometry, problem, basis_kind=STANDARD):
    b = np.zeros(dofh.n_dofs)
    for pids, v in local_vectors(geom, problem, basis_kind):
        b += np.bincount(dofh.patch_dofs[pids].ravel(), weights=v.ravel(), minlength=dofh.n_dofs)
    return b


_GAUSS2 = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)


def assemble_interface_flux_rhs(subcells: SubCellMesh, g, n_dofs=None):
    """``b[i] = sum_e int_e g phi_i ds`` over the discrete interface edges.

    ``g`` is a constant or a callable of points ``(n, 2)``.  Basis functions
    are linear along sub-cell edges, so 2-point Gauss is exact for constant g.
    """
    n = len(subcells.points) if n_dofs is None else n_dofs
    b = np.zeros(n)
    edges = subcells.interface_edges()
    if not len(edges):
        return b
    p0 = subcells.points[edges[:, 0]]
    p1 = subcells.points[edges[:, 1]]
    length = np.linalg.norm(p1 - p0, axis=1)
    w0 = np.zeros(len(edges))
    w1 = np.zeros(len(edges))
    for t in _GAUSS2:
        x = p0 + t * (p1 - p0)
        gv = g(x) if callable(g) else np.full(len(edges), float(g))
        w0 += 0.5 * gv * (1.0 - t) * length
        w1 += 0.5 * gv * t * length
    b += np.bincount(edges[:, 0], weights=w0, minlength=n)
    b += np.bincount(edges[:, 1], weights=w1, minlength=n)
    return b


def interpolate_boundary_values(dofh: DofHandler, geom: Geometry, dirichlet):
    """Boundary dof ids and nodal values ``g_D`` at their physical positions."""
    ids = dofh.boundary_dofs
    return ids, np.asarray(dirichlet(geom.X[dofh.node_of_dof[ids]]), dtype=float)


def apply_constraints(A, b, ids, values):
    """Symmetric elimination of prescribed dofs.

    Constrained rows and columns are zeroed, their diagonal set to one and
    the right-hand side receives the prescribed value; the known column
    contributions move to the right-hand side of the free rows.  The
    sparsity pattern (including explicit zeros) is preserved.
    """
    A = sp.csr_matrix(A, copy=True)
    b = np.array(b, dtype=float, copy=True)
    ids = np.asarray(ids, dtype=np.int64)
    if not len(ids):
        return A, b
    u = np.zeros(A.shape[0])
    u[ids] = values
    b -= A @ u
    mask = np.zeros(A.shape[0], dtype=bool)
    mask[ids] = True
    row_of = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    kill = mask[row_of] | mask[A.indices]
    A.data[kill] = 0.0
    diag = kill & (row_of == A.indices)
    A.data[diag] = 1.0
    b[ids] = values
    return A, b


def build_system(geom: Geometry, problem, basis_kind=STANDARD, flux_jump=False,
                 dofh: DofHandler | None = None, subcells: SubCellMesh | None = None):
    """Assemble and constrain the linear system in the requested basis."""
    from .patch_mesh import extract_subcells

    dofh = dofh or DofHandler(geom.mesh)
    A = assemble_matrix(dofh, geom, problem, basis_kind)
    b = assemble_rhs(dofh, geom, problem, basis_kind)
    P = hierarchical_prolongation(geom, dofh) if basis_kind == HIERARCHICAL else None
    if flux_jump:
        subcells = subcells or extract_subcells(geom)
        bg = assemble_interface_flux_rhs(subcells, problem.interface_flux_jump(), dofh.n_dofs)
        bg = dofh.from_nodes(bg)
        b += bg if P is None else P.T @ bg
    ids, g = interpolate_boundary_values(dofh, geom, problem.dirichlet)
    if P is not None:
        # nodal boundary data -> hierarchical coefficients; coarse values
        # equal nodal values, fine ones subtract the coarse interpolant
        u = np.zeros(dofh.n_dofs)
        u[ids] = g
        coarse = np.zeros(dofh.n_dofs)
        cids = dofh.coarse_dofs
        coarse[cids] = u[cids]
        U = u - (P @ coarse - coarse)
        g = U[ids]
    Ac, bc = apply_constraints(A, b, ids, g)
    x0 = np.zeros(dofh.n_dofs)
    x0[ids] = g
    return LinearSystem(Ac, bc, x0, basis_kind, ids, g, P, dofh)


def export_matrix_market(path, A, comment=""):
    """Write ``A`` in MatrixMarket coordinate format."""
    try:
        scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
    except OSError as exc:
        raise OSError(f"cannot write matrix to {path}: {exc}") from exc
