"""Error norms, convergence rates and VTK output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fe_values, ref_fem
from .patch_mesh import Geometry, SubCellMesh, extract_subcells
from .ref_fem import STANDARD

L2 = "L2"
H1SEMI = "H1semi"


@dataclass(frozen=True)
class ErrorReport:
    level: int
    dofs: int
    l2_error: float
    h1_semi_error: float


def integrate_difference_norms(geom: Geometry, u_nodal, problem, norm=L2):
    """``||u_h - u||`` in L2 or the H1 seminorm.

    ``u_nodal`` holds nodal values (standard basis coefficients).  The exact
    solution branch is picked by the sign of ``chi_h`` at each quadrature
    point, matching the assembly.
    """
    if norm not in (L2, H1SEMI):
        raise ValueError(f"unknown norm {norm!r}")
    u_nodal = np.asarray(u_nodal, dtype=float)
    total = 0.0
    for ft in (ref_fem.P0, ref_fem.P1, ref_fem.P2, ref_fem.P3):
        pids = np.flatnonzero(geom.femtype == ft)
        if not len(pids):
            continue
        fv = fe_values.reinit(geom.node_coords(pids), ft, STANDARD)
        chi_q = fe_values.compute_local_disc_chi(fv, geom.local_disc_chi[pids])
        dom = np.where(chi_q < 0, -1, 1)
        uloc = u_nodal[geom.dofs[pids]]
        if norm == L2:
            uh = np.einsum("ni,niq->nq", uloc, fv.values)
            diff = uh - problem.exact(fv.points, dom)
            total += float(np.sum(diff * diff * fv.JxW))
        else:
            gh = np.einsum("ni,niqa->nqa", uloc, fv.grads)
            diff = gh - problem.exact_grad(fv.points, dom)
            total += float(np.sum((diff * diff).sum(axis=-1) * fv.JxW))
    return float(np.sqrt(total))


def convergence_rates(errors):
    """``log2(e_l / e_{l+1})`` for consecutive levels."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        raise ValueError("need at least two levels")
    return np.log2(e[:-1] / e[1:])


def fitted_rate(h, errors):
    """Least-squares slope of ``log(error)`` over ``log(h)``."""
    return float(np.polyfit(np.log(h), np.log(errors), 1)[0])


def plot_vtk(path, geom: Geometry, u_nodal=None, subcells: SubCellMesh | None = None, title="locmodfe"):
    """Write the sub-cell mesh as a legacy ASCII VTK unstructured grid."""
    sub = subcells or extract_subcells(geom)
    path = Path(path)
    pts = sub.points
    cells = [(c, 9) for c in sub.quads] + [(c, 5) for c in sub.triangles]
    marker = np.concatenate([sub.quad_marker, sub.tri_marker])
    femtype = np.concatenate([sub.quad_femtype, sub.tri_femtype])
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    size = sum(len(c) + 1 for c, _ in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    lines += [" ".join(map(str, [len(c), *c])) for c, _ in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(t) for _, t in cells]
    if u_nodal is not None:
        lines += [f"POINT_DATA {len(pts)}", "SCALARS solution double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in np.asarray(u_nodal)]
    lines += [f"CELL_DATA {len(cells)}", "SCALARS marker int 1", "LOOKUP_TABLE default"]
    lines += [str(int(m)) for m in marker]
    lines += ["SCALARS femtype int 1", "LOOKUP_TABLE default"]
    lines += [str(int(f)) for f in femtype]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def read_vtk_counts(path):
    """Parse the point and cell counts of a legacy VTK file written above."""
    n_points = n_cells = None
    conn = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] == "POINTS":
            n_points = int(tok[1])
        elif tok and tok[0] == "CELLS":
            n_cells = int(tok[1])
            for j in range(n_cells):
                conn.append([int(v) for v in lines[i + 1 + j].split()[1:]])
            i += n_cells
        i += 1
    return n_points, n_cells, conn
