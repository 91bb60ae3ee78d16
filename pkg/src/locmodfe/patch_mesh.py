"""Patch mesh, cut classification and interface-resolving node placement.

The coarse mesh is a uniform grid of square patches over a square domain.
Every patch carries the nine nodes of a Q2 element; these nodes are shared
between neighbouring patches and are the global degrees of freedom.  Patches
cut by the interface move some of their nodes so that the sub-triangulation
of the patch resolves a linear approximation of the interface.

Placement comes in two flavours.  ``standard`` follows the classical rules
for the midpoint (intersection of the lines through opposite edge nodes).
``hierarchical`` keeps the midpoint on one of the patch diagonals so that the
coarse space of piecewise linears on the two diagonal halves is contained in
the fine space; where that would create flat triangles an outer edge node is
shifted as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ref_fem
from .exceptions import DegenerateMapping, InvalidCut
from .levelset import LevelSet, find_edge_cut
from .ref_fem import ANTI, MAIN, NODES, P0, P1, P2, P3

STANDARD = ref_fem.STANDARD
HIERARCHICAL = ref_fem.HIERARCHICAL

SNAP_TOL = 1e-10
# midpoint distance (in patch units) below which an outer node is shifted
HIER_SHIFT_LIMIT = 0.25
HIER_C_SHIFT_LIMIT = 0.5

# local edge node -> (first corner, second corner); edges run left->right or
# bottom->top
EDGES = {1: (0, 2), 5: (2, 8), 7: (6, 8), 3: (0, 6)}
EDGE_NODES = (1, 5, 7, 3)
OPPOSITE_EDGE = {1: 7, 7: 1, 3: 5, 5: 3}
CORNER_EDGES = {0: (1, 3), 2: (1, 5), 6: (3, 7), 8: (5, 7)}
OPPOSITE_CORNER = {0: 8, 8: 0, 2: 6, 6: 2}

CONFIGS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class PatchMesh:
    """Uniform patch grid over ``[lower, upper]^2`` with ``4 * 2**level`` patches per direction."""

    level: int
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("refinement level must be non-negative")

    @property
    def patches_per_dim(self):
        return 4 * 2**self.level

    @property
    def n_patches(self):
        return self.patches_per_dim**2

    @property
    def h_patch(self):
        return (self.upper - self.lower) / self.patches_per_dim

    @property
    def nodes_per_dim(self):
        return 2 * self.patches_per_dim + 1

    @property
    def n_nodes(self):
        return self.nodes_per_dim**2

    @property
    def area(self):
        return (self.upper - self.lower) ** 2

    def lattice_points(self):
        """Unmoved coordinates of all fine-lattice nodes, shape ``(n_nodes, 2)``."""
        t = np.linspace(self.lower, self.upper, self.nodes_per_dim)
        xx, yy = np.meshgrid(t, t)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def patch_indices(self):
        n = self.patches_per_dim
        py, px = np.divmod(np.arange(self.n_patches), n)
        return px, py

    def patch_dofs(self):
        """Global node id of every local node, shape ``(n_patches, 9)``."""
        px, py = self.patch_indices()
        lx = np.array([i % 3 for i in range(9)])
        ly = np.array([i // 3 for i in range(9)])
        ix = 2 * px[:, None] + lx[None, :]
        iy = 2 * py[:, None] + ly[None, :]
        return iy * self.nodes_per_dim + ix

    def patch_origins(self):
        px, py = self.patch_indices()
        return np.column_stack([self.lower + px * self.h_patch, self.lower + py * self.h_patch])

    def boundary_nodes(self):
        n = self.nodes_per_dim
        iy, ix = np.divmod(np.arange(self.n_nodes), n)
        mask = (ix == 0) | (iy == 0) | (ix == n - 1) | (iy == n - 1)
        return np.flatnonzero(mask)

    def corner_lattice_ids(self):
        """Global node ids of the patch-corner lattice, shape ``(ppd+1, ppd+1)``."""
        n = self.nodes_per_dim
        idx = np.arange(0, n, 2)
        return idx[:, None] * n + idx[None, :]


@dataclass
class PatchClassification:
    node_colors: np.ndarray  # (ppd+1, ppd+1) indexed [iy, ix]
    cell_colors: np.ndarray  # (n_patches,)

    def corner_colors(self, mesh, pid):
        n = mesh.patches_per_dim
        py, px = divmod(pid, n)
        c = self.node_colors
        return {0: c[py, px], 2: c[py, px + 1], 6: c[py + 1, px], 8: c[py + 1, px + 1]}


def set_material_ids(mesh: PatchMesh, ls: LevelSet) -> PatchClassification:
    """Colour patch corners by sub-domain and patches by their corners.

    A patch gets colour +1 or -1 when all four corners share that colour and
    0 (interface patch) otherwise.
    """
    pts = mesh.lattice_points()[mesh.corner_lattice_ids().ravel()]
    n = mesh.patches_per_dim
    colors = np.asarray(ls.domain(pts)).reshape(n + 1, n + 1)
    positive = (
        (colors[:-1, :-1] > 0).astype(int)
        + (colors[:-1, 1:] > 0)
        + (colors[1:, :-1] > 0)
        + (colors[1:, 1:] > 0)
    ).ravel()
    cell = np.zeros(mesh.n_patches, dtype=int)
    cell[positive == 4] = 1
    cell[positive == 0] = -1
    return PatchClassification(colors, cell)


# ---------------------------------------------------------------------------
# edge cuts

class EdgeCutCache:
    """Cut fraction per global edge, computed once so shared edges agree bitwise.

    Edges are keyed by the global id of their middle node and parametrised in
    the direction left->right / bottom->top.
    """

    def __init__(self, mesh: PatchMesh, ls: LevelSet):
        self.mesh = mesh
        self.ls = ls
        self.lattice = mesh.lattice_points()
        self._cache: dict[int, tuple[str, float]] = {}

    def get(self, mid_gid, v1_gid, v2_gid):
        """Return ``("node", 0|1)`` for a cut at an end point or ``("edge", s)``."""
        if mid_gid not in self._cache:
            s0 = find_edge_cut(self.lattice[v1_gid], self.lattice[v2_gid], self.ls)
            if s0 < SNAP_TOL:
                res = ("node", 0.0)
            elif s0 > 1.0 - SNAP_TOL:
                res = ("node", 1.0)
            else:
                res = ("edge", s0)
            self._cache[mid_gid] = res
        return self._cache[mid_gid]


@dataclass
class CutData:
    """Raw cut description of one patch in local coordinates."""

    configuration: str | None
    edge_cuts: dict = field(default_factory=dict)  # edge node -> local point
    node_cuts: tuple = ()  # local corner ids
    r: float = float("nan")
    s: float = float("nan")
    femtype: int = P0


def patch_cut_data(mesh, classification, cache: EdgeCutCache, pid) -> CutData:
    """Find the cut points of patch ``pid`` and its configuration (A-D)."""
    if classification.cell_colors[pid] != 0:
        return CutData(None)
    colors = classification.corner_colors(mesh, pid)
    dofs = mesh.patch_dofs()[pid] if not hasattr(cache, "_dofs") else cache._dofs[pid]
    edge_cuts = {}
    node_cuts = set()
    for e in EDGE_NODES:
        c1, c2 = EDGES[e]
        if colors[c1] == colors[c2]:
            continue
        kind, s0 = cache.get(dofs[e], dofs[c1], dofs[c2])
        if kind == "node":
            node_cuts.add(c1 if s0 == 0.0 else c2)
        else:
            p = NODES[c1] + s0 * (NODES[c2] - NODES[c1])
            edge_cuts[e] = p
    return _configuration(edge_cuts, tuple(sorted(node_cuts)), pid)


def _configuration(edge_cuts, node_cuts, pid=None):
    n_cuts = len(edge_cuts) + len(node_cuts)
    where = f" in patch {pid}" if pid is not None else ""
    if n_cuts > 2:
        raise InvalidCut(f"interface cuts {n_cuts} boundary points{where}")
    if n_cuts < 2:
        # interface only touches a corner
        return CutData(None, edge_cuts, node_cuts)
    if len(edge_cuts) == 2:
        e1, e2 = sorted(edge_cuts)
        if OPPOSITE_EDGE[e1] == e2:
            cd = CutData("A", edge_cuts, node_cuts)
            if e1 == 3:  # left/right
                a, b = edge_cuts[3][1], edge_cuts[5][1]
            else:  # bottom/top
                a, b = edge_cuts[1][0], edge_cuts[7][0]
            cd.r, cd.s = a, 1.0 - b
            cd.femtype = P2 if cd.r + cd.s >= 1.0 else P3
            return cd
        corner = _shared_corner(e1, e2)
        cd = CutData("B", edge_cuts, node_cuts)
        origin = NODES[corner]
        horiz = 1 if 1 in (e1, e2) else 7
        vert = 3 if 3 in (e1, e2) else 5
        cd.r = abs(edge_cuts[horiz][0] - origin[0])
        cd.s = abs(edge_cuts[vert][1] - origin[1])
        cd.femtype = P3 if corner in (0, 8) else P2
        return cd
    if len(edge_cuts) == 1:
        (e,) = edge_cuts
        (c,) = node_cuts
        if e in CORNER_EDGES[c]:
            raise InvalidCut(f"interface enters and leaves through one edge{where}")
        cd = CutData("C", edge_cuts, node_cuts)
        cd.femtype = P1
        cd.r = _c_fraction(c, e, edge_cuts[e])
        return cd
    c1, c2 = node_cuts
    if OPPOSITE_CORNER[c1] == c2:
        cd = CutData("D", edge_cuts, node_cuts)
        cd.femtype = P1
        return cd
    # interface matched by a patch edge: not cut
    return CutData(None, edge_cuts, node_cuts)


def _shared_corner(e1, e2):
    (c,) = set(EDGES[e1]) & set(EDGES[e2])
    return c


def _c_fraction(corner, edge, point):
    """Distance of a C-type cut from the edge end adjacent to ``corner``."""
    a, b = EDGES[edge]
    near = a if b == OPPOSITE_CORNER[corner] else b
    return float(np.linalg.norm(point - NODES[near]))


def classify_cut(mesh, classification, ls, pid, cache=None):
    """Return ``(configuration, femtype, r, s)`` of interface patch ``pid``."""
    if classification.cell_colors[pid] != 0:
        raise ValueError(f"patch {pid} is not an interface patch")
    cache = cache or EdgeCutCache(mesh, ls)
    cd = patch_cut_data(mesh, classification, cache, pid)
    return cd.configuration, cd.femtype, cd.r, cd.s


# ---------------------------------------------------------------------------
# symmetries of the unit square

_SYMMETRIES = [
    np.array([[1, 0], [0, 1]]),
    np.array([[0, 1], [1, 0]]),
    np.array([[-1, 0], [0, 1]]),
    np.array([[0, 1], [-1, 0]]),
    np.array([[1, 0], [0, -1]]),
    np.array([[0, -1], [1, 0]]),
    np.array([[-1, 0], [0, -1]]),
    np.array([[0, -1], [-1, 0]]),
]
_CENTER = np.array([0.5, 0.5])


def _apply(R, p):
    return (np.asarray(p) - _CENTER) @ R.T + _CENTER


def _perm(R):
    img = _apply(R, NODES)
    return np.array([int(np.argmin(np.abs(NODES - q).sum(axis=1))) for q in img])


_PERMS = [_perm(R) for R in _SYMMETRIES]


def _swaps_diagonals(R):
    v = R @ np.array([1, 1])
    return v[0] != v[1]


def _line_intersection(p1, p2, q1, q2):
    d1 = p2 - p1
    d2 = q2 - q1
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-14 * max(np.dot(d1, d1), np.dot(d2, d2), 1e-300):
        raise DegenerateMapping("node placement lines are parallel")
    t = ((q1[0] - p1[0]) * d2[1] - (q1[1] - p1[1]) * d2[0]) / den
    return p1 + t * d1


@dataclass
class LocalPlacement:
    """Node placement of one cut patch in local patch coordinates."""

    nodes: np.ndarray  # (9, 2)
    femtype: int
    coarse_diagonal: str
    interface_nodes: tuple
    moved_outer: tuple = ()


def _canonical(cd: CutData, R, perm):
    edge = {int(perm[e]): _apply(R, p) for e, p in cd.edge_cuts.items()}
    nodes = tuple(sorted(int(perm[c]) for c in cd.node_cuts))
    conf = cd.configuration
    if conf == "A":
        return (set(edge) == {3, 5} and edge[3][1] >= edge[5][1]), edge, nodes
    if conf == "B":
        return set(edge) == {1, 3}, edge, nodes
    if conf == "C":
        return (nodes == (0,) and set(edge) == {7}), edge, nodes
    return nodes == (0, 8), edge, nodes


def _place_canonical(conf, edge, placement):
    q = NODES.copy()
    for e, p in edge.items():
        q[e] = p
    moved = ()
    if conf == "A":
        a, b = q[3][1], q[5][1]
        if placement == STANDARD:
            q[4] = _line_intersection(q[3], q[5], q[1], q[7])
        else:
            x = a / (1.0 + a - b)
            q[4] = (x, x)
            if x < HIER_SHIFT_LIMIT:
                q[1] = (x, 0.0)
                moved = (1,)
            elif x > 1.0 - HIER_SHIFT_LIMIT:
                q[7] = (x, 1.0)
                moved = (7,)
        return q, P2, MAIN, (3, 4, 5), moved
    if conf == "B":
        if placement == STANDARD:
            q[4] = _line_intersection(q[5], q[3], q[1], q[7])
            return q, P3, ANTI, (1, 3), moved
        a, b = q[1][0], q[3][1]
        if a + b >= 1.0:
            # B.1: midpoint on the chord and the main diagonal
            t = a * b / (a + b)
            q[4] = (t, t)
            return q, P2, MAIN, (1, 4, 3), moved
        # B.2: small corner cut off by a single triangle, midpoint stays central
        return q, P3, ANTI, (1, 3), moved
    if conf == "C":
        r = q[7][0]
        if placement == STANDARD:
            q[4] = _line_intersection(q[0], q[7], q[3], q[5])
            return q, P1, MAIN, (0, 4, 7), moved
        q[4] = (r / (1.0 + r), 1.0 / (1.0 + r))
        if r < HIER_C_SHIFT_LIMIT:
            q[3] = (0.0, q[4][1])
            moved = (3,)
        return q, P1, ANTI, (0, 4, 7), moved
    # D
    return q, P1, MAIN, (0, 4, 8), moved


def place_nodes(cd: CutData, placement=STANDARD) -> LocalPlacement:
    """Local node positions for a cut patch (configurations A-D)."""
    if cd.configuration is None:
        return LocalPlacement(NODES.copy(), P0, MAIN, tuple(cd.node_cuts))
    for R, perm in zip(_SYMMETRIES, _PERMS):
        ok, edge, _ = _canonical(cd, R, perm)
        if ok:
            break
    else:  # pragma: no cover - every configuration has a canonical image
        raise InvalidCut(f"no canonical form for configuration {cd.configuration}")
    q, ft, diag, iface, moved = _place_canonical(cd.configuration, edge, placement)
    # canonical node perm[i] is the image of actual node i
    nodes = _apply(R.T, q[perm])
    if _swaps_diagonals(R):
        ft = {P2: P3, P3: P2}.get(ft, ft)
        diag = ANTI if diag == MAIN else MAIN
    inv = np.argsort(perm)
    iface = tuple(sorted(int(inv[i]) for i in iface))
    moved = tuple(int(inv[i]) for i in moved)
    return LocalPlacement(nodes, ft, diag, iface, moved)


def _line_intersection_batch(p1, p2, q1, q2):
    d1 = p2 - p1
    d2 = q2 - q1
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    t = ((q1[:, 0] - p1[:, 0]) * d2[:, 1] - (q1[:, 1] - p1[:, 1]) * d2[:, 0]) / den
    return p1 + t[:, None] * d1


def canonical_placement_batch(configuration, r, s=None, placement=STANDARD):
    """Vectorised node placement of many patches in canonical orientation.

    Cut parameters follow the configuration definitions: A takes ``(r, s)``
    (left cut at height ``r``, right cut at ``1 - s``, reflected when
    ``r + s < 1``), B cuts ``(r, 0)`` and ``(0, s)``, C cuts corner 0 and
    ``(r, 1)``; D ignores both.  Outer-node moves of the hierarchical
    placement are included.  Returns ``(nodes (n, 9, 2), femtype (n,))``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = np.zeros_like(r) if s is None else np.broadcast_to(np.asarray(s, dtype=float), r.shape)
    n = len(r)
    q = np.broadcast_to(NODES, (n, 9, 2)).copy()
    ft = np.empty(n, dtype=int)
    if configuration == "A":
        flip = r + s < 1.0
        a = np.where(flip, 1.0 - r, r)
        b = np.where(flip, s, 1.0 - s)
        q[:, 3, 1] = a
        q[:, 5, 1] = b
        ft[:] = P2
        if placement == STANDARD:
            q[:, 4] = _line_intersection_batch(q[:, 3], q[:, 5], q[:, 1], q[:, 7])
        else:
            x = a / (1.0 + a - b)
            q[:, 4] = np.column_stack([x, x])
            lo = x < HIER_SHIFT_LIMIT
            hi = x > 1.0 - HIER_SHIFT_LIMIT
            q[lo, 1, 0] = x[lo]
            q[hi, 7, 0] = x[hi]
    elif configuration == "B":
        q[:, 1, 0] = r
        q[:, 3, 1] = s
        if placement == STANDARD:
            q[:, 4] = _line_intersection_batch(q[:, 5], q[:, 3], q[:, 1], q[:, 7])
            ft[:] = P3
        else:
            big = r + s >= 1.0
            t = r * s / (r + s)
            q[big, 4] = np.column_stack([t, t])[big]
            ft[:] = np.where(big, P2, P3)
    elif configuration == "C":
        q[:, 7, 0] = r
        ft[:] = P1
        if placement == STANDARD:
            q[:, 4] = _line_intersection_batch(q[:, 0], q[:, 7], q[:, 3], q[:, 5])
        else:
            q[:, 4] = np.column_stack([r / (1.0 + r), 1.0 / (1.0 + r)])
            small = r < HIER_C_SHIFT_LIMIT
            q[small, 3, 1] = q[small, 4, 1]
    elif configuration == "D":
        ft[:] = P1
    else:
        raise ValueError(f"unknown configuration {configuration!r}")
    return q, ft


def max_triangle_angles(nodes, femtype):
    """Largest interior angle (degrees) of the sub-triangles of each patch."""
    out = np.zeros(len(nodes))
    for t in (P1, P2, P3):
        sel = np.flatnonzero(femtype == t)
        if not len(sel):
            continue
        tri = ref_fem.TRIANGLES[t]
        xy = nodes[sel][:, tri]  # (m, 8, 3, 2)
        worst = np.zeros(len(sel))
        for k in range(3):
            u = xy[:, :, (k + 1) % 3] - xy[:, :, k]
            v = xy[:, :, (k + 2) % 3] - xy[:, :, k]
            cos = (u * v).sum(-1) / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1))
            worst = np.maximum(worst, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).max(axis=1))
        out[sel] = worst
    return out


# ---------------------------------------------------------------------------
# whole-mesh geometry

@dataclass(frozen=True)
class CutInfo:
    """Geometry of one patch: type, mapping nodes and discrete level set."""

    configuration: str | None
    femtype: int
    r: float
    s: float
    M: np.ndarray               # (2, 9) physical node coordinates
    local_disc_chi: np.ndarray  # (9,)
    nodes_at_interface: tuple   # 0-based local node ids
    coarse_diagonal: str = MAIN


@dataclass
class Geometry:
    """Interface-adapted node placement for every patch of a mesh."""

    mesh: PatchMesh
    levelset: LevelSet
    placement: str
    classification: PatchClassification
    X: np.ndarray            # (n_nodes, 2) moved node coordinates
    dofs: np.ndarray         # (n_patches, 9)
    femtype: np.ndarray      # (n_patches,)
    configuration: np.ndarray  # (n_patches,) object: None or 'A'..'D'
    r: np.ndarray
    s: np.ndarray
    coarse_diagonal: np.ndarray  # (n_patches,) object
    local_disc_chi: np.ndarray   # (n_patches, 9)
    interface_mask: np.ndarray   # (n_patches, 9) bool
    moved_outer: dict            # global node -> patch that moved it

    @property
    def n_patches(self):
        return self.mesh.n_patches

    def node_coords(self, pids=None):
        """Physical node coordinates ``(n, 9, 2)``."""
        d = self.dofs if pids is None else self.dofs[pids]
        return self.X[d]

    def local_node_coords(self, pids=None):
        """Node coordinates in local patch units ``(n, 9, 2)``."""
        pids = np.arange(self.n_patches) if pids is None else np.asarray(pids)
        org = self.mesh.patch_origins()[pids]
        return (self.X[self.dofs[pids]] - org[:, None, :]) / self.mesh.h_patch

    def cut_info(self, pid) -> CutInfo:
        return CutInfo(
            self.configuration[pid],
            int(self.femtype[pid]),
            float(self.r[pid]),
            float(self.s[pid]),
            self.X[self.dofs[pid]].T.copy(),
            self.local_disc_chi[pid].copy(),
            tuple(np.flatnonzero(self.interface_mask[pid])),
            self.coarse_diagonal[pid],
        )

    def cut_patches(self):
        return np.flatnonzero(self.femtype != P0)

    def hierarchical_transforms(self, pids):
        """Local 9x9 hierarchical transforms for the given patches."""
        pids = np.asarray(pids)
        local = self.local_node_coords(pids)
        out = np.empty((len(pids), 9, 9))
        for k, pid in enumerate(pids):
            out[k] = ref_fem.hierarchical_transform(
                int(self.femtype[pid]), local[k], self.coarse_diagonal[pid]
            )
        return out


def build_geometry(mesh: PatchMesh, ls: LevelSet, placement=STANDARD) -> Geometry:
    """Classify all patches and place the nodes of every interface patch."""
    if placement not in (STANDARD, HIERARCHICAL):
        raise ValueError(f"unknown placement {placement!r}")
    classification = set_material_ids(mesh, ls)
    cache = EdgeCutCache(mesh, ls)
    dofs = mesh.patch_dofs()
    cache._dofs = dofs
    X = mesh.lattice_points()
    n = mesh.n_patches
    h = mesh.h_patch
    origins = mesh.patch_origins()

    femtype = np.zeros(n, dtype=int)
    configuration = np.empty(n, dtype=object)
    coarse = np.full(n, MAIN, dtype=object)
    r = np.full(n, np.nan)
    s = np.full(n, np.nan)
    iface = np.zeros((n, 9), dtype=bool)
    moved_requests = {}
    placements = {}

    for pid in np.flatnonzero(classification.cell_colors == 0):
        cd = patch_cut_data(mesh, classification, cache, pid)
        lp = place_nodes(cd, placement)
        configuration[pid] = cd.configuration
        femtype[pid] = lp.femtype
        coarse[pid] = lp.coarse_diagonal
        r[pid], s[pid] = cd.r, cd.s
        iface[pid, list(lp.interface_nodes)] = True
        placements[pid] = lp
        # cut nodes on edges come from the shared cache, only the midpoint is
        # patch-owned
        for e in cd.edge_cuts:
            c1, c2 = EDGES[e]
            kind, s0 = cache.get(dofs[pid, e], dofs[pid, c1], dofs[pid, c2])
            X[dofs[pid, e]] = X[dofs[pid, c1]] + s0 * (X[dofs[pid, c2]] - X[dofs[pid, c1]])
        if cd.configuration is not None:
            X[dofs[pid, 4]] = origins[pid] + h * lp.nodes[4]
        for i in lp.moved_outer:
            gid = int(dofs[pid, i])
            moved_requests.setdefault(gid, []).append((pid, origins[pid] + h * lp.nodes[i]))

    moved_outer = {}
    for gid in sorted(moved_requests):
        reqs = sorted(moved_requests[gid], key=lambda t: t[0])
        pid, pos = reqs[0]
        X[gid] = pos
        moved_outer[gid] = pid

    chi = np.asarray(ls.value(X))
    local_chi = chi[dofs]
    local_chi[iface] = 0.0
    _enforce_sides(local_chi, iface, femtype, configuration, placements, classification, mesh)
    _check_uncut(local_chi, classification, femtype)

    return Geometry(
        mesh, ls, placement, classification, X, dofs, femtype, configuration,
        r, s, coarse, local_chi, iface, moved_outer,
    )


def _enforce_sides(local_chi, iface, femtype, configuration, placements, classification, mesh):
    """Make chi_h sign-consistent on every sub-cell of every cut patch.

    Non-interface nodes take the sign of the sub-domain they lie in according
    to the discrete interface; this only changes values where the curved
    interface passes between such a node and the chord approximating it.
    """
    for pid, lp in placements.items():
        if configuration[pid] is None:
            continue
        vals = local_chi[pid]
        cells = ref_fem.cells(femtype[pid])
        # propagate sides across sub-cells not separated by interface edges
        side = np.zeros(9)
        colors = classification.corner_colors(mesh, pid)
        for c in ref_fem.CORNERS:
            if not iface[pid, c]:
                side[c] = colors[c]
        changed = True
        while changed:
            changed = False
            for cell in cells:
                known = [side[i] for i in cell if not iface[pid, i] and side[i] != 0]
                if not known:
                    continue
                for i in cell:
                    if not iface[pid, i] and side[i] == 0:
                        side[i] = known[0]
                        changed = True
        for i in range(9):
            if iface[pid, i] or side[i] == 0:
                continue
            if side[i] > 0 and vals[i] < 0:
                vals[i] = -vals[i]
            elif side[i] < 0 and vals[i] >= 0:
                vals[i] = -vals[i] if vals[i] > 0 else -1e-300
        for cell in cells:
            v = vals[cell]
            nz = v[v != 0]
            if len(nz) and not (np.all(nz < 0) or np.all(nz > 0)):
                raise InvalidCut(f"discrete level set changes sign inside a sub-cell of patch {pid}")


def _check_uncut(local_chi, classification, femtype):
    uniform = classification.cell_colors != 0
    neg = (local_chi < 0) & uniform[:, None]
    bad_pos = uniform & (classification.cell_colors > 0) & neg.any(axis=1)
    bad_neg = uniform & (classification.cell_colors < 0) & (local_chi >= 0).any(axis=1)
    # exact zeros on the boundary of a negative patch are tolerated
    if bad_neg.any():
        vals = local_chi[bad_neg]
        bad_neg[bad_neg] = (vals > 0).any(axis=1)
    bad = np.flatnonzero(bad_pos | bad_neg)
    if len(bad):
        raise InvalidCut(
            f"interface crosses patch {int(bad[0])} without separating its corners; refine the mesh"
        )


def init_fem(mesh, classification, ls, pid, placement=STANDARD, cache=None) -> CutInfo:
    """Local view of a single patch (ignores outer-node moves by neighbours)."""
    cache = cache or EdgeCutCache(mesh, ls)
    cd = patch_cut_data(mesh, classification, cache, pid)
    lp = place_nodes(cd, placement)
    origin = mesh.patch_origins()[pid]
    M = origin + mesh.h_patch * lp.nodes
    chi = np.asarray(ls.value(M))
    chi[list(lp.interface_nodes)] = 0.0
    return CutInfo(cd.configuration, lp.femtype, cd.r, cd.s, M.T.copy(), chi,
                   tuple(lp.interface_nodes), lp.coarse_diagonal)


# ---------------------------------------------------------------------------
# sub-cells and statistics

@dataclass
class SubCellMesh:
    """Sub-quadrilaterals and sub-triangles of all patches."""

    points: np.ndarray        # (n_nodes, 2)
    quads: np.ndarray         # (nq, 4) global node ids
    triangles: np.ndarray     # (nt, 3)
    quad_marker: np.ndarray   # values in {1, 2}
    tri_marker: np.ndarray
    quad_patch: np.ndarray
    tri_patch: np.ndarray
    quad_femtype: np.ndarray
    tri_femtype: np.ndarray

    @property
    def n_cells(self):
        return len(self.quads) + len(self.triangles)

    def polygons(self):
        """Iterate ``(vertex ids, marker)`` over all sub-cells."""
        for c, m in zip(self.quads, self.quad_marker):
            yield c, m
        for c, m in zip(self.triangles, self.tri_marker):
            yield c, m

    def interface_edges(self):
        """Sub-cell edges separating marker 1 from marker 2, as node-id pairs."""
        a, b, m = [], [], []
        for conn, marker in ((self.quads, self.quad_marker), (self.triangles, self.tri_marker)):
            k = conn.shape[1]
            for j in range(k):
                a.append(conn[:, j]); b.append(conn[:, (j + 1) % k]); m.append(marker)
        a = np.concatenate(a).astype(np.int64)
        b = np.concatenate(b).astype(np.int64)
        m = np.concatenate(m)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * len(self.points) + hi
        order = np.argsort(key, kind="stable")
        key, m = key[order], m[order]
        uniq, start, count = np.unique(key, return_index=True, return_counts=True)
        mn = np.minimum.reduceat(m, start)
        mx = np.maximum.reduceat(m, start)
        sel = uniq[(mn == 1) & (mx == 2)]
        return np.column_stack([sel // len(self.points), sel % len(self.points)]).astype(int)


def extract_subcells(geom: Geometry) -> SubCellMesh:
    quads, qm, qp, qf = [], [], [], []
    tris, tm, tp, tf = [], [], [], []
    for ft in (P0, P1, P2, P3):
        pids = np.flatnonzero(geom.femtype == ft)
        if not len(pids):
            continue
        conn = ref_fem.cells(ft)
        chi = geom.local_disc_chi[pids]
        for cell in conn:
            mean = chi[:, cell].mean(axis=1)
            marker = np.where(mean < 0, 1, 2)
            ids = geom.dofs[pids][:, cell]
            if ft == P0:
                quads.append(ids); qm.append(marker); qp.append(pids); qf.append(np.full(len(pids), ft))
            else:
                tris.append(ids); tm.append(marker); tp.append(pids); tf.append(np.full(len(pids), ft))

    def cat(a, shape):
        return np.concatenate(a) if a else np.zeros(shape, dtype=int)

    return SubCellMesh(
        geom.X,
        cat(quads, (0, 4)), cat(tris, (0, 3)),
        cat(qm, (0,)), cat(tm, (0,)),
        cat(qp, (0,)), cat(tp, (0,)),
        cat(qf, (0,)), cat(tf, (0,)),
    )


def polygon_areas(points, conn):
    """Signed shoelace areas of polygons given by ``conn`` (n, k)."""
    xy = points[conn]
    x, y = xy[..., 0], xy[..., 1]
    return 0.5 * (x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y).sum(axis=1)


def edge_lengths(points, conn):
    xy = points[conn]
    return np.linalg.norm(np.roll(xy, -1, axis=1) - xy, axis=2)


def triangle_angles(points, conn):
    """Interior angles (degrees) of triangles, shape ``(n, 3)``."""
    xy = points[conn]
    out = np.empty(conn.shape, dtype=float)
    for k in range(3):
        a = xy[:, k]
        u = xy[:, (k + 1) % 3] - a
        v = xy[:, (k + 2) % 3] - a
        cos = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def mesh_statistics(sub: SubCellMesh) -> dict:
    """Area, edge length and aspect-ratio extremes of the sub-cell mesh."""
    if sub.n_cells == 0:
        raise ValueError("empty sub-cell mesh")
    areas, emax, emin = [], [], []
    for conn in (sub.quads, sub.triangles):
        if len(conn):
            areas.append(np.abs(polygon_areas(sub.points, conn)))
            el = edge_lengths(sub.points, conn)
            emax.append(el.max(axis=1))
            emin.append(el.min(axis=1))
    areas = np.concatenate(areas)
    emax = np.concatenate(emax)
    emin = np.concatenate(emin)
    return {
        "area_max": float(areas.max()),
        "area_min": float(areas.min()),
        "area_ratio": float(areas.max() / areas.min()),
        "edge_max": float(emax.max()),
        "edge_min": float(emin.min()),
        "max_aspect": float((emax / emin).max()),
    }
