import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locmodfe import patch_mesh as pm
from locmodfe import ref_fem
from locmodfe.exceptions import InvalidCut
from locmodfe.levelset import CircleLevelSet
from locmodfe.problems import InterfaceProblem
from locmodfe.ref_fem import HIERARCHICAL, NODES, P0, P1, P2, P3, STANDARD

MODES = (STANDARD, HIERARCHICAL)


@pytest.mark.parametrize("level,patches", [(0, 16), (1, 64), (2, 256), (3, 1024), (4, 4096),
                                           (5, 16384), (6, 65536)])
def test_mesh_sizes(level, patches):
    m = pm.PatchMesh(level)
    assert m.n_patches == patches
    assert m.n_nodes == (8 * 2**level + 1) ** 2
    assert m.h_patch == pytest.approx(2.0 / (4 * 2**level))


def test_patch_dofs_share_edges():
    m = pm.PatchMesh(0)
    d = m.patch_dofs()
    # right edge of patch 0 is left edge of patch 1
    np.testing.assert_array_equal(d[0, [2, 5, 8]], d[1, [0, 3, 6]])
    np.testing.assert_allclose(m.lattice_points()[d[0, 4]], [-0.75, -0.75])
    assert len(m.boundary_nodes()) == 4 * (m.nodes_per_dim - 1)


def test_classification_symmetric():
    m = pm.PatchMesh(2)
    cl = pm.set_material_ids(m, CircleLevelSet(0.5))
    cc = cl.cell_colors.reshape(m.patches_per_dim, -1)
    np.testing.assert_array_equal(cc, cc[::-1])
    np.testing.assert_array_equal(cc, cc.T)
    assert (cc == -1).sum() > 0 and (cc == 0).sum() > 0


def _cuts(**kw):
    return {int(k[1:]): np.array(v, dtype=float) for k, v in kw.items()}


def test_configurations():
    cd = pm._configuration(_cuts(e3=[0, 0.7], e5=[1, 0.6]), ())
    assert (cd.configuration, cd.femtype) == ("A", P2)
    assert (cd.r, cd.s) == pytest.approx((0.7, 0.4))
    cd = pm._configuration(_cuts(e3=[0, 0.2], e5=[1, 0.3]), ())
    assert (cd.configuration, cd.femtype) == ("A", P3)
    cd = pm._configuration(_cuts(e1=[0.3, 0], e3=[0, 0.4]), ())
    assert (cd.configuration, cd.femtype, cd.r, cd.s) == ("B", P3, 0.3, 0.4)
    cd = pm._configuration(_cuts(e1=[0.3, 0], e5=[1, 0.4]), ())
    assert (cd.configuration, cd.femtype) == ("B", P2)
    assert (cd.r, cd.s) == pytest.approx((0.7, 0.4))
    cd = pm._configuration(_cuts(e7=[0.25, 1]), (0,))
    assert (cd.configuration, cd.femtype, cd.r) == ("C", P1, 0.25)
    cd = pm._configuration({}, (0, 8))
    assert (cd.configuration, cd.femtype) == ("D", P1)
    assert pm._configuration({}, (0, 2)).configuration is None
    assert pm._configuration({}, (0,)).configuration is None


def test_invalid_cuts():
    with pytest.raises(InvalidCut):
        pm._configuration(_cuts(e1=[0.3, 0], e3=[0, 0.4], e5=[1, 0.5]), ())
    with pytest.raises(InvalidCut):
        pm._configuration(_cuts(e1=[0.3, 0]), (0,))


def _angles(nodes, ft):
    tri = ref_fem.TRIANGLES[ft]
    pts = np.asarray(nodes)
    return pm.triangle_angles(pts, tri)


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.01, 0.99), s=st.floats(0.01, 0.99), sym=st.integers(0, 7),
       conf=st.sampled_from("ABCD"), mode=st.sampled_from(MODES))
def test_placement_is_symmetry_equivariant(r, s, sym, conf, mode):
    """A rotated/reflected cut yields the rotated/reflected placement."""
    q, ft = pm.canonical_placement_batch(conf, [r], [s], mode)
    ref = pm.max_triangle_angles(q, ft)[0]
    edge = {"A": {3: q[0, 3], 5: q[0, 5]}, "B": {1: q[0, 1], 3: q[0, 3]},
            "C": {7: q[0, 7]}, "D": {}}[conf]
    nodes = {"C": (0,), "D": (0, 8)}.get(conf, ())
    R, perm = pm._SYMMETRIES[sym], pm._PERMS[sym]
    # image of the canonical cut under R, with node ids permuted accordingly
    inv = np.argsort(perm)
    img_edges = {int(inv[e]): pm._apply(R.T, p) for e, p in edge.items()}
    img_nodes = tuple(sorted(int(inv[c]) for c in nodes))
    cd = pm._configuration(img_edges, img_nodes)
    lp = pm.place_nodes(cd, mode)
    assert lp.femtype != P0
    got = _angles(lp.nodes, lp.femtype).max()
    assert got == pytest.approx(ref, abs=1e-9)
    assert set(map(tuple, np.round(lp.nodes, 12))) == set(
        map(tuple, np.round(pm._apply(R.T, q[0]), 12)))


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("conf", "ABCD")
def test_batch_placement_matches_scalar(conf, mode):
    rng = np.random.default_rng(3)
    r, s = rng.uniform(0.01, 0.99, (2, 40))
    q, ft = pm.canonical_placement_batch(conf, r, s, mode)
    for k in range(len(r)):
        edge = {"A": {3: q[k, 3].copy(), 5: q[k, 5].copy()},
                "B": {1: q[k, 1].copy(), 3: q[k, 3].copy()},
                "C": {7: q[k, 7].copy()}, "D": {}}[conf]
        if conf == "A" and mode == HIERARCHICAL:
            edge[3], edge[5] = np.array([0, q[k, 3, 1]]), np.array([1, q[k, 5, 1]])
        nodes, femtype, *_ = pm._place_canonical(conf, edge, mode)
        np.testing.assert_allclose(nodes, q[k], atol=1e-14)
        assert femtype == ft[k]


@pytest.mark.parametrize("mode", MODES)
def test_lemma_angle_bound_sampled(mode):
    rng = np.random.default_rng(7)
    for conf in "ABCD":
        r, s = rng.uniform(1e-6, 1 - 1e-6, (2, 5000))
        q, ft = pm.canonical_placement_batch(conf, r, s, mode)
        assert pm.max_triangle_angles(q, ft).max() <= 144.0


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("k", [0, 10, 137, 500, 990])
def test_geometry_is_a_valid_tiling(mode, k):
    mesh = pm.PatchMesh(2)
    ls = InterfaceProblem(y_offset=k / 1000 * mesh.h_patch).level_set
    geom = pm.build_geometry(mesh, ls, mode)
    sub = pm.extract_subcells(geom)
    aq = pm.polygon_areas(sub.points, sub.quads)
    at = pm.polygon_areas(sub.points, sub.triangles)
    assert aq.min() > 0 and at.min() > 0
    assert aq.sum() + at.sum() == pytest.approx(mesh.area, rel=1e-12)
    # interface nodes on patch edges lie on the circle, midpoints on chords
    mask = geom.interface_mask.copy()
    mask[:, 4] = False
    X = geom.X[geom.dofs[mask]]
    np.testing.assert_allclose(ls.value(X), 0.0, atol=1e-11)
    # discrete interface approximates the circumference
    e = sub.interface_edges()
    length = np.linalg.norm(sub.points[e[:, 0]] - sub.points[e[:, 1]], axis=1).sum()
    assert length == pytest.approx(np.pi, rel=5e-3)
    assert np.all(pm.triangle_angles(sub.points, sub.triangles) < 144.0)


def test_cut_info_and_init_fem_agree_on_cut_patches():
    mesh = pm.PatchMesh(1)
    ls = CircleLevelSet(0.5, 0.013)
    geom = pm.build_geometry(mesh, ls)
    cl = geom.classification
    for pid in geom.cut_patches():
        ci = geom.cut_info(pid)
        lo = pm.init_fem(mesh, cl, ls, pid)
        assert ci.configuration == lo.configuration
        assert ci.femtype == lo.femtype
        np.testing.assert_allclose(ci.M, lo.M, atol=1e-15)
        assert ci.M.shape == (2, 9) and ci.local_disc_chi.shape == (9,)
        conf, ft, r, s = pm.classify_cut(mesh, cl, ls, pid)
        assert conf == ci.configuration and ft == ci.femtype


def test_classify_uncut_patch_rejected():
    mesh = pm.PatchMesh(0)
    ls = CircleLevelSet(0.5)
    cl = pm.set_material_ids(mesh, ls)
    with pytest.raises(ValueError):
        pm.classify_cut(mesh, cl, ls, 0)


def test_unseparated_crossing_detected():
    # a tiny circle around a fine node but away from all patch corners
    mesh = pm.PatchMesh(0)
    ls = CircleLevelSet(0.1, 0.25, center_x=0.25)
    with pytest.raises(InvalidCut):
        pm.build_geometry(mesh, ls)


def test_statistics_symmetric_offsets():
    mesh = pm.PatchMesh(3)
    a = pm.mesh_statistics(pm.extract_subcells(
        pm.build_geometry(mesh, CircleLevelSet(0.5, 10 / 1000 * mesh.h_patch))))
    b = pm.mesh_statistics(pm.extract_subcells(
        pm.build_geometry(mesh, CircleLevelSet(0.5, 990 / 1000 * mesh.h_patch))))
    for key in a:
        assert a[key] == pytest.approx(b[key], rel=1e-6)


def test_line_intersection_parallel():
    from locmodfe.exceptions import DegenerateMapping
    z = np.zeros(2)
    with pytest.raises(DegenerateMapping):
        pm._line_intersection(z, np.array([1.0, 0]), np.array([0, 1.0]), np.array([1.0, 1]))
