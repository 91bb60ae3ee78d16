"""Worked examples for the individual operations."""

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from locmodfe import fe_values, patch_mesh as pm, postprocess, ref_fem, solvers, system
from locmodfe.levelset import CircleLevelSet, find_edge_cut
from locmodfe.problems import ConstantProblem, InterfaceProblem
from locmodfe.ref_fem import NODES, P0, P1, P2, STANDARD


def test_levelset_values():
    ls = CircleLevelSet(0.5, 0.0)
    assert ls.value([0.5, 0]) == 0.0
    assert ls.value([0, 0]) == -0.25
    assert ls.value([1, 1]) == 1.75
    assert [ls.domain(p) for p in ([0, 0], [1, 1], [0.5, 0])] == [-1, 1, 1]


def test_edge_cut_values():
    ls = CircleLevelSet(0.5)
    assert find_edge_cut([0.4, 0], [0.6, 0], ls) == pytest.approx(0.5, abs=1e-12)
    assert find_edge_cut([0, 0.4], [0, 0.6], ls) == pytest.approx(0.5, abs=1e-12)
    expect = (0.5 / np.sqrt(2) - 0.3) / 0.2
    assert find_edge_cut([0.3, 0.3], [0.5, 0.5], ls) == pytest.approx(expect, abs=1e-10)


def test_level0_classification():
    mesh = pm.PatchMesh(0)
    cl = pm.set_material_ids(mesh, CircleLevelSet(0.5))
    assert (cl.cell_colors == 0).sum() == 4
    geom = pm.build_geometry(mesh, CircleLevelSet(0.5))
    assert set(geom.configuration[geom.cut_patches()]) == {"D"}
    # patch (0, 0.5)^2
    pid = 2 * 4 + 2
    np.testing.assert_allclose(mesh.patch_origins()[pid], [0, 0])
    assert cl.cell_colors[pid] == 0
    assert cl.corner_colors(mesh, pid) == {0: -1, 2: 1, 6: 1, 8: 1}
    far = pm.set_material_ids(mesh, CircleLevelSet(10.0))
    assert len(set(far.cell_colors)) == 1 and 0 not in far.cell_colors


def test_classify_examples():
    cd = pm._configuration({1: np.array([0.3, 0.0]), 7: np.array([0.6, 1.0])}, ())
    assert cd.configuration == "A"
    cd = pm._configuration({3: np.array([0, 0.7]), 5: np.array([1, 0.4])}, ())
    assert (cd.r, cd.s, cd.femtype) == pytest.approx((0.7, 0.6, P2))
    cd = pm._configuration({}, (2, 6))
    assert (cd.configuration, cd.femtype) == ("D", P1)


def test_init_fem_examples():
    mesh = pm.PatchMesh(0, lower=0.0, upper=4.0)  # unit patches
    ls = CircleLevelSet(0.5, 10.0)
    cl = pm.set_material_ids(mesh, ls)
    ci = pm.init_fem(mesh, cl, ls, 0)
    np.testing.assert_allclose(ci.M.T, NODES)
    assert ci.configuration is None and ci.femtype == P0
    for a, b, m in ((0.5, 0.5, (0.5, 0.5)), (0.2, 0.6, (0.5, 0.4))):
        cd = pm._configuration({3: np.array([0, a]), 5: np.array([1, b])}, ())
        lp = pm.place_nodes(cd, STANDARD)
        np.testing.assert_allclose(lp.nodes[4], m, atol=1e-14)


def test_subcell_examples():
    mesh = pm.PatchMesh(4)
    geom = pm.build_geometry(mesh, CircleLevelSet(0.5))
    sub = pm.extract_subcells(geom)
    n_cut = len(geom.cut_patches())
    assert len(sub.quads) == 4 * (mesh.n_patches - n_cut)
    assert len(sub.triangles) == 8 * n_cut
    for pid in range(mesh.n_patches):
        if geom.femtype[pid] == P0:
            assert len(set(sub.quad_marker[sub.quad_patch == pid])) == 1
    a_patch = [p for p in geom.cut_patches() if geom.configuration[p] == "A"]
    geom2 = pm.build_geometry(mesh, CircleLevelSet(0.5, 990 / 1000 * mesh.h_patch))
    sub2 = pm.extract_subcells(geom2)
    a_patch = [p for p in geom2.cut_patches() if geom2.configuration[p] == "A"]
    assert a_patch
    for p in a_patch:
        m = sub2.tri_marker[sub2.tri_patch == p]
        assert sorted([(m == 1).sum(), (m == 2).sum()]) in ([4, 4], [2, 6])
        area = pm.polygon_areas(sub2.points, sub2.triangles[sub2.tri_patch == p]).sum()
        assert area == pytest.approx(mesh.h_patch**2)


def test_uncut_statistics():
    mesh = pm.PatchMesh(1)
    st = pm.mesh_statistics(pm.extract_subcells(pm.build_geometry(mesh, CircleLevelSet(10.0))))
    assert st["max_aspect"] == pytest.approx(1.0)
    assert st["area_ratio"] == pytest.approx(1.0)


def test_reference_examples():
    assert ref_fem.shape_value(P0, STANDARD, 4, [0.25, 0.25]) == pytest.approx(0.25)
    for ft in (P0, P2):
        rule = ref_fem.compute_quadrature(ft)
        assert len(rule) == (16 if ft == P0 else 24)
        assert rule.weights.sum() == pytest.approx(1.0)
    rule = ref_fem.compute_quadrature(P0)
    assert rule.weights @ rule.points[:, 0] == pytest.approx(0.5, abs=1e-15)


def test_edge_trace_linearity():
    # P0 and P2 functions agree along a shared edge: piecewise linear with breaks at nodes
    u = np.random.default_rng(0).normal(size=9)
    for t in np.linspace(0, 1, 11):
        v0, _ = ref_fem.standard_local(P0, [1.0, t])
        v2, _ = ref_fem.standard_local(P2, [1.0, t])
        assert v0 @ u == pytest.approx(v2 @ u, abs=1e-14)


def test_fe_values_examples():
    fv = fe_values.reinit(NODES, P1)
    np.testing.assert_allclose(fv.det, 1.0)
    tabs = ref_fem.reference_tables(P1)
    np.testing.assert_allclose(fv.grads[0], tabs.grads, atol=1e-14)
    h = 0.125
    fv2 = fe_values.reinit(h * NODES + 3.0, P1)
    np.testing.assert_allclose(fv2.det, h * h)
    np.testing.assert_allclose(fv2.grads[0], tabs.grads / h, atol=1e-12)
    np.testing.assert_allclose(fe_values.compute_local_disc_chi(fv, np.full(9, 2.5)), 2.5)


def test_disc_chi_sign_per_subcell():
    mesh = pm.PatchMesh(2)
    geom = pm.build_geometry(mesh, CircleLevelSet(0.5, 0.023))
    for ft in (P0, P1, ref_fem.P2, ref_fem.P3):
        pids = np.flatnonzero(geom.femtype == ft)
        if not len(pids):
            continue
        fv = fe_values.reinit(geom.node_coords(pids), ft)
        chi = fe_values.compute_local_disc_chi(fv, geom.local_disc_chi[pids])
        owner = fv.rule.cell_of_point
        for c in np.unique(owner):
            s = np.sign(chi[:, owner == c])
            assert np.all((s == s[:, :1]) & (s != 0))
        inside = geom.classification.cell_colors[pids] < 0
        assert np.all(chi[inside] < 0)


def test_matrix_examples():
    mesh = pm.PatchMesh(0)
    prob = InterfaceProblem()
    geom = pm.build_geometry(mesh, prob.level_set)
    dofh = system.DofHandler(mesh, system.LEXICOGRAPHIC)
    A = system.assemble_matrix(dofh, geom, prob)
    interior = np.setdiff1d(np.arange(81), dofh.boundary_dofs)
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel()[interior], 0.0, atol=1e-13)
    S = system.build_system(geom, prob)
    assert S.A.shape == (81, 81)
    scipy.linalg.cholesky(S.A.toarray())  # SPD after constraints
    b0 = system.assemble_rhs(dofh, geom, ConstantProblem(f=0.0))
    assert not b0.any()
    b1 = system.assemble_rhs(dofh, geom, ConstantProblem(f=1.0, kappa1=7.0))
    assert b1.sum() == pytest.approx(4.0, abs=1e-10)


def test_manufactured_rhs_matches_oracle():
    mesh = pm.PatchMesh(2)
    prob = InterfaceProblem(y_offset=0.011)
    geom = pm.build_geometry(mesh, prob.level_set)
    dofh = system.DofHandler(mesh, system.LEXICOGRAPHIC)
    b = system.assemble_rhs(dofh, geom, prob)
    bo = np.zeros(mesh.n_nodes)
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    g = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
    for pid in range(mesh.n_patches):
        ft = int(geom.femtype[pid])
        dom = -1 if geom.local_disc_chi[pid].sum() < 0 else 1
        for cell in ref_fem.cells(ft):
            ids = geom.dofs[pid, cell]
            xy = geom.X[ids]
            chi = geom.local_disc_chi[pid, cell]
            d = -1 if chi.sum() < 0 else 1
            if len(cell) == 3:
                area = 0.5 * abs(np.linalg.det(np.array([xy[1] - xy[0], xy[2] - xy[0]])))
                for lam in bary:
                    bo[ids] += area / 3 * prob.source(lam @ xy, d) * lam
            else:
                for s in g:
                    for t in g:
                        N = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
                        dN = np.array([[-(1 - t), -(1 - s)], [1 - t, -s], [t, s], [-t, 1 - s]])
                        w = 0.25 * np.linalg.det(xy.T @ dN)
                        bo[ids] += w * prob.source(N @ xy, dom) * N
    np.testing.assert_allclose(b, bo, atol=1e-12)


def test_flux_rhs_examples():
    geom = pm.build_geometry(pm.PatchMesh(1), CircleLevelSet(0.5))
    sub = pm.extract_subcells(geom)
    assert not system.assemble_interface_flux_rhs(sub, 0.0).any()
    e = sub.interface_edges()
    length = np.linalg.norm(sub.points[e[:, 0]] - sub.points[e[:, 1]], axis=1).sum()
    assert np.ones(geom.mesh.n_nodes) @ system.assemble_interface_flux_rhs(sub, 1.0) == \
        pytest.approx(length)


def test_boundary_values():
    mesh = pm.PatchMesh(1)
    prob = InterfaceProblem()
    geom = pm.build_geometry(mesh, prob.level_set)
    dofh = system.DofHandler(mesh)
    ids, g = system.interpolate_boundary_values(dofh, geom, prob.dirichlet)
    corner = np.flatnonzero(np.all(geom.X[dofh.node_of_dof[ids]] == [1.0, 1.0], axis=1))
    assert g[corner] == pytest.approx(-8.0)
    _, g0 = system.interpolate_boundary_values(dofh, geom, ConstantProblem().dirichlet)
    assert not g0.any()
    # interface crossing the top boundary: constrained node sits on the cut
    big = InterfaceProblem(radius=0.9, y_offset=0.6)
    gb = pm.build_geometry(mesh, big.level_set)
    ids, gv = system.interpolate_boundary_values(dofh, gb, big.dirichlet)
    X = gb.X[dofh.node_of_dof[ids]]
    on = np.abs(big.level_set.value(X)) < 1e-12
    assert on.sum() >= 2
    np.testing.assert_allclose(np.abs(X[on, 0]), np.sqrt(0.81 - 0.16), atol=1e-12)
    np.testing.assert_allclose(gv[on], big.dirichlet(X[on]))


def test_constraint_examples():
    rng = np.random.default_rng(4)
    Q = rng.normal(size=(10, 10))
    A = Q @ Q.T + 10 * np.eye(10)
    b = rng.normal(size=10)
    A1, b1 = system.apply_constraints(sp.csr_matrix(A), b, [], [])
    np.testing.assert_array_equal(A1.toarray(), A)
    A2, b2 = system.apply_constraints(sp.csr_matrix(A), b, np.arange(10), np.arange(10.0))
    np.testing.assert_array_equal(A2.toarray(), np.eye(10))
    np.testing.assert_array_equal(b2, np.arange(10.0))
    ids, vals = np.array([1, 4, 7]), np.array([0.5, -1.0, 2.0])
    Ac, bc = system.apply_constraints(sp.csr_matrix(A), b, ids, vals)
    x = np.linalg.solve(Ac.toarray(), bc)
    free = np.setdiff1d(np.arange(10), ids)
    xf = np.linalg.solve(A[np.ix_(free, free)], b[free] - A[np.ix_(free, ids)] @ vals)
    np.testing.assert_allclose(x[free], xf, rtol=1e-12)
    np.testing.assert_allclose(x[ids], vals)


def test_solver_examples():
    b = np.arange(1.0, 6.0)
    x, rep = solvers.solve(sp.identity(5, format="csr"), b, solvers.SolverConfig("cg"))
    assert rep.iterations == 1
    np.testing.assert_allclose(x, b)
    np.testing.assert_allclose(solvers.diag_scaling(4 * sp.identity(3)), 0.5)
    geom = pm.build_geometry(pm.PatchMesh(1), CircleLevelSet(0.5, 0.01))
    S = system.build_system(geom, InterfaceProblem(y_offset=0.01))
    s = solvers.diag_scaling(S.A)
    As = sp.diags(s) @ S.A @ sp.diags(s)
    np.testing.assert_allclose(As.diagonal(), 1.0, rtol=1e-15)
    xs = np.linalg.solve(As.toarray(), s * S.b)
    np.testing.assert_allclose(s * xs, np.linalg.solve(S.A.toarray(), S.b), rtol=1e-10, atol=1e-12)


def test_error_examples():
    mesh = pm.PatchMesh(1)
    geom = pm.build_geometry(mesh, CircleLevelSet(0.5))

    class Linear(ConstantProblem):
        def exact(self, p, domain=None):
            return 2.0 + 3 * np.asarray(p)[..., 0]

        def exact_grad(self, p, domain=None):
            g = np.zeros(np.shape(p))
            g[..., 0] = 3.0
            return g

    prob = Linear()
    u = prob.exact(geom.X)
    assert postprocess.integrate_difference_norms(geom, u, prob) < 1e-13
    assert postprocess.integrate_difference_norms(geom, u, prob, "H1semi") < 1e-13
    one = ConstantProblem(g=1.0)
    assert postprocess.integrate_difference_norms(geom, np.zeros(mesh.n_nodes), one) == \
        pytest.approx(2.0)
    np.testing.assert_allclose(postprocess.convergence_rates([1, 0.25]), [2])
    np.testing.assert_allclose(postprocess.convergence_rates([1, 0.5, 0.25]), [1, 1])


def test_vtk_uncut_cell_count(tmp_path):
    geom = pm.build_geometry(pm.PatchMesh(0), CircleLevelSet(10.0))
    path = postprocess.plot_vtk(tmp_path / "u.vtk", geom)
    _, n_cells, _ = postprocess.read_vtk_counts(path)
    assert n_cells == 64
