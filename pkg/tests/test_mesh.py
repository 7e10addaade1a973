"""Structured mesh construction, topology extraction, perturbation, text IO."""

import numpy as np
import pytest

from migfem.mesh import (Mesh, build_structured_tri_mesh, compute_topology,
                         cross2, load_mesh_text, perturb_interior_nodes,
                         save_mesh_text)

BOX = (-1.0, 1.0, -1.0, 1.0)


def test_structured_counts():
    n = 7
    mesh = build_structured_tri_mesh(n, n, BOX)
    assert mesh.n_nodes == n * n
    assert mesh.n_triangles == 2 * (n - 1) ** 2


def test_all_triangles_ccw():
    mesh = build_structured_tri_mesh(9, 9, BOX)
    assert mesh.min_signed_area() > 0.0


def test_grid_spacing_is_min_edge():
    mesh = build_structured_tri_mesh(11, 11, (0.0, 5.0, 0.0, 5.0))
    assert mesh.min_edge_length() == pytest.approx(0.5)


def test_signed_areas_sum_to_domain_area():
    mesh = build_structured_tri_mesh(8, 8, BOX)
    assert mesh.signed_areas().sum() == pytest.approx(4.0)


def test_cross2_matches_determinant(rng):
    u = rng.normal(size=(30, 2))
    v = rng.normal(size=(30, 2))
    want = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    np.testing.assert_allclose(cross2(u, v), want, rtol=1e-15)


def test_boundary_node_count():
    n = 9
    mesh = build_structured_tri_mesh(n, n, BOX)
    topo = compute_topology(mesh)
    assert len(topo.boundary_nodes) == 4 * (n - 1)


def test_edge_counts_close_under_euler():
    # every triangle contributes 3 edge slots; interior edges use 2 each
    mesh = build_structured_tri_mesh(8, 8, BOX)
    topo = compute_topology(mesh)
    assert 2 * topo.n_internal_edges + topo.n_boundary_edges == 3 * mesh.n_triangles


def test_internal_edge_normals_point_left_to_right():
    mesh = build_structured_tri_mesh(6, 6, BOX)
    topo = compute_topology(mesh)
    cl = mesh.nodes[mesh.triangles[topo.edge_left]].mean(axis=1)
    cr = mesh.nodes[mesh.triangles[topo.edge_right]].mean(axis=1)
    d = cr - cl
    dots = np.einsum("ij,ij->i", d, topo.edge_normals)
    assert np.all(dots > 0.0)


def test_edge_normals_are_unit():
    mesh = build_structured_tri_mesh(6, 6, BOX)
    topo = compute_topology(mesh)
    np.testing.assert_allclose(np.hypot(*topo.edge_normals.T), 1.0, rtol=1e-14)
    np.testing.assert_allclose(np.hypot(*topo.bedge_normals.T), 1.0, rtol=1e-14)


def test_boundary_normals_point_outward():
    mesh = build_structured_tri_mesh(6, 6, BOX)
    topo = compute_topology(mesh)
    mids = mesh.nodes[topo.bedge_nodes].mean(axis=1)
    # the box is centered at the origin, so outward means away from it
    dots = np.einsum("ij,ij->i", mids, topo.bedge_normals)
    assert np.all(dots > 0.0)


def test_node_to_elements_is_an_incidence_inverse():
    mesh = build_structured_tri_mesh(7, 7, BOX)
    topo = compute_topology(mesh)
    for e, tri in enumerate(mesh.triangles):
        for v in tri:
            assert e in topo.node_to_elements[int(v)]
    for k, els in enumerate(topo.node_to_elements):
        assert np.all(np.diff(els) > 0)
        for e in els:
            assert k in mesh.triangles[e]


def test_perturbation_fixes_boundary_and_is_deterministic():
    mesh = build_structured_tri_mesh(9, 9, BOX)
    topo = compute_topology(mesh)
    a = perturb_interior_nodes(mesh, 0.3, seed=5)
    b = perturb_interior_nodes(mesh, 0.3, seed=5)
    c = perturb_interior_nodes(mesh, 0.3, seed=6)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    assert not np.array_equal(a.nodes, c.nodes)
    bd = sorted(topo.boundary_nodes)
    np.testing.assert_array_equal(a.nodes[bd], mesh.nodes[bd])
    moved = np.hypot(*(a.nodes - mesh.nodes).T)
    assert moved.max() <= 0.3 * mesh.min_edge_length() + 1e-15


def test_moderate_perturbation_keeps_orientation():
    mesh = perturb_interior_nodes(build_structured_tri_mesh(11, 11, BOX), 0.3, seed=1)
    assert mesh.min_signed_area() > 0.0


def test_text_round_trip(tmp_path):
    mesh = perturb_interior_nodes(build_structured_tri_mesh(6, 6, BOX), 0.4, seed=2)
    path = str(tmp_path / "mesh.txt")
    save_mesh_text(mesh, path)
    back = load_mesh_text(path)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    assert back.domain_box == mesh.domain_box


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a mesh\n1 2 3\n")
    with pytest.raises(Exception):
        load_mesh_text(str(path))
