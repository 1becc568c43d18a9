import numpy as np
import pytest

from cavity_scatter.mesh import (
    GAMMA_R,
    GAMMA_RHO,
    GROUND,
    INTERIOR,
    PML,
    WALL,
    PointNotFound,
    audit,
    bisect,
    initial_mesh,
    locate,
    omega_submesh,
    read_vtk_point_count,
    refine_uniform,
    triangle_angles,
    write_vtk,
)
from cavity_scatter.scenario import PRESETS, arc_points, preset

from conftest import square_mesh


def test_ground_edges_lie_on_ground(ex1_mesh):
    e = ex1_mesh.edges[ex1_mesh.edge_tags == GROUND]
    assert len(e) > 0
    assert np.all(ex1_mesh.vertices[e][..., 1] == 0.0)


def test_tbc_domain_stays_inside_r(ex1):
    m = initial_mesh(ex1, domain="tbc_domain")
    c = m.centroids
    # the cavity below ground may reach beyond R; the upper part may not
    assert np.hypot(*c[c[:, 1] > 0].T).max() <= ex1.R
    assert audit(m) == []


@pytest.mark.parametrize("name", PRESETS)
@pytest.mark.parametrize("domain", ["pml_domain", "tbc_domain"])
def test_boundary_edges_are_tagged(name, domain):
    m = initial_mesh(preset(name), domain=domain)
    assert np.all(m.edge_tags[m.edge_counts == 1] != INTERIOR)
    assert audit(m) == []


def test_arcs_vertices_on_circles(ex1, ex1_mesh):
    V = ex1_mesh.vertices
    for tag, rad in ((GAMMA_R, ex1.R), (GAMMA_RHO, ex1.rho)):
        e = ex1_mesh.edges[ex1_mesh.edge_tags == tag]
        ends = np.unique(e)
        r = np.hypot(*V[ends].T)
        polyline = arc_points(rad, ex1.n_arc)
        # initial arc vertices are exactly the polyline vertices
        assert np.all(r <= rad * (1 + 1e-14))
        for p in polyline:
            assert np.min(np.hypot(*(V[ends] - p).T)) <= 1e-14 * rad


def test_cavity_corners_are_vertices(ex1, ex1_mesh):
    for p in ex1.cavity:
        assert np.min(np.hypot(*(ex1_mesh.vertices - p).T)) == 0.0


def test_regions_split_at_gamma_r(ex1, ex1_mesh):
    c = ex1_mesh.centroids
    r = np.hypot(*c.T)
    pml = ex1_mesh.regions == PML
    assert np.all(r[pml] > ex1.R * np.cos(np.pi / ex1.n_arc))
    assert np.all(r[~pml & (c[:, 1] > 0)] < ex1.R)
    assert np.all(c[pml, 1] > 0)


def test_target_h_controls_size(ex1):
    lam = ex1.wavelength
    coarse = initial_mesh(ex1, lam / 8)
    fine = initial_mesh(ex1, lam / 16)
    n_coarse = np.sum(coarse.regions != PML)
    om = fine.regions != PML
    assert om.sum() > 2 * n_coarse
    assert fine.h_K[om].max() <= 1.5 * lam / 16
    # the PML layer starts at twice the physical size
    assert np.median(coarse.h_K[coarse.regions == PML]) > np.median(coarse.h_K[coarse.regions != PML])


def test_material_regions_are_finer():
    s = preset("example2_coated")
    m = initial_mesh(s)
    mat = m.regions >= 2
    assert mat.any()
    assert m.h_K[mat].max() < 0.5 * m.h_K[m.regions == 0].max()


def test_empty_marks_no_op(ex1_mesh):
    m = bisect(ex1_mesh, [])
    assert m.n_triangles == ex1_mesh.n_triangles


def test_single_mark_on_square_closes_neighbor():
    m = square_mesh()
    # the refinement edge of triangle 0 is its local edge 0 = (1, 3), the shared diagonal
    out = bisect(m, [0])
    assert out.n_triangles == 4
    assert audit(out) == []
    assert out.total_area() == pytest.approx(1.0, abs=1e-15)


def test_single_mark_on_boundary_edge():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    T = np.array([[3, 0, 1], [2, 3, 1]])  # triangle 0 refines the bottom edge (0, 1)
    from cavity_scatter.mesh import Mesh

    E = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    m = Mesh(V, T, np.zeros(2, np.int64), E, np.full(4, WALL), 10.0, 30.0, "tbc_domain")
    out = bisect(m, [0])
    assert out.n_triangles == 3
    assert audit(out) == []
    # the split boundary edge keeps its tag on both halves
    assert np.sum(out.edge_tags == WALL) == 5


def test_uniform_double_bisection_halves_edges(ex1_mesh):
    m2 = refine_uniform(ex1_mesh, 2)
    # closure adds bisections where refinement edges of neighbours differ
    assert m2.n_triangles >= 4 * ex1_mesh.n_triangles
    assert audit(m2) == []
    # every original edge is split into two halves
    V = m2.vertices
    for a, b in ex1_mesh.edges[:200]:
        mid = 0.5 * (ex1_mesh.vertices[a] + ex1_mesh.vertices[b])
        assert np.min(np.hypot(*(V - mid).T)) <= 1e-15
    assert m2.min_angle() >= 0.5 * ex1_mesh.min_angle()
    # vertices of the coarse mesh are kept in place
    assert np.array_equal(m2.vertices[: ex1_mesh.n_vertices], ex1_mesh.vertices)


def test_angles_sum_to_pi(ex1_mesh):
    assert np.allclose(triangle_angles(ex1_mesh).sum(axis=1), np.pi)


def test_locate_centroid(ex1_mesh):
    k = 17
    idx, lam = locate(ex1_mesh, ex1_mesh.centroids[k])
    assert idx == k
    assert np.allclose(lam, 1 / 3)


def test_locate_shared_vertex(ex1_mesh):
    v = ex1_mesh.triangles[5, 1]
    idx, lam = locate(ex1_mesh, ex1_mesh.vertices[v])
    assert v in ex1_mesh.triangles[idx]
    assert np.isclose(lam.max(), 1.0)


def test_locate_outside(ex1_mesh, ex1):
    with pytest.raises(PointNotFound):
        locate(ex1_mesh, [0.0, 2 * ex1.rho])


def test_omega_submesh(ex1_mesh):
    sub = omega_submesh(ex1_mesh)
    assert not np.any(sub.regions == PML)
    assert audit(sub) == []
    assert sub.n_triangles == np.sum(ex1_mesh.regions != PML)


def test_vtk_round_trip(tmp_path, ex1_mesh):
    p = tmp_path / "m.vtk"
    write_vtk(ex1_mesh, p)
    assert read_vtk_point_count(p) == ex1_mesh.n_vertices
    text = p.read_text()
    assert "CELL_DATA" in text and "SCALARS region int 1" in text
