import math
from collections import defaultdict
from itertools import product

import numpy as np
import pytest

from cavity_scatter import assembly
from cavity_scatter.assembly import (
    DtnCoupling,
    assemble_pml,
    assemble_pml_full,
    assemble_tbc,
    build_dofmap,
    expand,
    make_field,
    strong_rhs_pml,
    weak_rhs_pml,
)
from cavity_scatter.fem import DIRICHLET_UREF, DIRICHLET_ZERO, FREE, error_norms
from cavity_scatter.mesh import GAMMA_RHO, GROUND, PML, WALL, initial_mesh, refine_uniform
from cavity_scatter.scenario import flat_ground, preset, reference_field
from cavity_scatter.solver import solve

from conftest import single_triangle, square_mesh


# Lagrange bases as polynomials in barycentric coordinates: {exponent triple: coefficient}
def _basis(degree):
    e = np.eye(3, dtype=int)
    if degree == 1:
        return [{tuple(e[i]): 1.0} for i in range(3)]
    out = [{tuple(2 * e[i]): 2.0, tuple(e[i]): -1.0} for i in range(3)]
    out += [{tuple(e[j] + e[k]): 4.0} for j, k in ((1, 2), (2, 0), (0, 1))]
    return out


def _mul(p, q):
    out = defaultdict(float)
    for (a, ca), (b, cb) in product(p.items(), q.items()):
        out[tuple(np.add(a, b))] += ca * cb
    return out


def _diff(p, k):
    out = defaultdict(float)
    for a, c in p.items():
        if a[k]:
            b = list(a)
            b[k] -= 1
            out[tuple(b)] += c * a[k]
    return out


def _integrate(p, area):
    f = math.factorial
    return sum(c * 2 * area * f(a[0]) * f(a[1]) * f(a[2]) / f(sum(a) + 2) for a, c in p.items())


def exact_element_matrices(degree, verts):
    verts = np.asarray(verts, float)
    d1, d2 = verts[1] - verts[0], verts[2] - verts[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    g = np.empty((3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[i] = [verts[j, 1] - verts[k, 1], verts[k, 0] - verts[j, 0]]
    g /= 2 * area
    B = _basis(degree)
    nb = len(B)
    S = np.zeros((nb, nb))
    M = np.zeros((nb, nb))
    for a, b in product(range(nb), repeat=2):
        M[a, b] = _integrate(_mul(B[a], B[b]), area)
        S[a, b] = sum(
            (g[k] @ g[l]) * _integrate(_mul(_diff(B[a], k), _diff(B[b], l)), area) for k in range(3) for l in range(3)
        )
    return S, M


def _local(mesh, scenario, degree, k2):
    dm = build_dofmap(mesh, scenario, degree)
    tri = np.arange(mesh.n_triangles)
    local, _ = assembly._volume(mesh, scenario, dm, tri, False, None, np.full(mesh.n_triangles, k2, complex), False)
    return local[0]


def test_p1_local_stiffness(flat_tm):
    K = _local(single_triangle(), flat_tm, 1, 0.0)
    expected = [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]]
    assert np.allclose(K, expected, atol=1e-14)


def test_p1_local_mass(flat_tm):
    M = _local(single_triangle(), flat_tm, 1, 0.0) - _local(single_triangle(), flat_tm, 1, 1.0)
    assert np.allclose(M, 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]), atol=1e-15)


@pytest.mark.parametrize("degree", [1, 2])
def test_local_matrices_exact_on_skew_triangle(flat_tm, degree):
    from cavity_scatter.mesh import Mesh

    V = np.array([[0.1, 0.2], [1.3, 0.05], [0.4, 0.9]])
    m = Mesh(V, np.array([[0, 1, 2]]), np.zeros(1, np.int64), np.array([[0, 1], [1, 2], [2, 0]]),
             np.array([WALL] * 3), 10.0, 30.0, "tbc_domain")
    S, M = exact_element_matrices(degree, V)
    k2 = 3.7
    assert np.allclose(_local(m, flat_tm, degree, 0.0), S, rtol=0, atol=1e-12 * np.abs(S).max())
    assert np.allclose(_local(m, flat_tm, degree, k2), S - k2 * M, rtol=0, atol=1e-12 * np.abs(S).max())


def test_p2_dof_count(flat_tm):
    dm = build_dofmap(square_mesh(), flat_tm, 2)
    assert dm.n_dofs == 9
    assert dm.cell_dofs.shape == (2, 6)


def test_tm_ground_and_wall_dofs_are_zero(ex1, ex1_mesh):
    dm = build_dofmap(ex1_mesh, ex1, 1)
    e = ex1_mesh.edges[np.isin(ex1_mesh.edge_tags, (GROUND, WALL))]
    v = np.unique(e)
    rho = np.unique(ex1_mesh.edges[ex1_mesh.edge_tags == GAMMA_RHO])
    assert np.all(dm.kind[np.setdiff1d(v, rho)] == DIRICHLET_ZERO)
    # the two ends of Gamma_rho lie on the ground, where the zero condition wins
    assert np.all(dm.kind[np.setdiff1d(rho, v)] == DIRICHLET_UREF)


def test_te_ground_and_wall_dofs_are_free(ex1, ex1_mesh):
    te = ex1.replace(polarization="TE")
    dm = build_dofmap(ex1_mesh, te, 1)
    v = np.unique(ex1_mesh.edges[np.isin(ex1_mesh.edge_tags, (GROUND, WALL))])
    rho = np.unique(ex1_mesh.edges[ex1_mesh.edge_tags == GAMMA_RHO])
    assert np.all(dm.kind[np.setdiff1d(v, rho)] == FREE)
    assert not np.any(dm.kind == DIRICHLET_ZERO)


def test_invalid_degree(flat_tm):
    with pytest.raises(ValueError):
        build_dofmap(square_mesh(), flat_tm, 3)


@pytest.mark.parametrize("pol", ["TM", "TE"])
@pytest.mark.parametrize("degree", [1, 2])
def test_pml_matrix_complex_symmetric(ex1, ex1_mesh, pol, degree):
    s = ex1.replace(polarization=pol)
    K, _ = assemble_pml(ex1_mesh, s, build_dofmap(ex1_mesh, s, degree))
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    assert np.all(np.isfinite(K.data))


@pytest.mark.parametrize("pol", ["TM", "TE"])
def test_weak_and_strong_rhs_agree(pol):
    s = preset("example1_empty", theta=0.5).replace(polarization=pol)
    mesh = refine_uniform(initial_mesh(s), 2)
    dm = build_dofmap(mesh, s, 2)
    weak = weak_rhs_pml(mesh, s, dm)
    strong = strong_rhs_pml(mesh, s, dm)
    # test functions on the constrained boundaries carry boundary terms
    f = dm.free
    assert np.linalg.norm(weak[f] - strong[f]) <= 1e-4 * np.linalg.norm(weak[f])


@pytest.mark.parametrize("degree", [1, 2])
def test_galerkin_residual(ex1, ex1_mesh, degree):
    dm = build_dofmap(ex1_mesh, ex1, degree)
    K, b = assemble_pml(ex1_mesh, ex1, dm)
    x = solve(K, b)
    u = expand(dm, ex1, x)
    Kfull, weak = assemble_pml_full(ex1_mesh, ex1, dm)
    r = (Kfull @ u - weak)[dm.free]
    assert np.abs(r).max() <= 1e-9 * np.abs(b).max()


@pytest.mark.parametrize("pol", ["TM", "TE"])
def test_flat_ground_reproduces_reference(pol):
    s = flat_ground(pol, 8 * math.pi, math.pi / 5, fem_degree=2)
    mesh = initial_mesh(s, target_h=s.wavelength / 20)
    dm = build_dofmap(mesh, s)
    assert 3000 <= dm.n_free <= 30000
    K, b = assemble_pml(mesh, s, dm)
    field = make_field(dm, s, solve(K, b))
    err = error_norms(field, lambda p: reference_field(s, p), mask=mesh.regions != PML)
    assert err["h1"] <= 1e-2 * err["h1_ref"]


def _boundary_interpolant(coupling, dm, func):
    u = np.zeros(dm.n_dofs, complex)
    xy = dm.coords[coupling.dofs]
    u[coupling.dofs] = func(np.arctan2(xy[:, 1], xy[:, 0]))
    return u


def test_dtn_sine_mode(ex1):
    mesh = initial_mesh(ex1, domain="tbc_domain")
    dm = build_dofmap(mesh, ex1, 2)
    dc = DtnCoupling(mesh, ex1, dm, n_modes=20)
    u = _boundary_interpolant(dc, dm, np.sin)
    val = u[dc.dofs] @ dc.block() @ u[dc.dofs]
    assert val == pytest.approx(dc.z[0] * ex1.R * math.pi / 2, rel=1e-3)


def test_dtn_constant_mode_te(ex1):
    te = ex1.replace(polarization="TE")
    mesh = initial_mesh(te, domain="tbc_domain")
    dm = build_dofmap(mesh, te, 2)
    dc = DtnCoupling(mesh, te, dm, n_modes=20)
    u = _boundary_interpolant(dc, dm, np.ones_like)
    val = u[dc.dofs] @ dc.block() @ u[dc.dofs]
    assert val == pytest.approx(dc.z[0] * te.R * math.pi, rel=1e-12)


def test_dtn_linearity(ex1):
    mesh = initial_mesh(ex1, domain="tbc_domain")
    dm = build_dofmap(mesh, ex1, 1)
    dc = DtnCoupling(mesh, ex1, dm)
    B = dc.block()
    rng = np.random.default_rng(5)
    u = rng.normal(size=len(dc.dofs)) + 1j * rng.normal(size=len(dc.dofs))
    v = rng.normal(size=len(dc.dofs))
    assert v @ B @ (2 * u) == pytest.approx(2 * (v @ B @ u), rel=1e-13)
    assert np.allclose(B, B.T, rtol=0, atol=1e-13 * np.abs(B).max())


def test_tbc_rejects_pml_mesh(ex1, ex1_mesh):
    with pytest.raises(ValueError, match="tbc_domain"):
        assemble_tbc(ex1_mesh, ex1, build_dofmap(ex1_mesh, ex1))


def test_tbc_flat_ground_reproduces_reference():
    s = flat_ground("TM", 8 * math.pi, math.pi / 5, fem_degree=2)
    mesh = initial_mesh(s, target_h=s.wavelength / 10, domain="tbc_domain")
    dm = build_dofmap(mesh, s)
    K, b = assemble_tbc(mesh, s, dm)
    field = make_field(dm, s, solve(K, b), "tbc")
    err = error_norms(field, lambda p: reference_field(s, p))
    assert err["h1"] <= 1e-2 * err["h1_ref"]
