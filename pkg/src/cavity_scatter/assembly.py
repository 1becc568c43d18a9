"""Sparse complex assembly of the PML and TBC (DtN) systems.

Test functions are real Lagrange basis functions, so the sesquilinear forms
become complex-symmetric bilinear forms.  Constrained DoFs are eliminated:
the returned matrix and right-hand side act on free DoFs only.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import dtn
from .fem import (
    DofMap,
    SolutionField,
    build_dofmap,
    dirichlet_values,
    element_geometry,
    shape_gradients,
    shape_values,
)
from .mesh import MATERIAL0, PML, Mesh
from .pml import PmlMap, alpha_beta, stretch_matrix
from .quadrature import edge_rule, triangle_rule
from .scenario import Scenario, reference_derivatives

__all__ = [
    "DofMap",
    "build_dofmap",
    "assemble_pml",
    "assemble_tbc",
    "assemble_pml_full",
    "assemble_tbc_full",
    "element_kappa2",
    "expand",
    "weak_rhs_pml",
    "strong_rhs_pml",
]


def element_kappa2(mesh: Mesh, scenario: Scenario) -> np.ndarray:
    """kappa^2 per triangle (constant on each element)."""
    k2 = np.full(mesh.n_triangles, scenario.kappa0**2, dtype=complex)
    for k, mat in enumerate(scenario.materials):
        k2[mesh.regions == MATERIAL0 + k] = scenario.kappa0**2 * mat.index_squared
    return k2


def quadrature_degrees(degree: int) -> tuple[int, int]:
    """(Omega, PML) triangle rule degrees."""
    return 2 * degree, 2 * degree + 2


def _scatter(dofmap: DofMap, tri, local):
    cd = dofmap.cell_dofs[tri]
    nb = cd.shape[1]
    rows = np.repeat(cd, nb, axis=1).ravel()
    cols = np.tile(cd, (1, nb)).ravel()
    return rows, cols, local.ravel()


def _element_points(mesh: Mesh, tri, lam):
    return np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles[tri]])


def _coefficients(scenario: Scenario, pts, k2_elem, in_pml, pml: PmlMap | None):
    """Gradient tensor (t,q,2,2) and mass coefficient (t,q) for the polarization."""
    t, q = pts.shape[:2]
    if in_pml:
        A = stretch_matrix(pml, pts)
        ab = alpha_beta(pml, pts)
        if scenario.polarization == "TM":
            return A, scenario.kappa0**2 * ab
        return A / scenario.kappa0**2, ab
    A = np.broadcast_to(np.eye(2), (t, q, 2, 2))
    k2 = np.broadcast_to(k2_elem[:, None], (t, q))
    if scenario.polarization == "TM":
        return A, k2
    return A / k2[..., None, None], np.ones((t, q), dtype=complex)


def _volume(mesh, scenario, dofmap, tri, in_pml, pml, k2, with_rhs):
    deg = dofmap.degree
    qd = quadrature_degrees(deg)[1 if in_pml else 0]
    lam, w = triangle_rule(qd)
    glam, area = element_geometry(mesh)
    pts = _element_points(mesh, tri, lam)
    phi = shape_values(deg, lam)  # (q, b)
    grad = shape_gradients(deg, lam, glam[tri])  # (t, q, b, 2)
    G, m = _coefficients(scenario, pts, k2[tri], in_pml, pml)
    wa = w[None, :] * area[tri, None]  # (t, q)
    t, q, nb = grad.shape[:3]
    AG = grad @ np.swapaxes(G, -1, -2)  # (t, q, b, i) = sum_j G_ij grad_bj
    left = (grad * wa[:, :, None, None]).transpose(0, 2, 1, 3).reshape(t, nb, 2 * q)
    local = left @ AG.transpose(0, 1, 3, 2).reshape(t, 2 * q, nb)
    local = local - (phi.T[None] * (wa * m)[:, None, :]) @ phi
    rhs = None
    if with_rhs:
        u, gu, _ = reference_derivatives(scenario, pts)
        Agu = (G @ gu[..., None])[..., 0]
        rhs = np.einsum("tqai,tqi->ta", grad, wa[..., None] * Agu) - (wa * m * u) @ phi
    return local, rhs


def _gamma_flux(mesh: Mesh, scenario: Scenario, dofmap: DofMap, gamma: dtn.GammaR):
    """int_{Gamma_R} (grad u_ref . nu) phi_i ds with nu pointing out of Omega."""
    deg = dofmap.degree
    t, w = edge_rule(2 * deg + 4)
    V = mesh.vertices
    P, Q = V[gamma.ends[:, 0]], V[gamma.ends[:, 1]]
    h = np.hypot(*(Q - P).T)
    pts = P[:, None, :] + t[None, :, None] * (Q - P)[:, None, :]
    k = np.broadcast_to(np.arange(len(h))[:, None], pts.shape[:2])
    lam = gamma.barycentric(k, np.broadcast_to(t, pts.shape[:2]))
    phi = shape_values(deg, lam)  # (e, g, b)
    _, gu, _ = reference_derivatives(scenario, pts)
    flux = np.einsum("egd,ed->eg", gu, gamma.outward_normals)
    if scenario.polarization == "TE":
        flux = flux / scenario.kappa0**2
    local = np.einsum("g,e,eg,egb->eb", w, h, flux, phi)
    out = np.zeros(dofmap.n_dofs, dtype=complex)
    np.add.at(out, dofmap.cell_dofs[gamma.tris].ravel(), local.ravel())
    return out


def assemble_pml_full(mesh: Mesh, scenario: Scenario, dofmap: DofMap):
    """Matrix on all DoFs and the weak source vector, before any elimination."""
    pml = PmlMap.from_scenario(scenario)
    k2 = element_kappa2(mesh, scenario)
    rows, cols, vals = [], [], []
    b = np.zeros(dofmap.n_dofs, dtype=complex)
    in_pml_mask = mesh.regions == PML
    for in_pml in (False, True):
        tri = np.flatnonzero(in_pml_mask == in_pml)
        if len(tri) == 0:
            continue
        local, rhs = _volume(mesh, scenario, dofmap, tri, in_pml, pml, k2, with_rhs=in_pml)
        r, c, v = _scatter(dofmap, tri, local)
        rows.append(r)
        cols.append(c)
        vals.append(v)
        if rhs is not None:
            np.add.at(b, dofmap.cell_dofs[tri].ravel(), rhs.ravel())
    if in_pml_mask.any():
        b += _gamma_flux(mesh, scenario, dofmap, dtn.GammaR(mesh))
    n = dofmap.n_dofs
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K, b


def _eliminate(K, b, dofmap: DofMap, g):
    free = dofmap.free
    rhs = (b - K @ g)[free]
    Kf = K[free][:, free].tocsr()
    Kf.eliminate_zeros()
    return Kf, rhs


def assemble_pml(mesh: Mesh, scenario: Scenario, dofmap: DofMap):
    """Free-DoF system of the PML problem: (matrix, rhs)."""
    K, b = assemble_pml_full(mesh, scenario, dofmap)
    return _eliminate(K, b, dofmap, dirichlet_values(dofmap, scenario))


def weak_rhs_pml(mesh: Mesh, scenario: Scenario, dofmap: DofMap) -> np.ndarray:
    return assemble_pml_full(mesh, scenario, dofmap)[1]


def strong_rhs_pml(mesh: Mesh, scenario: Scenario, dofmap: DofMap, degree: int = 6) -> np.ndarray:
    """-int F phi_i over PML elements from the pointwise strong source."""
    from .pml import pml_source_strong

    tri = np.flatnonzero(mesh.regions == PML)
    lam, w = triangle_rule(degree)
    _, area = element_geometry(mesh)
    pts = _element_points(mesh, tri, lam)
    F = pml_source_strong(scenario, pts)
    phi = shape_values(dofmap.degree, lam)
    local = -np.einsum("tq,tq,qa->ta", w[None, :] * area[tri, None], F, phi)
    out = np.zeros(dofmap.n_dofs, dtype=complex)
    np.add.at(out, dofmap.cell_dofs[tri].ravel(), local.ravel())
    return out


class DtnCoupling:
    """Dense DtN block on the Gamma_R DoFs of a TBC mesh."""

    def __init__(self, mesh: Mesh, scenario: Scenario, dofmap: DofMap, n_modes: int | None = None):
        if n_modes is None:
            n_modes = dtn.default_modes(scenario.kappa0, scenario.R, scenario.n_arc)
        if n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        self.n_modes = n_modes
        self.gamma = dtn.GammaR(mesh)
        pol = scenario.polarization
        self.dofs, self.C, quad = dtn.boundary_modal_matrix(
            self.gamma, dofmap.cell_dofs, dofmap.degree, pol, n_modes
        )
        self.z = dtn.dtn_multipliers(scenario.kappa0, scenario.R, n_modes, pol)
        self.w = dtn.mode_weights(pol, n_modes, scenario.R)
        self.ref = dtn.reference_modal_coeffs(self.gamma, scenario, n_modes, quad)
        self.scale = 1.0 if pol == "TM" else 1.0 / scenario.kappa0**2

    def block(self) -> np.ndarray:
        """<B phi_j, phi_i> on the boundary DoFs."""
        return (self.C.T * (self.z * self.w)) @ self.C

    def coefficients(self, coeffs) -> np.ndarray:
        """Modal coefficients of a discrete field's trace."""
        return self.C @ coeffs[self.dofs]


def assemble_tbc_full(mesh: Mesh, scenario: Scenario, dofmap: DofMap, n_modes: int | None = None):
    if np.any(mesh.regions == PML):
        raise ValueError("TBC assembly needs a mesh of Omega only (tbc_domain)")
    k2 = element_kappa2(mesh, scenario)
    tri = np.arange(mesh.n_triangles)
    local, _ = _volume(mesh, scenario, dofmap, tri, False, None, k2, with_rhs=False)
    r, c, v = _scatter(dofmap, tri, local)
    n = dofmap.n_dofs
    K = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    dc = DtnCoupling(mesh, scenario, dofmap, n_modes)
    D = dc.block() * dc.scale
    ii, jj = np.meshgrid(dc.dofs, dc.dofs, indexing="ij")
    K = (K - sp.coo_matrix((D.ravel(), (ii.ravel(), jj.ravel())), shape=(n, n))).tocsr()
    K.sum_duplicates()
    b = _gamma_flux(mesh, scenario, dofmap, dc.gamma)
    b[dc.dofs] -= dc.scale * (dc.C.T @ (dc.z * dc.w * dc.ref))
    return K, b, dc


def assemble_tbc(mesh: Mesh, scenario: Scenario, dofmap: DofMap, n_modes: int | None = None):
    """Free-DoF system of the transparent-boundary problem: (matrix, rhs)."""
    K, b, _ = assemble_tbc_full(mesh, scenario, dofmap, n_modes)
    return _eliminate(K, b, dofmap, dirichlet_values(dofmap, scenario))


def expand(dofmap: DofMap, scenario: Scenario, x_free) -> np.ndarray:
    """Full coefficient vector from free values plus essential data."""
    u = dirichlet_values(dofmap, scenario)
    u[dofmap.free] = x_free
    return u


def make_field(dofmap: DofMap, scenario: Scenario, x_free, method: str = "pml", coupling=None) -> SolutionField:
    return SolutionField(dofmap, scenario, expand(dofmap, scenario, x_free), method, coupling)
