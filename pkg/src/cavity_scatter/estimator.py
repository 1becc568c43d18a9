"""Residual a posteriori error indicators.

eta_K = max_K w * (h_K^2 ||R_K||^2 + 1/2 sum_e h_e ||J_e||^2)^(1/2)

R_K is the strong element residual (of u_h in Omega, of u_h - u_ref in the
PML) and J_e the conormal flux jump.  Flux coefficients are A (TM) and
kappa^-2 A (TE).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import dtn
from .assembly import DtnCoupling, element_kappa2
from .fem import SolutionField, element_geometry, shape_dlam, shape_hessians, shape_values
from .mesh import GAMMA_R, GROUND, PML, WALL
from .pml import PmlMap, alpha_beta, divergence_term, layer_weight, propagation_factor, stretch_matrix
from .quadrature import edge_rule, triangle_rule
from .scenario import reference_derivatives
from .pml import pml_source_strong


class EdgeSetError(ValueError):
    """Jump requested on an edge outside the polarization's edge set."""


@dataclass
class EstimatorReport:
    eta: np.ndarray
    eps_h: float
    eps_pml: float
    dof_count: int
    dof_physical: int
    residual_part: np.ndarray = dc_field(repr=False, default=None)
    jump_part: np.ndarray = dc_field(repr=False, default=None)
    weights: np.ndarray = dc_field(repr=False, default=None)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "eta"])
            for k, v in enumerate(self.eta):
                w.writerow([k, f"{v:.12e}"])


def _is_pml_field(f: SolutionField) -> bool:
    return f.method == "pml"


def _pml_mask(f: SolutionField) -> np.ndarray:
    if not _is_pml_field(f):
        return np.zeros(f.mesh.n_triangles, dtype=bool)
    return f.mesh.regions == PML


def _coeff_scale(f: SolutionField) -> np.ndarray:
    """Per-element flux coefficient factor: 1 (TM) or kappa^-2 (TE)."""
    s = f.scenario
    if s.polarization == "TM":
        return np.ones(f.mesh.n_triangles, dtype=complex)
    k2 = element_kappa2(f.mesh, s)
    k2[_pml_mask(f)] = s.kappa0**2
    return 1.0 / k2


def _local_grad(f: SolutionField, tri, lam):
    """Gradient of u_h at per-element barycentric points lam (t, q, 3) -> (t, q, 2)."""
    glam, _ = element_geometry(f.mesh)
    d = shape_dlam(f.degree, lam)
    c = f.coeffs[f.dofmap.cell_dofs[tri]]
    ck = np.einsum("tb,tqbk->tqk", c, d)
    return ck @ glam[tri]


def element_residual(f: SolutionField, tri=None, degree: int | None = None):
    """Residual at quadrature points of the selected triangles.

    Returns ``(values (t, q), lam, weights)``.
    """
    mesh, s = f.mesh, f.scenario
    tri = np.arange(mesh.n_triangles) if tri is None else np.atleast_1d(np.asarray(tri))
    qdeg = min(6, 2 * f.degree + 2 if degree is None else degree)
    lam, w = triangle_rule(qdeg)
    glam, _ = element_geometry(mesh)
    c = f.coeffs[f.dofmap.cell_dofs[tri]]
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles[tri]])
    nq = len(w)
    u = c @ shape_values(f.degree, lam).T
    D = shape_dlam(f.degree, lam)  # (q, b, k)
    ck = (c @ D.transpose(1, 0, 2).reshape(D.shape[1], -1)).reshape(len(tri), nq, 3)
    g = ck @ glam[tri]
    if f.degree == 1:
        H = np.zeros((len(tri), 2, 2), dtype=complex)
    else:
        H = np.einsum("tb,tbde->tde", c, shape_hessians(f.degree, glam[tri]))
    lap = H[:, 0, 0] + H[:, 1, 1]
    out = np.empty(u.shape, dtype=complex)
    k2 = element_kappa2(mesh, s)[tri]
    inpml = _pml_mask(f)[tri]
    om = ~inpml
    if s.polarization == "TM":
        out[om] = lap[om, None] + k2[om, None] * u[om]
    else:
        out[om] = lap[om, None] / k2[om, None] + u[om]
    if inpml.any():
        pml = PmlMap.from_scenario(s)
        p = pts[inpml]
        Hq = np.broadcast_to(H[inpml][:, None], p.shape[:2] + (2, 2))
        div = divergence_term(pml, p, g[inpml], Hq)
        ab = alpha_beta(pml, p)
        src = pml_source_strong(s, p)
        if s.polarization == "TM":
            out[inpml] = div + s.kappa0**2 * ab * u[inpml] - src
        else:
            out[inpml] = div / s.kappa0**2 + ab * u[inpml] - src
    return out, lam, w


def _edge_side(f: SolutionField, eids, side):
    """Conormal flux c A grad u_h . nu of the triangle on ``side`` of each edge at Gauss points."""
    mesh = f.mesh
    tpts, _ = edge_rule(2 * f.degree)
    tri = mesh.edge_tris[eids, side]
    ends = mesh.edges[eids]
    T = mesh.triangles[tri]
    la = np.argmax(T == ends[:, [0]], axis=1)
    lb = np.argmax(T == ends[:, [1]], axis=1)
    lam = np.zeros((len(eids), len(tpts), 3))
    r = np.arange(len(eids))
    lam[r, :, la] = 1 - tpts[None, :]
    lam[r, :, lb] = tpts[None, :]
    V = mesh.vertices
    a, b = V[ends[:, 0]], V[ends[:, 1]]
    d = b - a
    nu = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.hypot(*d.T)[:, None]
    third = V[T].sum(axis=1) - a - b
    flip = np.einsum("ed,ed->e", nu, third - a) > 0
    nu[flip] *= -1
    grad = _local_grad(f, tri, lam)
    pts = a[:, None, :] + tpts[None, :, None] * d[:, None, :]
    flux = np.einsum("eqd,ed->eq", grad, nu)
    inpml = _pml_mask(f)[tri]
    if inpml.any():
        A = stretch_matrix(PmlMap.from_scenario(f.scenario), pts[inpml])
        Ag = (A @ grad[inpml][..., None])[..., 0]
        flux[inpml] = np.sum(Ag * nu[inpml][:, None, :], axis=-1)
    flux *= _coeff_scale(f)[tri][:, None]
    return flux, pts, nu


def edge_set(f: SolutionField) -> np.ndarray:
    """Edges carrying a jump term for this field's polarization and method."""
    mesh = f.mesh
    interior = mesh.edge_counts == 2
    tags = mesh.edge_tags
    sel = interior.copy()
    if f.scenario.polarization == "TE":
        sel |= (tags == GROUND) | (tags == WALL)
    if f.method == "tbc":
        sel |= (tags == GAMMA_R) & ~interior
    return sel


def edge_jumps(f: SolutionField, eids=None):
    """Flux jumps J_e at Gauss points, (n_edges, n_gauss)."""
    mesh = f.mesh
    allowed = edge_set(f)
    eids = np.flatnonzero(allowed) if eids is None else np.atleast_1d(np.asarray(eids))
    if not allowed[eids].all():
        raise EdgeSetError("jump requested on an edge outside the estimator edge set")
    J = np.zeros((len(eids), len(edge_rule(2 * f.degree)[0])), dtype=complex)
    inner = mesh.edge_counts[eids] == 2
    if inner.any():
        f1, _, _ = _edge_side(f, eids[inner], 0)
        f2, _, _ = _edge_side(f, eids[inner], 1)
        J[inner] = -(f1 + f2)
    wall = ~inner & np.isin(mesh.edge_tags[eids], (GROUND, WALL))
    if wall.any():
        fl, _, _ = _edge_side(f, eids[wall], 0)
        J[wall] = 2 * fl
    arc = ~inner & (mesh.edge_tags[eids] == GAMMA_R)
    if arc.any():
        J[arc] = _tbc_boundary_jump(f, eids[arc])
    return J


def _tbc_boundary_jump(f: SolutionField, eids):
    """2 s (B(u_h - u_ref) + d_nu u_ref - d_nu u_h) on Gamma_R edges of a TBC mesh."""
    s = f.scenario
    coupling = f.coupling
    if coupling is None:
        coupling = DtnCoupling(f.mesh, s, f.dofmap)
    flux_h, pts, nu = _edge_side(f, eids, 0)
    scale = coupling.scale
    c = coupling.coefficients(f.coeffs) - coupling.ref
    phi = np.arctan2(pts[..., 1], pts[..., 0])
    modes = dtn.mode_functions(s.polarization, coupling.n_modes, phi.ravel()).reshape(-1, *phi.shape)
    Bu = np.einsum("m,meq->eq", coupling.z * c, modes)
    _, gref, _ = reference_derivatives(s, pts)
    dref = np.einsum("eqd,ed->eq", gref, nu)
    # flux_h already carries the kappa^-2 factor for TE
    return 2 * (scale * (Bu + dref) - flux_h)


def element_weights(f: SolutionField) -> np.ndarray:
    """max over vertices and quadrature points of the PML weight; 1 in Omega."""
    w = np.ones(f.mesh.n_triangles)
    inpml = _pml_mask(f)
    if inpml.any():
        s = f.scenario
        pml = PmlMap.from_scenario(s)
        lam, _ = triangle_rule(min(6, 2 * f.degree + 2))
        lam = np.vstack([np.eye(3), lam])
        tri = np.flatnonzero(inpml)
        pts = np.einsum("qk,tkd->tqd", lam, f.mesh.vertices[f.mesh.triangles[tri]])
        w[tri] = layer_weight(pml, s.kappa0, np.hypot(pts[..., 0], pts[..., 1])).max(axis=1)
    return w


def estimate_elements(f: SolutionField):
    """(eta, residual part, jump part, weights) arrays over all triangles."""
    mesh = f.mesh
    _, area = element_geometry(mesh)
    R, _, wq = element_residual(f)
    res = mesh.h_K**2 * area * (np.abs(R) ** 2 @ wq)
    jump = np.zeros(mesh.n_triangles)
    eids = np.flatnonzero(edge_set(f))
    if len(eids):
        J = edge_jumps(f, eids)
        _, we = edge_rule(2 * f.degree)
        he = mesh.h_e[eids]
        contrib = 0.5 * he * he * (np.abs(J) ** 2 @ we)
        t = mesh.edge_tris[eids]
        np.add.at(jump, t[:, 0], contrib)
        has2 = t[:, 1] >= 0
        np.add.at(jump, t[has2, 1], contrib[has2])
    w = element_weights(f)
    eta = w * np.sqrt(res + jump)
    return eta, res, jump, w


def eta_K(f: SolutionField, K: int) -> float:
    return float(estimate_elements(f)[0][K])


def pml_trace_error(f: SolutionField) -> float:
    """epsilon_PML: propagation factor times the H^1/2 norm of (u_h - u_ref) on Gamma_R."""
    if not _is_pml_field(f):
        return 0.0
    s = f.scenario
    tc = dtn.trace_coeffs(f, f.mesh, s, subtract_reference=True)
    return propagation_factor(PmlMap.from_scenario(s), s.kappa0) * dtn.trace_norm(tc, 0.5)


def global_estimate(f: SolutionField) -> EstimatorReport:
    eta, res, jump, w = estimate_elements(f)
    return EstimatorReport(
        eta=eta,
        eps_h=float(np.sqrt(np.sum(eta**2))),
        eps_pml=pml_trace_error(f),
        dof_count=f.dofmap.n_free,
        dof_physical=f.dofmap.physical_free,
        residual_part=res,
        jump_part=jump,
        weights=w,
    )
