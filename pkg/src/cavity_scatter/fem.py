"""Lagrange P1/P2 elements on triangles, degree-of-freedom maps and discrete fields.

Local P2 ordering: vertices 0, 1, 2 then the midpoints of local edges
(1,2), (2,0), (0,1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import GAMMA_RHO, GROUND, PML, WALL, Mesh
from .scenario import Scenario, reference_derivatives

FREE = 0
DIRICHLET_ZERO = 1
DIRICHLET_UREF = 2


def n_local(degree: int) -> int:
    return 3 if degree == 1 else 6


def element_geometry(mesh: Mesh):
    """Barycentric gradients (nt, 3, 2) and areas (nt,)."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas
    g = np.empty((len(p), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    g /= 2 * area[:, None, None]
    return g, area


def shape_values(degree: int, lam):
    """Basis values at barycentric points ``lam`` (..., 3) -> (..., nb)."""
    lam = np.asarray(lam)
    if degree == 1:
        return lam.copy()
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1],
        axis=-1,
    )


def shape_dlam(degree: int, lam):
    """Derivatives with respect to the barycentric coordinates, (..., nb, 3)."""
    lam = np.asarray(lam)
    if degree == 1:
        return np.broadcast_to(np.eye(3), lam.shape[:-1] + (3, 3)).copy()
    out = np.zeros(lam.shape[:-1] + (6, 3))
    for i in range(3):
        out[..., i, i] = 4 * lam[..., i] - 1
    for e, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
        out[..., 3 + e, j] = 4 * lam[..., k]
        out[..., 3 + e, k] = 4 * lam[..., j]
    return out


def shape_dlam2(degree: int) -> np.ndarray:
    """Constant second barycentric derivatives (nb, 3, 3)."""
    nb = n_local(degree)
    h = np.zeros((nb, 3, 3))
    if degree == 2:
        for i in range(3):
            h[i, i, i] = 4.0
        for e, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
            h[3 + e, j, k] = h[3 + e, k, j] = 4.0
    return h


def shape_gradients(degree: int, lam, glam):
    """Physical gradients.  ``lam`` (nq, 3) shared or (nt, nq, 3); ``glam`` (nt, 3, 2).

    Returns (nt, nq, nb, 2).
    """
    d = shape_dlam(degree, lam)
    if d.ndim == 3:
        q, b, _ = d.shape
        return (d.reshape(q * b, 3) @ glam).reshape(len(glam), q, b, 2)
    return d @ glam[:, None]


def shape_hessians(degree: int, glam):
    """(nt, nb, 2, 2); zero for P1."""
    h = shape_dlam2(degree)
    hk = np.einsum("bkl,tkd->tbdl", h, glam)
    return hk @ glam[:, None]


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: Mesh
    degree: int
    polarization: str
    cell_dofs: np.ndarray  # (nt, nb)
    kind: np.ndarray  # (n_dofs,)
    coords: np.ndarray  # (n_dofs, 2)

    @property
    def n_dofs(self) -> int:
        return len(self.kind)

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.kind == FREE)

    @property
    def n_free(self) -> int:
        return len(self.free)

    @cached_property
    def free_index(self) -> np.ndarray:
        out = np.full(self.n_dofs, -1, dtype=np.int64)
        out[self.free] = np.arange(self.n_free)
        return out

    @cached_property
    def physical_free(self) -> int:
        """Free DoFs whose basis support touches a non-PML element."""
        touch = np.zeros(self.n_dofs, dtype=bool)
        touch[self.cell_dofs[self.mesh.regions != PML].ravel()] = True
        return int(np.sum(touch & (self.kind == FREE)))

    def edge_dofs(self, edge_ids):
        """DoFs lying on the given global edges (vertices and, for P2, midpoints)."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        d = [self.mesh.edges[edge_ids].ravel()]
        if self.degree == 2:
            d.append(self.mesh.n_vertices + edge_ids)
        return np.unique(np.concatenate(d))


def build_dofmap(mesh: Mesh, scenario: Scenario, degree: int | None = None) -> DofMap:
    degree = scenario.fem_degree if degree is None else degree
    if degree not in (1, 2):
        raise ValueError("fem_degree must be 1 or 2")
    nv = mesh.n_vertices
    if degree == 1:
        cell = mesh.triangles.copy()
        coords = mesh.vertices
    else:
        cell = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        mids = mesh.vertices[mesh.edges].mean(axis=1)
        coords = np.vstack([mesh.vertices, mids])
    kind = np.full(len(coords), FREE, dtype=np.int64)
    dm = DofMap(mesh, degree, scenario.polarization, cell, kind, coords)
    tags = mesh.edge_tags
    kind[dm.edge_dofs(np.flatnonzero(tags == GAMMA_RHO))] = DIRICHLET_UREF
    if scenario.polarization == "TM":
        kind[dm.edge_dofs(np.flatnonzero((tags == GROUND) | (tags == WALL)))] = DIRICHLET_ZERO
    return dm


def dirichlet_values(dofmap: DofMap, scenario: Scenario) -> np.ndarray:
    """Full-length vector holding the essential boundary data (zero elsewhere)."""
    out = np.zeros(dofmap.n_dofs, dtype=complex)
    idx = np.flatnonzero(dofmap.kind == DIRICHLET_UREF)
    if len(idx):
        out[idx] = reference_derivatives(scenario, dofmap.coords[idx])[0]
    return out


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Complex nodal coefficients (all DoFs, including constrained ones)."""

    dofmap: DofMap
    scenario: Scenario
    coeffs: np.ndarray
    method: str = "pml"
    coupling: object | None = None  # DtN coupling of TBC solutions

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def degree(self) -> int:
        return self.dofmap.degree

    def values_at(self, tri_idx, lam):
        """u_h at barycentric points ``lam`` (n, 3) of triangles ``tri_idx`` (n,)."""
        phi = shape_values(self.degree, lam)
        c = self.coeffs[self.dofmap.cell_dofs[tri_idx]]
        return np.sum(phi * c, axis=-1)

    def gradients_at(self, tri_idx, lam):
        glam, _ = element_geometry(self.mesh)
        d = shape_dlam(self.degree, lam)  # (n, nb, 3)
        g = np.einsum("nbk,nkd->nbd", d, glam[tri_idx])
        c = self.coeffs[self.dofmap.cell_dofs[tri_idx]]
        return np.einsum("nb,nbd->nd", c, g)

    def evaluate(self, pts):
        from .mesh import locate_many

        idx, lam = locate_many(self.mesh, pts, tol=1e-10)
        return self.values_at(idx, lam)

    def vertex_values(self) -> np.ndarray:
        return self.coeffs[: self.mesh.n_vertices]


def interpolate(dofmap: DofMap, func) -> np.ndarray:
    """Nodal interpolant of ``func(pts) -> values``."""
    return np.asarray(func(dofmap.coords), dtype=complex)


def error_norms(field: SolutionField, exact, mask=None, degree: int | None = None):
    """L2 and H1 errors and norms of ``exact`` over the triangles in ``mask``.

    ``exact(pts)`` returns (value, gradient).  Returns a dict with
    ``l2``, ``h1``, ``l2_ref``, ``h1_ref``.
    """
    from .quadrature import triangle_rule

    mesh = field.mesh
    mask = np.ones(mesh.n_triangles, bool) if mask is None else np.asarray(mask, bool)
    q = min(6, (degree or 2 * field.degree + 2))
    lam, w = triangle_rule(q)
    glam, area = element_geometry(mesh)
    t = np.flatnonzero(mask)
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles[t]])
    phi = shape_values(field.degree, lam)
    grad = shape_gradients(field.degree, lam, glam[t])
    c = field.coeffs[field.dofmap.cell_dofs[t]]
    uh = np.einsum("qb,tb->tq", phi, c)
    guh = np.einsum("tqbd,tb->tqd", grad, c)
    u, gu = exact(pts)
    wa = w[None, :] * area[t, None]
    l2 = np.sum(wa * np.abs(u - uh) ** 2)
    semi = np.sum(wa * np.sum(np.abs(gu - guh) ** 2, axis=-1))
    l2r = np.sum(wa * np.abs(u) ** 2)
    semir = np.sum(wa * np.sum(np.abs(gu) ** 2, axis=-1))
    return {
        "l2": float(np.sqrt(l2)),
        "h1": float(np.sqrt(l2 + semi)),
        "l2_ref": float(np.sqrt(l2r)),
        "h1_ref": float(np.sqrt(l2r + semir)),
    }


def l2_difference(f1: SolutionField, f2: SolutionField, mask1=None) -> float:
    """||u1 - u2||_L2 when f2 lives on the submesh of f1's triangles selected by ``mask1``.

    Triangles are matched in order, so f2.mesh must be ``submesh(f1.mesh, mask1)``.
    """
    from .quadrature import triangle_rule

    mesh1 = f1.mesh
    t1 = np.flatnonzero(np.ones(mesh1.n_triangles, bool) if mask1 is None else mask1)
    if len(t1) != f2.mesh.n_triangles:
        raise ValueError("fields are not defined on matching triangles")
    lam, w = triangle_rule(min(6, 2 * max(f1.degree, f2.degree)))
    phi1 = shape_values(f1.degree, lam)
    phi2 = shape_values(f2.degree, lam)
    u1 = np.einsum("qb,tb->tq", phi1, f1.coeffs[f1.dofmap.cell_dofs[t1]])
    u2 = np.einsum("qb,tb->tq", phi2, f2.coeffs[f2.dofmap.cell_dofs])
    area = f2.mesh.areas
    return float(np.sqrt(np.sum(w[None, :] * area[:, None] * np.abs(u1 - u2) ** 2)))
