"""Conforming triangulations with boundary tags and newest-vertex bisection.

Triangles are stored with the newest vertex first, so the refinement edge of
triangle ``(v0, v1, v2)`` is always ``(v1, v2)``.  Local edge ``i`` is the
edge opposite local vertex ``i``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely
import shapely.geometry as sg
import triangle as tr

from .scenario import Scenario, ScenarioError, arc_points

# edge tags
INTERIOR = 0
GROUND = 1
WALL = 2
GAMMA_R = 3
GAMMA_RHO = 4
TAG_NAMES = {INTERIOR: "interior", GROUND: "ground", WALL: "wall", GAMMA_R: "gamma_R", GAMMA_RHO: "gamma_rho"}

# region labels; material k gets MATERIAL0 + k
AIR = 0
PML = 1
MATERIAL0 = 2

DOMAINS = ("pml_domain", "tbc_domain")

_KEY = np.int64(1) << 31


class MeshError(RuntimeError):
    pass


class PointNotFound(MeshError):
    pass


def _edge_keys(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.minimum(a, b) * _KEY + np.maximum(a, b)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.

    ``tagged_edges``/``tags`` list every edge with a nonzero tag, including
    the Gamma_R interface edges that are interior to a PML mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    tagged_edges: np.ndarray
    tags: np.ndarray
    R: float
    rho: float
    domain: str = "pml_domain"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)  # (nt, 3, 2)
        keys = _edge_keys(local[..., 0], local[..., 1]).ravel()
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        flat = local.reshape(-1, 2)[first]
        edges = np.sort(flat, axis=1)
        tri_edges = inv.reshape(-1, 3)
        ne = len(uniq)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(len(t)), 3)
        order = np.argsort(inv, kind="stable")
        e_sorted = inv[order]
        starts = np.r_[True, e_sorted[1:] != e_sorted[:-1]]
        edge_tris[e_sorted[starts], 0] = owner[order][starts]
        second = ~starts
        edge_tris[e_sorted[second], 1] = owner[order][second]
        counts = np.bincount(inv, minlength=ne)
        tags = np.zeros(ne, dtype=np.int64)
        if len(self.tagged_edges):
            tk = _edge_keys(self.tagged_edges[:, 0], self.tagged_edges[:, 1])
            pos = np.searchsorted(uniq, tk)
            ok = (pos < ne) & (uniq[np.minimum(pos, ne - 1)] == tk)
            tags[pos[ok]] = self.tags[ok]
        return uniq, edges, tri_edges, edge_tris, counts, tags

    @property
    def edge_keys(self):
        return self._edge_data[0]

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[1]

    @property
    def tri_edges(self) -> np.ndarray:
        """(nt, 3) global edge index of local edge i (opposite vertex i)."""
        return self._edge_data[2]

    @property
    def edge_tris(self) -> np.ndarray:
        """(ne, 2) adjacent triangles; second column -1 on the boundary."""
        return self._edge_data[3]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_data[4]

    @property
    def edge_tags(self) -> np.ndarray:
        return self._edge_data[5]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def h_e(self) -> np.ndarray:
        v = self.vertices[self.edges]
        return np.hypot(*(v[:, 1] - v[:, 0]).T)

    @cached_property
    def h_K(self) -> np.ndarray:
        return self.h_e[self.tri_edges].max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def min_angle(self) -> float:
        return float(triangle_angles(self).min())

    def total_area(self) -> float:
        return float(self.areas.sum())


def triangle_angles(mesh: Mesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    out = np.empty((len(p), 3))
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cos = (a * b).sum(1) / (np.hypot(*a.T) * np.hypot(*b.T))
        out[:, i] = np.arccos(np.clip(cos, -1, 1))
    return out


# ---------------------------------------------------------------------------
# initial triangulation


def _domain_polygon(scenario: Scenario, radius: float):
    region = sg.Polygon(arc_points(radius, scenario.n_arc))
    if scenario.cavity is not None:
        cav = sg.Polygon(scenario.cavity)
        if not cav.is_valid:
            raise ScenarioError("cavity_polygon self-intersects")
        region = region.union(cav)
    for p in scenario.protrusions:
        region = region.difference(sg.Polygon(p))
    if region.geom_type != "Polygon":
        raise ScenarioError("computational domain is not a single connected polygon")
    return region


def inner_polygon(scenario: Scenario):
    """Polygonal Omega: the R half-disc polyline plus the cavity."""
    return _domain_polygon(scenario, scenario.R)


def _pslg(scenario: Scenario, domain: str):
    outer_r = scenario.rho if domain == "pml_domain" else scenario.R
    region = _domain_polygon(scenario, outer_r)
    lines = [region.exterior] + list(region.interiors)
    if domain == "pml_domain":
        lines.append(sg.LineString(arc_points(scenario.R, scenario.n_arc)))
    for mat in scenario.materials:
        lines.append(sg.Polygon(mat.polygon).exterior)
    noded = shapely.unary_union([shapely.set_precision(g, 0.0) for g in lines])
    segs = []
    for g in getattr(noded, "geoms", [noded]):
        c = np.asarray(g.coords)
        segs.extend(zip(c[:-1], c[1:]))
    segs = np.asarray(segs, dtype=float)
    scale = outer_r
    # merge coincident vertices
    pts = segs.reshape(-1, 2)
    rounded = np.round(pts / (scale * 1e-10)).astype(np.int64)
    _, first, inv = np.unique(rounded, axis=0, return_index=True, return_inverse=True)
    verts = pts[first]
    seg_idx = inv.reshape(-1, 2)
    seg_idx = seg_idx[seg_idx[:, 0] != seg_idx[:, 1]]
    seg_idx = np.unique(np.sort(seg_idx, axis=1), axis=0)

    # snap polyline vertices exactly onto their circles
    for rad in (scenario.R, outer_r):
        r = np.hypot(verts[:, 0], verts[:, 1])
        on = (np.abs(r - rad) < 1e-9 * rad) & (verts[:, 1] >= 0)
        verts[on] *= (rad / r[on])[:, None]
    verts[np.abs(verts[:, 1]) < 1e-12 * scale, 1] = 0.0

    tol = 1e-9 * scale
    a, b = verts[seg_idx[:, 0]], verts[seg_idx[:, 1]]
    mid = 0.5 * (a + b)
    boundary = shapely.dwithin(region.boundary, shapely.points(mid[:, 0], mid[:, 1]), tol)
    ra, rb = np.hypot(*a.T), np.hypot(*b.T)
    upper = mid[:, 1] > tol

    def on_circle(rad):
        return (np.abs(ra - rad) < tol) & (np.abs(rb - rad) < tol) & upper

    ground = (np.abs(a[:, 1]) < tol) & (np.abs(b[:, 1]) < tol)
    markers = np.zeros(len(seg_idx), dtype=np.int64)
    markers[boundary] = WALL
    markers[boundary & ground] = GROUND
    markers[on_circle(scenario.R)] = GAMMA_R
    if domain == "pml_domain":
        markers[boundary & on_circle(scenario.rho)] = GAMMA_RHO
    holes = []
    for p in scenario.protrusions:
        poly = sg.Polygon(p)
        cut = poly.intersection(region.envelope).difference(region)
        if not cut.is_empty:
            q = cut.representative_point()
            holes.append((q.x, q.y))
    return verts, seg_idx, markers, holes, region


def _equilateral_area(h: float) -> float:
    return math.sqrt(3) / 4 * h**2


def initial_mesh(
    scenario: Scenario, target_h: float | None = None, domain: str = "pml_domain", pml_h: float | None = None
) -> Mesh:
    """Triangulate Omega_rho (``pml_domain``) or Omega (``tbc_domain``).

    ``target_h`` defaults to a wavelength / 8 and is divided by
    |sqrt(eps mu)| inside material regions.  ``pml_h`` is the size in the PML
    annulus, by default twice ``target_h``; the estimator weight keeps the
    layer coarse anyway.  Elements are quality meshes (minimum angle 30
    degrees) with their longest edge as refinement edge.
    """
    if domain not in DOMAINS:
        raise ValueError(f"domain must be one of {DOMAINS}")
    if target_h is None:
        target_h = scenario.wavelength / 8
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    if pml_h is None:
        pml_h = 2 * target_h
    if not pml_h > 0:
        raise ValueError("pml_h must be positive")
    verts, segs, markers, holes, region = _pslg(scenario, domain)
    pslg = {"vertices": verts, "segments": segs.astype(np.int32), "segment_markers": markers.astype(np.int32)}
    if holes:
        pslg["holes"] = np.asarray(holes)
    area = _equilateral_area
    coarse = target_h if domain == "tbc_domain" else max(pml_h, target_h)
    regions = []
    if coarse > target_h:
        air = inner_polygon(scenario)
        for mat in scenario.materials:
            air = air.difference(sg.Polygon(mat.polygon))
        for part in getattr(air, "geoms", [air]):
            q = part.representative_point()
            regions.append([q.x, q.y, 0.0, area(target_h)])
    # materials: scale h by the local refractive index
    for mat in scenario.materials:
        q = sg.Polygon(mat.polygon).representative_point()
        n = max(1.0, abs(cmath.sqrt(mat.epsilon_rel * mat.mu_rel)))
        regions.append([q.x, q.y, 0.0, area(target_h / n)])
    opts = "pq30"
    if regions:
        pslg["regions"] = np.asarray(regions)
        opts += "a"
    # triangle's switch parser does not accept exponent notation
    out = tr.triangulate(pslg, f"{opts}a{area(coarse):.24f}Q")
    V = np.asarray(out["vertices"], dtype=float)
    T = np.asarray(out["triangles"], dtype=np.int64)
    E = np.asarray(out["segments"], dtype=np.int64)
    M = np.asarray(out["segment_markers"], dtype=np.int64).ravel()

    # new Steiner points on arcs are placed on the chord; keep them there
    keep = M != INTERIOR
    T = _orient(V, T)
    T = _longest_edge_first(V, T)
    regions = _label(scenario, V[T].mean(axis=1), domain)
    mesh = Mesh(V, T, regions, E[keep], M[keep], scenario.R, scenario.rho, domain)
    return mesh


def _orient(V, T):
    p = V[T]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    T = T.copy()
    T[neg] = T[neg][:, [0, 2, 1]]
    return T


def _longest_edge_first(V, T):
    p = V[T]
    opp = np.stack([np.hypot(*(p[:, (i + 2) % 3] - p[:, (i + 1) % 3]).T) for i in range(3)], axis=1)
    k = np.argmax(opp, axis=1)
    idx = (k[:, None] + np.arange(3)) % 3
    return np.take_along_axis(T, idx, axis=1)


def _label(scenario: Scenario, centroids, domain):
    omega = inner_polygon(scenario)
    pts = shapely.points(centroids[:, 0], centroids[:, 1])
    labels = np.where(shapely.contains(omega, pts), AIR, PML).astype(np.int64)
    if domain == "tbc_domain":
        labels[:] = AIR
    for k, mat in enumerate(scenario.materials):
        inside = shapely.contains(sg.Polygon(mat.polygon), pts)
        labels[inside] = MATERIAL0 + k
    return labels


# ---------------------------------------------------------------------------
# refinement


def bisect(mesh: Mesh, marks) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conformity closure.

    ``marks`` is a boolean mask or an iterable of triangle indices.
    """
    marks = np.asarray(marks)
    nt = mesh.n_triangles
    if marks.dtype == bool:
        if marks.shape != (nt,):
            raise ValueError("mark mask has the wrong length")
        marked = np.flatnonzero(marks)
    else:
        marked = np.unique(marks.astype(np.int64))
        if len(marked) and (marked[0] < 0 or marked[-1] >= nt):
            raise ValueError("triangle index out of range")
    if len(marked) == 0:
        return mesh

    T = mesh.triangles
    all_keys = _edge_keys(
        np.stack([T[:, 1], T[:, 2], T[:, 0]], 1), np.stack([T[:, 2], T[:, 0], T[:, 1]], 1)
    )  # local edge i opposite vertex i
    ref_keys = all_keys[:, 0]
    split = np.unique(ref_keys[marked])
    while True:
        hit = np.isin(all_keys, split).any(axis=1) & ~np.isin(ref_keys, split)
        if not hit.any():
            break
        split = np.union1d(split, ref_keys[hit])

    V = mesh.vertices
    a, b = split // _KEY, split % _KEY
    new_vertices = 0.5 * (V[a] + V[b])
    mid_index = mesh.n_vertices + np.arange(len(split))
    V = np.vstack([V, new_vertices])

    def midpoint_of(keys):
        pos = np.searchsorted(split, keys)
        pos = np.minimum(pos, len(split) - 1)
        found = split[pos] == keys
        return np.where(found, mid_index[pos], -1)

    tris, regs = T, mesh.regions
    while True:
        rk = _edge_keys(tris[:, 1], tris[:, 2])
        m = midpoint_of(rk)
        go = m >= 0
        if not go.any():
            break
        t = tris[go]
        mm = m[go]
        c1 = np.stack([mm, t[:, 0], t[:, 1]], axis=1)
        c2 = np.stack([mm, t[:, 2], t[:, 0]], axis=1)
        # interleave children so that ordering is deterministic and local
        children = np.stack([c1, c2], axis=1).reshape(-1, 3)
        child_regs = np.repeat(regs[go], 2)
        tris = np.vstack([tris[~go], children])
        regs = np.concatenate([regs[~go], child_regs])

    # inherit tags on split edges
    te, tg = mesh.tagged_edges, mesh.tags
    if len(te):
        tk = _edge_keys(te[:, 0], te[:, 1])
        m = midpoint_of(tk)
        s = m >= 0
        halves = np.vstack([np.stack([te[s, 0], m[s]], 1), np.stack([m[s], te[s, 1]], 1)])
        te = np.vstack([te[~s], halves])
        tg = np.concatenate([tg[~s], tg[s], tg[s]])
    return Mesh(V, tris, regs, te, tg, mesh.R, mesh.rho, mesh.domain)


def refine_uniform(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = bisect(mesh, np.ones(mesh.n_triangles, dtype=bool))
    return mesh


def submesh(mesh: Mesh, mask) -> Mesh:
    """Mesh made of the triangles in ``mask`` with compact vertex numbering."""
    mask = np.asarray(mask, dtype=bool)
    T = mesh.triangles[mask]
    used = np.unique(T)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    te = mesh.tagged_edges
    keep = (remap[te[:, 0]] >= 0) & (remap[te[:, 1]] >= 0) if len(te) else np.zeros(0, bool)
    domain = "tbc_domain" if not np.any(mesh.regions[mask] == PML) else mesh.domain
    sub = Mesh(mesh.vertices[used], remap[T], mesh.regions[mask], remap[te[keep]], mesh.tags[keep], mesh.R, mesh.rho, domain)
    # drop tags on edges that are not edges of the submesh
    tk = _edge_keys(sub.tagged_edges[:, 0], sub.tagged_edges[:, 1])
    ok = np.isin(tk, sub.edge_keys)
    return Mesh(sub.vertices, sub.triangles, sub.regions, sub.tagged_edges[ok], sub.tags[ok], mesh.R, mesh.rho, domain)


def omega_submesh(mesh: Mesh) -> Mesh:
    """The physical part (all non-PML triangles) of a PML mesh."""
    return submesh(mesh, mesh.regions != PML)


# ---------------------------------------------------------------------------
# queries


def barycentric(mesh: Mesh, tri_idx, pts):
    p = mesh.vertices[mesh.triangles[tri_idx]]
    x0 = p[..., 0, :]
    d1 = p[..., 1, :] - x0
    d2 = p[..., 2, :] - x0
    q = pts - x0
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    l1 = (q[..., 0] * d2[..., 1] - q[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * q[..., 1] - d1[..., 1] * q[..., 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=-1)


def locate(mesh: Mesh, point, tol: float = 1e-12, candidates=None):
    """Containing triangle and barycentric coordinates of one point.

    Ties on shared edges/vertices resolve to the lowest triangle index.
    """
    idx, lam = locate_many(mesh, np.asarray(point, dtype=float)[None, :], tol, candidates)
    return int(idx[0]), lam[0]


def locate_many(mesh: Mesh, pts, tol: float = 1e-12, candidates=None, chunk: int = 64):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    cand = np.arange(mesh.n_triangles) if candidates is None else np.asarray(candidates)
    out_idx = np.empty(len(pts), dtype=np.int64)
    out_lam = np.empty((len(pts), 3))
    for s in range(0, len(pts), chunk):
        q = pts[s:s + chunk]
        lam = barycentric(mesh, cand[None, :], q[:, None, :])  # (nq, nc, 3)
        worst = lam.min(axis=-1)
        j = np.argmax(worst >= -tol, axis=1)
        ok = worst[np.arange(len(q)), j] >= -tol
        if not ok.all():
            bad = q[np.flatnonzero(~ok)[0]]
            raise PointNotFound(f"point ({bad[0]:.16g}, {bad[1]:.16g}) is outside the mesh")
        out_idx[s:s + chunk] = cand[j]
        out_lam[s:s + chunk] = lam[np.arange(len(q)), j]
    return out_idx, out_lam


def audit(mesh: Mesh) -> list[str]:
    """Conformity and orientation problems; an empty list means the mesh is valid."""
    problems = []
    if np.any(mesh.areas <= 0):
        problems.append(f"{int(np.sum(mesh.areas <= 0))} triangles with non-positive area")
    c = mesh.edge_counts
    if np.any(c > 2):
        problems.append(f"{int(np.sum(c > 2))} edges shared by more than two triangles")
    outer = GAMMA_RHO if mesh.domain == "pml_domain" else GAMMA_R
    allowed = np.array([GROUND, WALL, outer])
    bnd = c == 1
    if np.any(~np.isin(mesh.edge_tags[bnd], allowed)):
        problems.append("boundary edge without a boundary tag (hanging node or untagged boundary)")
    if mesh.domain == "pml_domain":
        inner = (c == 2) & (mesh.edge_tags != INTERIOR) & (mesh.edge_tags != GAMMA_R)
        if np.any(inner):
            problems.append("interior edge carrying a boundary tag")
    # vertices must be used and none may lie in the interior of an edge
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        problems.append(f"{int((~used).sum())} unused vertices")
    ne, nv, nt = len(mesh.edges), mesh.n_vertices, mesh.n_triangles
    nb_loops = 1 + _n_holes(mesh)
    if nv - ne + nt != 2 - nb_loops:
        problems.append(f"Euler characteristic mismatch: V-E+F = {nv - ne + nt}")
    return problems


def _n_holes(mesh: Mesh) -> int:
    # number of boundary loops minus one, from boundary-edge connectivity
    bnd = mesh.edges[mesh.edge_counts == 1]
    if len(bnd) == 0:
        return 0
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nodes, inv = np.unique(bnd, return_inverse=True)
    inv = inv.reshape(-1, 2)
    g = coo_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(len(nodes), len(nodes)))
    n, _ = connected_components(g, directed=False)
    return n - 1


def region_summary(mesh: Mesh) -> dict[int, int]:
    labels, counts = np.unique(mesh.regions, return_counts=True)
    return dict(zip(labels.tolist(), counts.tolist()))


# ---------------------------------------------------------------------------
# export


def write_vtk(mesh: Mesh, path, point_data: dict | None = None, cell_data: dict | None = None, title: str = "mesh"):
    """Legacy ASCII VTK unstructured grid with triangle cells."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices)
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    cells = {"region": mesh.regions}
    cells.update(cell_data or {})
    lines.append(f"CELL_DATA {nt}")
    for name, arr in cells.items():
        lines.extend(_scalars(name, arr))
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, arr in point_data.items():
            lines.extend(_scalars(name, arr))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _scalars(name, arr):
    arr = np.asarray(arr)
    kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
    fmt = "{:d}" if kind == "int" else "{:.17g}"
    return [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"] + [fmt.format(v) for v in arr.tolist()]


def read_vtk_point_count(path) -> int:
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                return int(line.split()[1])
    raise MeshError("no POINTS section")
