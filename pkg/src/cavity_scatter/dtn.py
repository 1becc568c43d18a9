"""Fourier analysis of traces on the semicircle Gamma_R and the DtN operator.

TM traces expand in sin(n phi), n >= 1; TE traces in cos(n phi), n >= 0.
FEM fields are sampled on the polygonal Gamma_R: the point at angle phi is
the intersection of the ray at angle phi with the chord that spans it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import specfun
from .mesh import GAMMA_R, PML, Mesh
from .pml import PmlMap, propagation_factor
from .scenario import Scenario, reference_derivatives


def default_modes(kappa0: float, R: float, n_arc: int = 0) -> int:
    """Propagating modes plus a buffer, and at least two modes per arc segment.

    Corner singularities on Gamma_R (aperture ends at r = R) make the trace
    spectrum decay algebraically, so the boundary resolution sets the floor.
    """
    return max(int(math.ceil(2 * kappa0 * R)) + 16, 2 * n_arc)


def mode_numbers(polarization: str, N: int) -> np.ndarray:
    return np.arange(1, N + 1) if polarization == "TM" else np.arange(0, N + 1)


def mode_functions(polarization: str, N: int, phi):
    """(n_modes, len(phi)) array of sin(n phi) (TM) or cos(n phi) (TE)."""
    n = mode_numbers(polarization, N)[:, None]
    phi = np.asarray(phi)[None, :]
    return np.sin(n * phi) if polarization == "TM" else np.cos(n * phi)


def projection_scale(polarization: str, N: int) -> np.ndarray:
    """Prefactor of the coefficient integrals: 2/pi, and 1/pi for the TE constant mode."""
    s = np.full(len(mode_numbers(polarization, N)), 2 / np.pi)
    if polarization == "TE":
        s[0] = 1 / np.pi
    return s


def mode_weights(polarization: str, N: int, R: float) -> np.ndarray:
    """int_{Gamma_R} e_n^2 ds: R pi/2, and R pi for the TE constant mode."""
    w = np.full(len(mode_numbers(polarization, N)), R * np.pi / 2)
    if polarization == "TE":
        w[0] = R * np.pi
    return w


@dataclass(frozen=True)
class TraceCoefficients:
    polarization: str
    R: float
    N: int
    coeffs: np.ndarray

    @property
    def modes(self) -> np.ndarray:
        return mode_numbers(self.polarization, self.N)

    def __sub__(self, other: "TraceCoefficients") -> "TraceCoefficients":
        return TraceCoefficients(self.polarization, self.R, self.N, self.coeffs - other.coeffs)

    def __add__(self, other: "TraceCoefficients") -> "TraceCoefficients":
        return TraceCoefficients(self.polarization, self.R, self.N, self.coeffs + other.coeffs)

    def scaled(self, c) -> "TraceCoefficients":
        return TraceCoefficients(self.polarization, self.R, self.N, c * self.coeffs)

    def synthesize(self, phi):
        return self.coeffs @ mode_functions(self.polarization, self.N, phi)


def dtn_multipliers(kappa0: float, R: float, N: int, polarization: str) -> np.ndarray:
    """z_n = kappa0 H_n'(kappa0 R) / H_n(kappa0 R) for the polarization's modes."""
    if not kappa0 * R > 0:
        raise ValueError("kappa0 * R must be positive")
    ld = specfun.log_derivatives(N, kappa0 * R)
    return kappa0 * ld[mode_numbers(polarization, N)]


def propagation_bound(pml: PmlMap, kappa0: float) -> float:
    return propagation_factor(pml, kappa0)


def trace_norm(tc: TraceCoefficients, s: float) -> float:
    """(sum (1 + n^2)^s |c_n|^2)^(1/2)."""
    n = tc.modes.astype(float)
    return float(np.sqrt(np.sum((1 + n**2) ** s * np.abs(tc.coeffs) ** 2)))


class GammaR:
    """The polygonal Gamma_R of a mesh with the Omega-side triangle of each edge."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        eid = np.flatnonzero(mesh.edge_tags == GAMMA_R)
        if len(eid) == 0:
            raise ValueError("mesh has no Gamma_R edges")
        V = mesh.vertices
        e = mesh.edges[eid]
        ang = np.arctan2(V[e, 1], V[e, 0])
        ang = np.where(ang < -1e-12, ang + 2 * np.pi, ang)
        ang = np.clip(ang, 0.0, np.pi)
        # orient each edge by increasing angle
        flip = ang[:, 0] > ang[:, 1]
        e[flip] = e[flip][:, ::-1]
        ang[flip] = ang[flip][:, ::-1]
        order = np.argsort(ang[:, 0])
        self.edge_ids = eid[order]
        self.ends = e[order]
        self.angles = ang[order]
        tris = mesh.edge_tris[self.edge_ids]
        inside = np.where((tris[:, 1] >= 0) & (mesh.regions[np.maximum(tris[:, 0], 0)] == PML), tris[:, 1], tris[:, 0])
        self.tris = inside
        # local positions of the two endpoints inside their triangle
        T = mesh.triangles[inside]
        self.loc_a = np.argmax(T == self.ends[:, [0]], axis=1)
        self.loc_b = np.argmax(T == self.ends[:, [1]], axis=1)
        if np.any(mesh.regions[inside] == PML):
            raise ValueError("Gamma_R edge without an Omega-side triangle")

    def edge_of_angle(self, phi):
        k = np.searchsorted(self.angles[:, 0], phi, side="right") - 1
        return np.clip(k, 0, len(self.edge_ids) - 1)

    def points(self, k, phi):
        """Chord points at angles ``phi`` on edges ``k`` and their edge parameter s in [0,1]."""
        V = self.mesh.vertices
        P, Q = V[self.ends[k, 0]], V[self.ends[k, 1]]
        d = Q - P
        u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        # solve t u = P + s d
        det = u[..., 0] * (-d[..., 1]) - u[..., 1] * (-d[..., 0])
        s = (u[..., 0] * P[..., 1] - u[..., 1] * P[..., 0]) / det
        s = np.clip(s, 0.0, 1.0)
        pts = P + s[..., None] * d
        return pts, s

    def barycentric(self, k, s):
        lam = np.zeros(np.shape(s) + (3,))
        np.put_along_axis(lam, self.loc_a[k][..., None], (1 - s)[..., None], axis=-1)
        np.put_along_axis(lam, self.loc_b[k][..., None], s[..., None], axis=-1)
        return lam

    def sample(self, phi):
        """Triangle index, barycentric coordinates and points for angles ``phi``."""
        phi = np.asarray(phi, dtype=float)
        k = self.edge_of_angle(phi)
        pts, s = self.points(k, phi)
        lam = self.barycentric(k, s)
        return self.tris[k], lam, pts

    @cached_property
    def outward_normals(self) -> np.ndarray:
        V = self.mesh.vertices
        d = V[self.ends[:, 1]] - V[self.ends[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        n /= np.hypot(*n.T)[:, None]
        # ends are ordered by increasing angle (counter-clockwise), so (dy, -dx) points outward
        return n


def trace_coeffs(
    field,
    mesh: Mesh | None,
    scenario: Scenario,
    N: int | None = None,
    M_samples: int | None = None,
    subtract_reference: bool = False,
) -> TraceCoefficients:
    """Modal coefficients of a trace on Gamma_R by the composite trapezoid rule.

    ``field`` is a :class:`~cavity_scatter.fem.SolutionField` (sampled on the
    polygonal Gamma_R) or a callable ``f(pts) -> values`` (sampled on the
    circle r = R).  With ``subtract_reference`` the analytic reference field is
    subtracted at the same sample points.
    """
    pol = scenario.polarization
    N = default_modes(scenario.kappa0, scenario.R, scenario.n_arc) if N is None else int(N)
    M = 8 * N if M_samples is None else int(M_samples)
    if N < 1:
        raise ValueError("N must be >= 1")
    if M < 4 * N:
        raise ValueError("M_samples must be >= 4 N")
    phi = np.linspace(0.0, np.pi, M + 1)
    if callable(field):
        pts = scenario.R * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        vals = np.asarray(field(pts), dtype=complex)
    else:
        gr = GammaR(field.mesh if mesh is None else mesh)
        tri, lam, pts = gr.sample(phi)
        vals = field.values_at(tri, lam)
    if subtract_reference:
        vals = vals - reference_derivatives(scenario, pts)[0]
    w = np.full(M + 1, np.pi / M)
    w[[0, -1]] *= 0.5
    c = projection_scale(pol, N) * (mode_functions(pol, N, phi) @ (w * vals))
    return TraceCoefficients(pol, scenario.R, N, c)


def boundary_modal_matrix(gamma: GammaR, cell_dofs: np.ndarray, degree: int, polarization: str, N: int, n_gauss: int = 8):
    """Modal coefficients of every basis function touching Gamma_R.

    Returns ``(dofs, C)`` with ``C[n, j]`` the n-th coefficient of basis
    function ``dofs[j]``, integrated per edge with Gauss-Legendre in angle.
    """
    from .fem import shape_values

    t, w = np.polynomial.legendre.leggauss(n_gauss)
    a0, a1 = gamma.angles[:, 0], gamma.angles[:, 1]
    phi = 0.5 * (a0 + a1)[:, None] + 0.5 * (a1 - a0)[:, None] * t[None, :]
    wphi = 0.5 * (a1 - a0)[:, None] * w[None, :]
    k = np.broadcast_to(np.arange(len(a0))[:, None], phi.shape)
    _, s = gamma.points(k, phi)
    lam = gamma.barycentric(k, s)
    vals = shape_values(degree, lam)  # (ne, ng, nb)
    dofs_local = cell_dofs[gamma.tris]  # (ne, nb)
    modes = mode_functions(polarization, N, phi.ravel()).reshape(-1, *phi.shape)  # (nm, ne, ng)
    contrib = np.einsum("meg,eg,egb->meb", modes, wphi, vals)
    dofs, inv = np.unique(dofs_local.ravel(), return_inverse=True)
    C = np.zeros((modes.shape[0], len(dofs)), dtype=float)
    np.add.at(C.T, inv, contrib.reshape(modes.shape[0], -1).T)
    C *= projection_scale(polarization, N)[:, None]
    return dofs, C, (phi, wphi, k)


def reference_modal_coeffs(gamma: GammaR, scenario: Scenario, N: int, quad) -> np.ndarray:
    """Coefficients of u_ref sampled on the chord points with the same angular quadrature."""
    phi, wphi, k = quad
    pts, _ = gamma.points(k, phi)
    u = reference_derivatives(scenario, pts)[0]
    modes = mode_functions(scenario.polarization, N, phi.ravel()).reshape(-1, *phi.shape)
    return projection_scale(scenario.polarization, N) * np.einsum("meg,eg,eg->m", modes, wphi, u)
