"""Radial complex coordinate stretching on the half annulus R < r < rho.

All point-wise functions accept arrays of shape (..., 2) and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, reference_derivatives

R_GUARD = 1e-14


@dataclass(frozen=True)
class PmlMap:
    R: float
    rho: float
    sigma0: float
    m_pml: int

    def __post_init__(self):
        if not (self.rho > self.R > 0):
            raise ValueError("PmlMap requires rho > R > 0")
        if not self.sigma0 > 0:
            raise ValueError("PmlMap requires sigma0 > 0")
        if self.m_pml < 1:
            raise ValueError("PmlMap requires m_pml >= 1")

    @classmethod
    def from_scenario(cls, s: Scenario) -> "PmlMap":
        return cls(s.R, s.rho, s.sigma0, int(s.m_pml))

    @property
    def alpha0(self) -> complex:
        return 1 + 1j * self.sigma0


def profile(pml: PmlMap, r):
    """sigma, sigma_hat, alpha = 1 + i sigma, beta = 1 + i sigma_hat at radius r.

    sigma_hat(r) = (1/r) * int_R^r sigma uses the closed-form antiderivative.
    """
    r = np.asarray(r, dtype=float)
    d = pml.rho - pml.R
    t = np.clip(r - pml.R, 0.0, None)
    sigma = pml.sigma0 * (t / d) ** pml.m_pml
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_hat = np.where(
            t > 0,
            pml.sigma0 * t ** (pml.m_pml + 1) / ((pml.m_pml + 1) * np.maximum(r, R_GUARD) * d**pml.m_pml),
            0.0,
        )
    return sigma, sigma_hat, 1 + 1j * sigma, 1 + 1j * sigma_hat


def _profile_derivatives(pml: PmlMap, r):
    """d(sigma)/dr and d(sigma_hat)/dr."""
    d = pml.rho - pml.R
    t = np.clip(r - pml.R, 0.0, None)
    m = pml.m_pml
    dsigma = pml.sigma0 * m * t ** (m - 1) / d**m
    dsigma = np.where(t > 0, dsigma, 0.0)
    sigma, sigma_hat, _, _ = profile(pml, r)
    dsigma_hat = np.where(t > 0, (sigma - sigma_hat) / np.maximum(r, R_GUARD), 0.0)
    return dsigma, dsigma_hat


def _polar(pml: PmlMap, pts):
    pts = np.asarray(pts, dtype=float)
    r0 = np.hypot(pts[..., 0], pts[..., 1])
    r = np.maximum(r0, R_GUARD * pml.R)
    # any unit direction will do at the origin
    safe = np.where(r0 > 0, r0, 1.0)
    c = np.where(r0 > 0, pts[..., 0] / safe, 1.0)
    return r, c, pts[..., 1] / safe


def stretch_matrix(pml: PmlMap, pts):
    """The 2x2 complex-symmetric matrix A(x) = (beta/alpha) e_r e_r^T + (alpha/beta) e_phi e_phi^T.

    Identity wherever r <= R.
    """
    r, c, s = _polar(pml, pts)
    _, _, alpha, beta = profile(pml, r)
    p = beta / alpha
    q = alpha / beta
    A = np.empty(r.shape + (2, 2), dtype=complex)
    A[..., 0, 0] = p * c * c + q * s * s
    A[..., 1, 1] = p * s * s + q * c * c
    A[..., 0, 1] = A[..., 1, 0] = (p - q) * s * c
    return A


def stretch_divergence(pml: PmlMap, pts):
    """Column divergence of A: sum_i d_i A_ij = (p' + (p - q)/r) e_r with p = beta/alpha, q = 1/p."""
    r, c, s = _polar(pml, pts)
    _, _, alpha, beta = profile(pml, r)
    dsigma, dsigma_hat = _profile_derivatives(pml, r)
    dalpha, dbeta = 1j * dsigma, 1j * dsigma_hat
    p = beta / alpha
    q = alpha / beta
    dp = (dbeta * alpha - beta * dalpha) / alpha**2
    radial = dp + (p - q) / r
    return np.stack([radial * c, radial * s], axis=-1)


def alpha_beta(pml: PmlMap, pts):
    r, _, _ = _polar(pml, pts)
    _, _, alpha, beta = profile(pml, r)
    return alpha * beta


def weight(pml: PmlMap, kappa0: float, pts):
    """Estimator weight for points of the PML layer.

    |alpha/alpha0| * exp(-kappa0 Im(r~) sqrt(1 - r^2/|r~|^2)) with r~ = r beta(r).
    Returns 1 for r <= R.  The caller decides which elements belong to the
    layer; points of layer elements with r < R (polygonal interface) take the
    r -> R+ value 1/|alpha0|.
    """
    r, _, _ = _polar(pml, pts)
    w = layer_weight(pml, kappa0, r)
    return np.where(r <= pml.R, 1.0, w)


def layer_weight(pml: PmlMap, kappa0: float, r):
    r = np.asarray(r, dtype=float)
    _, sigma_hat, alpha, _ = profile(pml, r)
    # Im r~ = r sigma_hat and 1 - r^2/|r~|^2 = sigma_hat^2 / (1 + sigma_hat^2)
    exponent = kappa0 * r * sigma_hat * sigma_hat / np.sqrt(1 + sigma_hat**2)
    return np.abs(alpha) / abs(pml.alpha0) * np.exp(-exponent)


def propagation_factor(pml: PmlMap, kappa0: float) -> float:
    """exp(-kappa0 Im(rho~) (1 - R^2/|rho~|^2)^(1/2)), rho~ = rho beta(rho)."""
    _, sigma_hat, _, beta = profile(pml, pml.rho)
    rho_t = pml.rho * complex(beta)
    return float(np.exp(-kappa0 * rho_t.imag * np.sqrt(1 - pml.R**2 / abs(rho_t) ** 2)))


def epsilon_pml(pml: PmlMap, kappa0: float, trace_norm_value: float) -> float:
    if trace_norm_value < 0:
        raise ValueError("trace norm must be non-negative")
    return propagation_factor(pml, kappa0) * trace_norm_value


def divergence_term(pml: PmlMap, pts, grad, hess):
    """div(A grad u) from the gradient and Hessian of u at ``pts``."""
    A = stretch_matrix(pml, pts)
    divA = stretch_divergence(pml, pts)
    return np.einsum("...j,...j->...", divA, grad) + np.einsum("...ij,...ij->...", A, hess)


def pml_source_strong(scenario: Scenario, pts):
    """Strong PML source of the reference field.

    TM: F = div(A grad u_ref) + kappa0^2 alpha beta u_ref
    TE: G = kappa0^-2 div(A grad u_ref) + alpha beta u_ref
    """
    pml = PmlMap.from_scenario(scenario)
    u, g, h = reference_derivatives(scenario, pts)
    div = divergence_term(pml, pts, g, h)
    ab = alpha_beta(pml, pts)
    if scenario.polarization == "TM":
        return div + scenario.kappa0**2 * ab * u
    return div / scenario.kappa0**2 + ab * u
