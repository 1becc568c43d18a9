"""Far field, backscatter RCS and field export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import dtn, specfun
from .adapt import AdaptOptions, adapt_solve
from .fem import SolutionField
from .mesh import write_vtk
from .scenario import Scenario

AXES = ("angle_deg", "frequency_ghz")


def scattered_coeffs(field: SolutionField, N: int | None = None, M_samples: int | None = None) -> dtn.TraceCoefficients:
    """Modal coefficients of u_h - u_ref on Gamma_R."""
    return dtn.trace_coeffs(field, field.mesh, field.scenario, N, M_samples, subtract_reference=True)


def far_field_from_coeffs(tc: dtn.TraceCoefficients, kappa0: float, phi):
    """P(phi) = sum c_n / H_n(kappa0 R) e^{-i n pi/2} e_n(phi)."""
    n = tc.modes
    inv = specfun.inverse_h1(tc.N, kappa0 * tc.R)[n]
    a = tc.coeffs * inv * np.exp(-0.5j * np.pi * n)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    out = a @ dtn.mode_functions(tc.polarization, tc.N, phi)
    return out if out.size > 1 else complex(out[0])


def far_field(field: SolutionField, phi, N: int | None = None, M_samples: int | None = None):
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any((phi_arr <= 0) | (phi_arr >= np.pi)):
        raise ValueError("observation angle must lie in (0, pi)")
    return far_field_from_coeffs(scattered_coeffs(field, N, M_samples), field.scenario.kappa0, phi)


def rcs_linear(P, kappa0: float):
    return 4.0 / kappa0 * np.abs(P) ** 2


def rcs_db(P, kappa0: float):
    """10 log10(sigma / lambda) with sigma = 4 |P|^2 / kappa0."""
    lam = 2 * math.pi / kappa0
    with np.errstate(divide="ignore"):
        return 10 * np.log10(rcs_linear(P, kappa0) / lam)


def backscatter_angle(theta: float) -> float:
    return math.pi / 2 + theta


def backscatter(field: SolutionField, N: int | None = None, M_samples: int | None = None):
    """(P, sigma_linear, dB) at the backscatter direction of the field's scenario."""
    s = field.scenario
    P = far_field(field, backscatter_angle(s.theta), N, M_samples)
    return P, float(rcs_linear(P, s.kappa0)), float(rcs_db(P, s.kappa0))


@dataclass
class RcsCurve:
    axis: str
    values: np.ndarray
    rcs_db: np.ndarray
    polarization: str
    method: str

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        self.values = np.asarray(self.values, dtype=float)
        self.rcs_db = np.asarray(self.rcs_db, dtype=float)
        if len(self.values) > 1 and np.any(np.diff(self.values) <= 0):
            raise ValueError("axis values must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis", "value", "rcs_db", "method", "polarization"])
            for v, r in zip(self.values, self.rcs_db):
                w.writerow([self.axis, f"{v:.6f}", f"{r:.6f}", self.method, self.polarization])


def sweep_scenario(scenario: Scenario, axis: str, value: float) -> Scenario:
    if axis == "angle_deg":
        return scenario.replace(theta=math.radians(value))
    if axis == "frequency_ghz":
        return scenario.with_frequency(value * 1e9)
    raise ValueError(f"axis must be one of {AXES}")


def backscatter_rcs(scenario: Scenario, values, axis: str = "angle_deg", options: AdaptOptions | None = None) -> RcsCurve:
    """Adaptive solve and backscatter RCS at every sweep point."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sweep")
    options = options or AdaptOptions()
    out = []
    for v in values:
        res = adapt_solve(sweep_scenario(scenario, axis, v), options)
        out.append(backscatter(res.field)[2])
    return RcsCurve(axis, values, np.array(out), scenario.polarization, options.method)


def export_field(field: SolutionField, path, report=None) -> None:
    """VTK legacy file with re(u), im(u), |u| at vertices and optional eta_K."""
    u = field.vertex_values()
    cells = {"eta": np.asarray(report.eta)} if report is not None else None
    write_vtk(
        field.mesh,
        path,
        point_data={"re_u": u.real, "im_u": u.imag, "abs_u": np.abs(u)},
        cell_data=cells,
        title=f"{field.scenario.name} {field.method} total field",
    )
