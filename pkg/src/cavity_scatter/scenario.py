"""Problem description for the open-cavity scattering solver.

A :class:`Scenario` bundles the cavity geometry, the material fillings, the
incident plane wave and the PML parameters.  Geometry is given in meters and
angles in radians; the free-space wavenumber ``kappa0`` is the canonical
frequency parameter.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
import shapely.geometry as sg

SPEED_OF_LIGHT = 299_792_458.0

POLARIZATIONS = ("TM", "TE")

PRESETS = (
    "example1_empty",
    "example1_lossy",
    "example2_coated",
    "example3_humps",
    "example4_sweep",
)


class ScenarioError(ValueError):
    """Raised for malformed scenario documents or violated invariants."""


@dataclass(frozen=True)
class MaterialRegion:
    polygon: tuple[tuple[float, float], ...]
    epsilon_rel: complex = 1.0 + 0.0j
    mu_rel: complex = 1.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "polygon", _as_polygon(self.polygon, "materials.polygon"))
        object.__setattr__(self, "epsilon_rel", complex(self.epsilon_rel))
        object.__setattr__(self, "mu_rel", complex(self.mu_rel))
        if self.epsilon_rel.imag < 0 or self.mu_rel.imag < 0:
            raise ScenarioError("materials: Im(epsilon_rel) and Im(mu_rel) must be >= 0 (passive media)")

    @property
    def index_squared(self) -> complex:
        return self.epsilon_rel * self.mu_rel


@dataclass(frozen=True)
class Scenario:
    """Full scattering problem.

    ``cavity`` is the ordered vertex list of the cavity cross section; its two
    vertices on ``x2 = 0`` are the aperture endpoints.  ``cavity=None`` gives a
    flat ground plane (no cavity), used for manufactured checks.
    """

    polarization: str
    kappa0: float
    theta: float
    R: float
    rho: float
    sigma0: float = 20.0
    m_pml: int = 2
    fem_degree: int = 1
    n_arc: int = 64
    cavity: tuple[tuple[float, float], ...] | None = None
    protrusions: tuple[tuple[tuple[float, float], ...], ...] = ()
    materials: tuple[MaterialRegion, ...] = ()
    frequency_hz: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.cavity is not None:
            object.__setattr__(self, "cavity", _as_polygon(self.cavity, "cavity_polygon"))
        object.__setattr__(
            self, "protrusions", tuple(_as_polygon(p, "protrusions") for p in self.protrusions)
        )
        object.__setattr__(self, "materials", tuple(self.materials))
        self.validate()

    # derived quantities -------------------------------------------------
    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.kappa0

    @property
    def k1(self) -> float:
        return self.kappa0 * math.sin(self.theta)

    @property
    def k2(self) -> float:
        return self.kappa0 * math.cos(self.theta)

    @property
    def aperture(self) -> tuple[float, float] | None:
        if self.cavity is None:
            return None
        xs = [x for x, y in self.cavity if y == 0.0]
        return min(xs), max(xs)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_frequency(self, frequency_hz: float) -> "Scenario":
        return self.replace(kappa0=kappa_from_frequency(frequency_hz), frequency_hz=frequency_hz)

    # validation ---------------------------------------------------------
    def validate(self) -> None:
        if self.polarization not in POLARIZATIONS:
            raise ScenarioError(f"polarization must be one of {POLARIZATIONS}, got {self.polarization!r}")
        if not (self.kappa0 > 0 and math.isfinite(self.kappa0)):
            raise ScenarioError("kappa0 must be a positive finite number")
        if not (-math.pi / 2 < self.theta < math.pi / 2):
            raise ScenarioError("theta must lie in (-pi/2, pi/2)")
        if not self.R > 0:
            raise ScenarioError("R > 0 violated")
        if not self.rho > self.R:
            raise ScenarioError("rho > R violated")
        if not self.sigma0 > 0:
            raise ScenarioError("sigma0 > 0 violated")
        if int(self.m_pml) != self.m_pml or self.m_pml < 1:
            raise ScenarioError("m_pml must be an integer >= 1")
        if self.fem_degree not in (1, 2):
            raise ScenarioError("fem_degree must be 1 or 2")
        if self.n_arc < 4:
            raise ScenarioError("n_arc must be >= 4")

        halfdisc = _half_disc(self.R, self.n_arc)
        if self.cavity is not None:
            cav = sg.Polygon(self.cavity)
            if not cav.is_valid or cav.area <= 0:
                raise ScenarioError("cavity_polygon is not a simple polygon")
            on_ground = [p for p in self.cavity if p[1] == 0.0]
            if len(on_ground) != 2:
                raise ScenarioError("cavity aperture must have exactly two endpoints on x2 = 0")
            if any(p[1] > 0 for p in self.cavity):
                raise ScenarioError("cavity polygon must lie in x2 <= 0")
            a, b = self.aperture
            if a < -self.R * (1 + 1e-12) or b > self.R * (1 + 1e-12):
                raise ScenarioError("cavity aperture must lie inside [-R, R]")
        inner = self._inner_region()
        tol = 1e-9 * self.R
        for poly in self.protrusions:
            p = sg.Polygon(poly)
            if not p.is_valid:
                raise ScenarioError("protrusion polygon is not simple")
            upper = p.intersection(sg.box(-2 * self.rho, 0.0, 2 * self.rho, 2 * self.rho))
            if not upper.is_empty and not halfdisc.buffer(tol).contains(upper):
                raise ScenarioError("protrusions must lie inside the half-disc of radius R")
        for mat in self.materials:
            p = sg.Polygon(mat.polygon)
            if not p.is_valid:
                raise ScenarioError("material polygon is not simple")
            if not inner.buffer(tol).contains(p):
                raise ScenarioError(
                    "material regions must lie inside B_R^+ union D (no material in the PML annulus)"
                )
        for i, m1 in enumerate(self.materials):
            for m2 in self.materials[i + 1:]:
                if sg.Polygon(m1.polygon).intersection(sg.Polygon(m2.polygon)).area > tol * tol:
                    raise ScenarioError("material regions must be pairwise disjoint")

    def _inner_region(self):
        region = _half_disc(self.R, self.n_arc)
        if self.cavity is not None:
            region = region.union(sg.Polygon(self.cavity))
        return region


def _half_disc(radius: float, n_arc: int) -> sg.Polygon:
    return sg.Polygon(arc_points(radius, n_arc))


def arc_points(radius: float, n_arc: int) -> np.ndarray:
    """Vertices of the n_arc-segment polyline on the upper semicircle, from phi=0 to pi."""
    phi = np.linspace(0.0, math.pi, n_arc + 1)
    pts = radius * np.column_stack([np.cos(phi), np.sin(phi)])
    pts[0] = (radius, 0.0)
    pts[-1] = (-radius, 0.0)
    return pts


def _as_polygon(points, where: str) -> tuple[tuple[float, float], ...]:
    try:
        poly = tuple((float(p[0]), float(p[1])) for p in points)
    except (TypeError, IndexError, ValueError) as exc:
        raise ScenarioError(f"{where}: expected an array of [x1, x2] pairs") from exc
    if len(poly) < 3:
        raise ScenarioError(f"{where}: a polygon needs at least 3 vertices")
    return poly


def kappa_from_frequency(frequency_hz: float) -> float:
    return 2.0 * math.pi * frequency_hz / SPEED_OF_LIGHT


# ---------------------------------------------------------------------------
# coefficient and reference-field evaluation


def wavenumber(scenario: Scenario, point) -> complex | np.ndarray:
    """kappa(x) = kappa0 * sqrt(eps_rel * mu_rel) with the principal root."""
    pts = np.asarray(point, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    kappa = np.full(len(pts), scenario.kappa0, dtype=complex)
    for mat in scenario.materials:
        inside = points_in_polygon(pts, mat.polygon)
        kappa[inside] = scenario.kappa0 * np.sqrt(mat.index_squared)
    return complex(kappa[0]) if scalar else kappa


def points_in_polygon(pts: np.ndarray, polygon) -> np.ndarray:
    import shapely

    poly = sg.Polygon(polygon)
    return shapely.covers(poly, shapely.points(pts[:, 0], pts[:, 1]))


def reference_derivatives(scenario: Scenario, pts):
    """Value, gradient and Hessian of u_ref = u_inc + u_refl at ``pts`` (..., 2)."""
    pts = np.asarray(pts, dtype=float)
    k1, k2 = scenario.k1, scenario.k2
    x1, x2 = pts[..., 0], pts[..., 1]
    sign = -1.0 if scenario.polarization == "TM" else 1.0
    ui = np.exp(1j * (k1 * x1 - k2 * x2))
    ur = sign * np.exp(1j * (k1 * x1 + k2 * x2))
    ki = np.array([k1, -k2])
    kr = np.array([k1, k2])
    value = ui + ur
    grad = 1j * (ui[..., None] * ki + ur[..., None] * kr)
    hess = -(ui[..., None, None] * np.outer(ki, ki) + ur[..., None, None] * np.outer(kr, kr))
    return value, grad, hess


def reference_field(scenario: Scenario, point):
    """Analytic reference field and its gradient.

    Returns ``(value, gradient)``; scalar inputs give a complex and a
    length-2 complex array.
    """
    value, grad, _ = reference_derivatives(scenario, point)
    if np.ndim(value) == 0:
        return complex(value), grad
    return value, grad


# ---------------------------------------------------------------------------
# document I/O

_REQUIRED = ("polarization", "theta_rad", "R", "rho")


def load_scenario(text: str) -> Scenario:
    """Parse a JSON scenario document into a validated :class:`Scenario`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    for key in _REQUIRED:
        if key not in doc:
            raise ScenarioError(f"missing required field {key!r}")
    if "kappa0" not in doc and "frequency_hz" not in doc:
        raise ScenarioError("missing required field 'kappa0' (or 'frequency_hz')")

    def number(key, default=None, kind=float):
        if key not in doc:
            if default is None:
                raise ScenarioError(f"missing required field {key!r}")
            return default
        try:
            return kind(doc[key])
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"field {key!r}: expected a number, got {doc[key]!r}") from exc

    frequency = doc.get("frequency_hz")
    if frequency is not None:
        frequency = number("frequency_hz")
    kappa0 = number("kappa0") if "kappa0" in doc else kappa_from_frequency(frequency)
    materials = []
    for i, m in enumerate(doc.get("materials", [])):
        try:
            materials.append(
                MaterialRegion(
                    polygon=m["polygon"],
                    epsilon_rel=complex(m.get("eps_re", 1.0), m.get("eps_im", 0.0)),
                    mu_rel=complex(m.get("mu_re", 1.0), m.get("mu_im", 0.0)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"materials[{i}]: expected {{polygon, eps_re, eps_im, mu_re, mu_im}}") from exc
    return Scenario(
        polarization=str(doc["polarization"]),
        kappa0=kappa0,
        theta=number("theta_rad"),
        R=number("R"),
        rho=number("rho"),
        sigma0=number("sigma0", 20.0),
        m_pml=number("m_pml", 2, int),
        fem_degree=number("fem_degree", 1, int),
        n_arc=number("n_arc", 64, int),
        cavity=doc.get("cavity_polygon"),
        protrusions=tuple(doc.get("protrusions", ())),
        materials=tuple(materials),
        frequency_hz=frequency,
        name=str(doc.get("name", "custom")),
    )


def scenario_to_dict(s: Scenario) -> dict:
    doc = {
        "name": s.name,
        "polarization": s.polarization,
        "kappa0": s.kappa0,
        "theta_rad": s.theta,
        "cavity_polygon": [list(p) for p in s.cavity] if s.cavity is not None else None,
        "protrusions": [[list(p) for p in poly] for poly in s.protrusions],
        "materials": [
            {
                "polygon": [list(p) for p in m.polygon],
                "eps_re": m.epsilon_rel.real,
                "eps_im": m.epsilon_rel.imag,
                "mu_re": m.mu_rel.real,
                "mu_im": m.mu_rel.imag,
            }
            for m in s.materials
        ],
        "R": s.R,
        "rho": s.rho,
        "sigma0": s.sigma0,
        "m_pml": s.m_pml,
        "fem_degree": s.fem_degree,
        "n_arc": s.n_arc,
    }
    if s.cavity is None:
        del doc["cavity_polygon"]
    if s.frequency_hz is not None:
        doc["frequency_hz"] = s.frequency_hz
    return doc


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)


# ---------------------------------------------------------------------------
# benchmark presets


def _rectangle(x0, x1, y0, y1) -> list[tuple[float, float]]:
    # counter-clockwise, aperture edge (y1 = 0) last
    return [(x0, y1), (x0, y0), (x1, y0), (x1, y1)]


def preset(name: str, theta: float | None = None) -> Scenario:
    """Benchmark configurations of the numerical experiments.

    All presets use rho = 3R, sigma0 = 20, m = 2 and linear elements.  The
    half-disc radius equals half the aperture width.
    """
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    common = dict(sigma0=20.0, m_pml=2, fem_degree=1, n_arc=64, name=name)
    if theta is None:
        theta = 4 * math.pi / 9 if name == "example4_sweep" else math.pi / 4
    if name.startswith("example1"):
        kappa0 = 32 * math.pi
        lam = 2 * math.pi / kappa0
        cavity = _rectangle(-lam / 2, lam / 2, -0.25 * lam, 0.0)
        materials = ()
        if name == "example1_lossy":
            materials = (MaterialRegion(cavity, 4 + 1j, 1.0),)
        R = lam / 2
        return Scenario("TM", kappa0, theta, R, 3 * R, cavity=cavity, materials=materials, **common)
    if name == "example2_coated":
        kappa0 = 32 * math.pi
        lam = 2 * math.pi / kappa0
        w, d, t = 2.4 * lam, 1.6 * lam, 0.024 * lam
        cavity = _rectangle(-w / 2, w / 2, -d, 0.0)
        eps, mu = 12 + 0.144j, 1.74 + 3.306j
        materials = (
            MaterialRegion(_rectangle(-w / 2, -w / 2 + t, -d, 0.0), eps, mu),
            MaterialRegion(_rectangle(w / 2 - t, w / 2, -d, 0.0), eps, mu),
        )
        R = w / 2
        return Scenario("TM", kappa0, theta, R, 3 * R, cavity=cavity, materials=materials, **common)
    if name == "example3_humps":
        kappa0 = 32 * math.pi
        lam = 2 * math.pi / kappa0
        w, d = 1.2 * lam, 0.8 * lam
        hw = lam / 20
        cavity = _rectangle(-w / 2, w / 2, -d, 0.0)
        humps = (
            tuple(_rectangle(-0.15 * lam - hw / 2, -0.15 * lam + hw / 2, -d, -d + 16 / 15 * lam)),
            tuple(_rectangle(0.15 * lam - hw / 2, 0.15 * lam + hw / 2, -d, -d + 8 / 15 * lam)),
        )
        R = w / 2
        return Scenario("TM", kappa0, theta, R, 3 * R, cavity=cavity, protrusions=humps, **common)
    # example4_sweep
    w, d = 0.025, 0.015
    frequency = 10e9
    R = w / 2
    return Scenario(
        "TE",
        kappa_from_frequency(frequency),
        theta,
        R=R,
        rho=3 * R,
        cavity=_rectangle(-w / 2, w / 2, -d, 0.0),
        frequency_hz=frequency,
        **common,
    )


def flat_ground(polarization: str, kappa0: float, theta: float, fem_degree: int = 1, **kw) -> Scenario:
    """Ground plane without a cavity; the exact total field is u_ref."""
    lam = 2 * math.pi / kappa0
    R = kw.pop("R", lam / 2)
    return Scenario(
        polarization,
        kappa0,
        theta,
        R,
        kw.pop("rho", 3 * R),
        fem_degree=fem_degree,
        name="flat_ground",
        **kw,
    )
