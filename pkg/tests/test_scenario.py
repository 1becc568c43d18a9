import cmath
import json
import math

import numpy as np
import pytest

from cavity_scatter.scenario import (
    PRESETS,
    MaterialRegion,
    Scenario,
    ScenarioError,
    dump_scenario,
    kappa_from_frequency,
    load_scenario,
    preset,
    reference_derivatives,
    reference_field,
    wavenumber,
)


def test_example1_preset_parameters():
    s = load_scenario(dump_scenario(preset("example1_empty")))
    lam = 1 / 16
    assert s.kappa0 == pytest.approx(32 * math.pi)
    assert s.R == pytest.approx(lam / 2)
    assert s.rho == pytest.approx(3 * s.R)
    assert (s.sigma0, s.m_pml, s.polarization) == (20.0, 2, "TM")


def test_missing_polarization_names_the_field():
    doc = json.loads(dump_scenario(preset("example1_empty")))
    del doc["polarization"]
    with pytest.raises(ScenarioError, match="polarization"):
        load_scenario(json.dumps(doc))


def test_rho_equal_r_rejected():
    doc = json.loads(dump_scenario(preset("example1_empty")))
    doc["rho"] = doc["R"]
    with pytest.raises(ScenarioError, match="rho > R"):
        load_scenario(json.dumps(doc))


def test_parse_error_reports_location():
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario('{"polarization": "TM",\n "R": }')


def test_frequency_input_converts_to_kappa0():
    doc = json.loads(dump_scenario(preset("example4_sweep")))
    del doc["kappa0"]
    doc["frequency_hz"] = 12e9
    s = load_scenario(json.dumps(doc))
    assert s.kappa0 == pytest.approx(2 * math.pi * 12e9 / 299_792_458.0)
    assert s.kappa0 == pytest.approx(kappa_from_frequency(12e9))


def test_lossy_preset_geometry():
    s = preset("example1_lossy")
    lam = s.wavelength
    (mat,) = s.materials
    xs = [p[0] for p in mat.polygon]
    ys = [p[1] for p in mat.polygon]
    assert max(xs) - min(xs) == pytest.approx(lam)
    assert min(ys) == pytest.approx(-0.25 * lam)
    assert mat.epsilon_rel == 4 + 1j and mat.mu_rel == 1


def test_coated_preset_geometry():
    s = preset("example2_coated")
    lam = s.wavelength
    xs = [p[0] for p in s.cavity]
    ys = [p[1] for p in s.cavity]
    assert max(xs) - min(xs) == pytest.approx(2.4 * lam)
    assert -min(ys) == pytest.approx(1.6 * lam)
    for mat in s.materials:
        mx = [p[0] for p in mat.polygon]
        assert max(mx) - min(mx) == pytest.approx(0.024 * lam)
        assert mat.epsilon_rel == 12 + 0.144j and mat.mu_rel == 1.74 + 3.306j


def test_sweep_preset():
    s = preset("example4_sweep")
    xs = [p[0] for p in s.cavity]
    ys = [p[1] for p in s.cavity]
    assert s.polarization == "TE"
    assert s.theta == pytest.approx(4 * math.pi / 9)
    assert max(xs) - min(xs) == pytest.approx(0.025)
    assert -min(ys) == pytest.approx(0.015)


def test_unknown_preset():
    with pytest.raises(ScenarioError, match="example1_empty"):
        preset("nope")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_round_trip(name):
    s = preset(name)
    t = load_scenario(dump_scenario(s))
    assert t == s


def test_wavenumber_examples():
    s = preset("example1_lossy")
    assert wavenumber(s, [0.0, 0.01]) == s.kappa0
    inside = wavenumber(s, [0.0, -0.25 * s.wavelength / 2])
    assert inside == pytest.approx(32 * math.pi * cmath.sqrt(4 + 1j), rel=1e-14)
    c = preset("example2_coated")
    x = c.materials[0].polygon[0][0] + 1e-4
    k = wavenumber(c, [x, -0.01])
    assert k == pytest.approx(c.kappa0 * cmath.sqrt((12 + 0.144j) * (1.74 + 3.306j)), rel=1e-14)
    assert k.imag >= 0


def test_wavenumber_piecewise_constant():
    s = preset("example1_lossy")
    pts = np.array([[-0.01, -0.005], [0.02, -0.01]])
    k = wavenumber(s, pts)
    assert k[0] == k[1]


def test_passive_media_required():
    with pytest.raises(ScenarioError, match="passive"):
        MaterialRegion([(0, 0), (1, 0), (0, -1)], 4 - 1j, 1)


def test_material_in_pml_rejected():
    s = preset("example1_empty")
    far = [(0.0, 2 * s.R), (0.001, 2 * s.R), (0.0, 2 * s.R + 0.001)]
    with pytest.raises(ScenarioError, match="PML"):
        s.replace(materials=(MaterialRegion(far, 2.0, 1.0),))


def test_theta_bounds():
    with pytest.raises(ScenarioError, match="theta"):
        preset("example1_empty").replace(theta=math.pi / 2)


def test_aperture_on_ground_required():
    s = preset("example1_empty")
    with pytest.raises(ScenarioError, match="aperture"):
        s.replace(cavity=((-0.01, -0.001), (-0.01, -0.02), (0.01, -0.02), (0.01, -0.001)))


def test_reference_field_tm_vanishes_on_ground():
    s = preset("example1_empty", theta=0.3)
    x = np.linspace(-1, 1, 11)
    u, _ = reference_field(s, np.stack([x, 0 * x], 1))
    assert np.max(np.abs(u)) == 0.0


def test_reference_field_te_normal_derivative_vanishes():
    s = preset("example4_sweep")
    x = np.linspace(-1, 1, 11)
    _, g = reference_field(s, np.stack([x, 0 * x], 1))
    assert np.max(np.abs(g[:, 1])) <= 1e-12 * s.kappa0


def test_reference_field_normal_incidence():
    s = preset("example1_empty", theta=0.0)
    x2 = 0.0123
    u, _ = reference_field(s, [0.0, x2])
    assert u == pytest.approx(-2j * math.sin(s.kappa0 * x2), abs=1e-14)


def test_reference_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    for pol in ("TM", "TE"):
        s = preset("example1_empty", theta=0.4).replace(polarization=pol)
        h = 1e-6 * s.wavelength
        pts = rng.uniform([-0.1, 0], [0.1, 0.1], size=(100, 2))
        _, g = reference_field(s, pts)
        fd = np.stack(
            [
                (reference_derivatives(s, pts + h * e)[0] - reference_derivatives(s, pts - h * e)[0]) / (2 * h)
                for e in np.eye(2)
            ],
            axis=1,
        )
        rel = np.linalg.norm(fd - g, axis=1) / np.linalg.norm(g, axis=1)
        assert rel.max() <= 1e-6
