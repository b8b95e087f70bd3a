"""Problem-spec parsing, validation, emission, and builder helpers."""

import json

import numpy as np
import pytest

from obliquehj.spec_file import (
    SpecError,
    build_domain,
    build_field,
    build_grid,
    build_model,
    emit_spec,
    parse_spec,
)

FULL_TEXT = """
# mechanical single-well on the disk
domain {
  family = disk
  radius = 1.0
}
hamiltonian {
  family = mechanical
  V = x^2 + y^2
}
oblique {
  theta = 15.0
  g = 0.1
}
grid {
  h = 0.0625
}
run {
  seed = 3
  T = 6.0
  tol_c = 0.02
}
output {
  directory = out
  formats = csv, json
}
"""


def test_full_spec_parses():
    spec = parse_spec(FULL_TEXT)
    assert spec.domain == {"family": "disk", "radius": 1.0}
    assert spec.hamiltonian == {"family": "mechanical", "V": "x^2 + y^2"}
    assert spec.oblique == {"theta": 15.0, "g": 0.1}
    assert spec.grid == {"h": 0.0625, "dt": None, "T": 4.0}
    assert spec.run["seed"] == 3
    assert spec.output == {"directory": "out", "formats": ["csv", "json"]}


def test_defaults_from_empty_text():
    spec = parse_spec("")
    assert spec.domain == {"family": "disk"}
    assert spec.hamiltonian == {"family": "kinetic"}
    assert spec.oblique == {"theta": 0.0, "g": 0.0}
    assert spec.grid == {"h": 1.0 / 16, "dt": None, "T": 4.0}
    assert spec.output["formats"] == ["csv", "json"]


def test_emit_round_trip():
    spec = parse_spec(FULL_TEXT)
    assert parse_spec(emit_spec(spec)) == spec


def test_json_alternative_encoding():
    blob = json.dumps({
        "domain": {"family": "ellipse", "semi_axes": [1.2, 0.8]},
        "oblique": {"theta": "normal"},
    })
    spec = parse_spec(blob)
    assert spec.domain["family"] == "ellipse"
    assert spec.oblique["theta"] == 0.0


def test_theta_normal_and_obliqueness_limit():
    spec = parse_spec("oblique {\n  theta = normal\n}")
    assert spec.oblique["theta"] == 0.0
    with pytest.raises(SpecError, match="obliqueness"):
        parse_spec("oblique {\n  theta = 95\n}")


def test_zero_tolerance_is_allowed():
    spec = parse_spec("run {\n  tol_c = 0\n}")
    assert spec.run["tol_c"] == 0
    with pytest.raises(SpecError, match="nonnegative"):
        parse_spec("run {\n  tol_c = -0.5\n}")


@pytest.mark.parametrize("text,match", [
    ("bogus {\n}", "unknown block"),
    ("domain {\n  family = torus\n}", "unknown family"),
    ("domain {\n  family = disk\n}\ndomain {\n  family = disk\n}",
     "duplicate"),
    ("domain {\n  inner {\n}\n}", "nested"),
    ("domain {\n  family = disk", "not closed"),
    ("domain {\n  family = ellipse\n  a = 1.2\n}", "unknown keys"),
    ("hamiltonian {\n  family = kinetic\n  V = x\n}", "unknown keys"),
    ("hamiltonian {\n  family = mechanical\n}", "needs V"),
    ("hamiltonian {\n  family = eikonal\n}", "needs f"),
    ("hamiltonian {\n  family = mechanical\n  V = q + 1\n}", "unknown name"),
    ("grid {\n  h = -0.1\n}", "positive"),
    ("output {\n  formats = yaml\n}", "unknown format"),
])
def test_error_catalogue(text, match):
    with pytest.raises(SpecError, match=match):
        parse_spec(text)


def test_errors_name_the_offending_field():
    with pytest.raises(SpecError, match="hamiltonian.V"):
        parse_spec("hamiltonian {\n  family = mechanical\n}")
    with pytest.raises(SpecError, match="line 2"):
        parse_spec("domain {\n  what is this\n}")


def test_builders_assemble_problem():
    text = """
domain {
  family = ellipse
  semi_axes = 1.2, 0.8
}
hamiltonian {
  family = mechanical
  V = x^2 + y^2
}
oblique {
  theta = 20.0
  g = 0.1 + x^2
}
grid {
  h = 0.125
}
"""
    spec = parse_spec(text)
    dom = build_domain(spec)
    model = build_model(spec)
    fld = build_field(spec, dom)
    grid = build_grid(spec, dom, fld)
    assert dom.dim == 2
    assert dom.psi(np.array([1.2, 0.0])) == pytest.approx(0.0, abs=1e-12)
    # H = |p|^2/2 - V at the origin with p = e1
    assert model.H_fn(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(0.5)
    assert fld.theta_deg == 20.0
    assert fld.g(np.array([[0.5, 0.0]]))[0] == pytest.approx(0.35)
    assert grid.h == 0.125
    assert len(grid.points) > 100


def test_anisotropic_and_shift_builders():
    text = """
hamiltonian {
  family = anisotropic
  m11 = 1.5
  m22 = 0.8
  m12 = 0.1
  shift = 1.0
}
"""
    spec = parse_spec(text)
    model = build_model(spec)
    assert model.shift_a == pytest.approx(1.0)
    p = np.array([1.0, 0.0])
    # H = <M p, p> / 2 with M = [[1.5, 0.1], [0.1, 0.8]]
    assert model.H_fn(np.zeros(2), p) == pytest.approx(0.75)


def test_interval_domain_builder():
    spec = parse_spec("domain {\n  family = interval\n  lo = -2\n  hi = 3\n}")
    dom = build_domain(spec)
    assert dom.dim == 1
    assert dom.psi(np.array([3.0])) == pytest.approx(0.0, abs=1e-12)
    assert dom.psi(np.array([0.5])) < 0
