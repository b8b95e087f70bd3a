"""Implicit domains, projections, and oblique boundary fields."""

import numpy as np
import pytest

from obliquehj import (GeometryError, disk, ellipse, from_psi, interval,
                       project_to_boundary, project_to_closure,
                       rotated_normal, rounded_box)
from obliquehj.geometry import ObliquenessViolated, validate_domain


def test_disk_psi_signs():
    dom = disk()
    assert dom.psi(np.array([0.0, 0.0])) < 0
    assert dom.psi(np.array([2.0, 0.0])) > 0
    assert abs(dom.psi(np.array([1.0, 0.0]))) <= dom.boundary_tol
    assert dom.dim == 2


def test_disk_projection_matches_radial_formula():
    dom = disk()
    x = np.array([1.5, 1.5])
    proj = project_to_boundary(dom, x)
    assert np.linalg.norm(proj - x / np.linalg.norm(x)) <= 1e-5


def test_projection_idempotent_on_random_points():
    dom = ellipse(semi_axes=(1.2, 0.7))
    rng = np.random.default_rng(3)
    pts = rng.uniform(-2.0, 2.0, size=(40, 2))
    proj = project_to_boundary(dom, pts)
    again = project_to_boundary(dom, proj)
    assert np.max(np.linalg.norm(again - proj, axis=-1)) <= 1e-10 * dom.diameter
    assert np.max(np.abs(dom.psi(proj))) <= 1e-8 * dom.psi_scale


def test_project_to_closure_leaves_inside_points_alone():
    dom = disk()
    inside = np.array([[0.3, -0.2], [0.0, 0.0], [0.5, 0.5]])
    moved = project_to_closure(dom, inside)
    assert np.max(np.linalg.norm(moved - inside, axis=-1)) == 0.0
    outside = np.array([2.0, 0.0])
    pulled = project_to_closure(dom, outside)
    assert abs(np.linalg.norm(pulled) - 1.0) <= 1e-10


def test_rounded_box_and_interval_basic():
    box = rounded_box(half_widths=(1.0, 0.5))
    assert box.psi(np.array([0.0, 0.0])) < 0
    assert box.psi(np.array([1.2, 0.0])) > 0
    seg = interval(-1.0, 2.0)
    assert seg.dim == 1
    assert seg.psi(np.array([0.5])) < 0
    assert seg.psi(np.array([2.5])) > 0


def test_from_psi_custom_domain_validates():
    dom = from_psi(lambda x: np.sum(x ** 4, axis=-1) - 1.0, dim=2,
                   bounding_box=[[-1.2, 1.2], [-1.2, 1.2]])
    report = validate_domain(dom)
    assert report.ok, report.failures


def test_rotated_normal_tilts_by_theta():
    dom = disk()
    for theta in (0.0, 30.0, -45.0):
        fld = rotated_normal(dom, theta_deg=theta, g=0.0)
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        gam = fld.gamma(x)
        nu = x  # unit outward normal of the unit circle
        dots = np.sum(gam * nu, axis=-1)
        assert np.allclose(dots, np.cos(np.radians(theta)), atol=1e-12)
        assert np.allclose(np.linalg.norm(gam, axis=-1), 1.0, atol=1e-12)
        assert fld.delta0 == pytest.approx(np.cos(np.radians(theta)), abs=1e-6)


def test_rotated_normal_rejects_tangential_field():
    dom = disk()
    with pytest.raises((ObliquenessViolated, GeometryError)):
        rotated_normal(dom, theta_deg=90.0, g=0.0)


def test_oblique_field_accepts_expressions_and_constants():
    dom = disk()
    fld_const = rotated_normal(dom, 0.0, g=0.25)
    fld_call = rotated_normal(dom, 0.0, g=lambda x: 0.25 * np.ones(x.shape[:-1]))
    x = np.array([[1.0, 0.0]])
    assert fld_const.g(x)[0] == pytest.approx(0.25)
    assert fld_call.g(x)[0] == pytest.approx(0.25)
