"""Hamiltonian families, numerical Legendre transform, control bounds."""

import numpy as np
import pytest

from obliquehj import (anisotropic, control_bound, eikonal, kinetic,
                       lagrangian, lagrangian_batch, mechanical)
from obliquehj.hamiltonian import INFINITE, legendre_truncated, validate_model


def test_kinetic_lagrangian_matches_closed_form():
    model = kinetic()
    x = np.zeros(2)
    for xi in ([0.0, 0.0], [1.0, 0.0], [0.3, -0.7], [2.0, 2.0]):
        xi = np.asarray(xi)
        want = 0.5 * np.sum(xi ** 2)
        assert lagrangian(model, x, xi) == pytest.approx(want, abs=1e-6)


def test_mechanical_lagrangian_adds_potential():
    V = lambda x: np.sum(x ** 2, axis=-1)
    model = mechanical(V)
    x = np.array([0.5, 0.0])
    xi = np.array([1.0, 1.0])
    want = 0.5 * 2.0 + 0.25
    assert lagrangian(model, x, xi) == pytest.approx(want, abs=1e-6)
    assert model.H_fn(x, np.zeros(2)) == pytest.approx(-0.25)


def test_eikonal_lagrangian_is_indicator_plus_rate():
    model = eikonal(lambda x: 2.0 + 0.0 * x[..., 0])
    x = np.zeros(2)
    assert lagrangian(model, x, np.array([0.5, 0.0])) == pytest.approx(
        2.0, abs=1e-4)
    assert lagrangian(model, x, np.array([0.99, 0.0])) == pytest.approx(
        2.0, abs=1e-4)
    assert lagrangian(model, x, np.array([1.6, 0.0])) == INFINITE


def test_anisotropic_lagrangian_uses_inverse_metric():
    M = np.array([[2.0, 0.0], [0.0, 0.5]])
    model = anisotropic(M)
    x = np.zeros(2)
    xi = np.array([1.0, 1.0])
    want = 0.5 * float(xi @ np.linalg.solve(M, xi))
    assert lagrangian(model, x, xi) == pytest.approx(want, abs=1e-5)


def test_shifted_model_shifts_level_and_lagrangian():
    model = kinetic().shifted(1.0)          # effective H = |p|^2/2 - 1
    x = np.zeros(2)
    # H_fn stays the raw Hamiltonian; the shift lives in shift_a
    assert model.shift_a == pytest.approx(1.0)
    eff = model.H_fn(x, np.array([1.0, 0.0])) - model.shift_a
    assert eff == pytest.approx(-0.5)
    # L_eff = L + shift, so rest costs 1 per unit time
    assert lagrangian(model, x, np.zeros(2)) == pytest.approx(1.0, abs=1e-6)


def test_legendre_truncated_matches_quadratic_conjugate():
    model = kinetic()
    x = np.zeros(2)
    xi = np.array([0.7, -0.2])
    # sup_{|p| <= m} xi . p - |p|^2 / 2 = |xi|^2 / 2 once m >= |xi|
    val, p_star = legendre_truncated(model, x, xi, m=4.0)
    assert val == pytest.approx(0.5 * np.sum(xi ** 2), abs=1e-6)
    assert p_star == pytest.approx(xi, abs=1e-4)
    # tight truncation caps the slope: value m |xi| - m^2 / 2
    val_small, p_small = legendre_truncated(model, x, xi, m=0.25)
    want = 0.25 * np.linalg.norm(xi) - 0.25 ** 2 / 2
    assert val_small == pytest.approx(want, abs=1e-6)
    assert np.linalg.norm(p_small) <= 0.25 + 1e-9


def test_lagrangian_batch_agrees_with_scalar_calls():
    model = mechanical(lambda x: np.sum(x ** 2, axis=-1))
    rng = np.random.default_rng(11)
    x = rng.uniform(-0.7, 0.7, size=(12, 2))
    xi = rng.uniform(-1.5, 1.5, size=(12, 2))
    batch = lagrangian_batch(model, x, xi)
    single = np.array([lagrangian(model, x[i], xi[i]) for i in range(12)])
    assert np.max(np.abs(batch - single)) <= 1e-6


def test_control_bound_grows_with_slope_radius():
    model = kinetic()
    pts = np.zeros((1, 2))
    b1 = control_bound(model, 1.0, pts)
    b2 = control_bound(model, 2.0, pts)
    assert b2 > b1 >= 1.0
    # a-priori bound (2 C1 + 1) / R with C1 = max |H| over |p| <= 2R;
    # for H = |p|^2/2 that gives (4 R^2 + 1) / R
    assert b1 == pytest.approx(5.0, rel=1e-6)
    assert b2 == pytest.approx(8.5, rel=1e-6)


def test_validate_model_passes_builtin_families():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.8, 0.8, size=(8, 2))
    for model in (kinetic(), mechanical(lambda x: np.sum(x ** 2, -1)),
                  eikonal(lambda x: 1.0 + 0.2 * x[..., 0] ** 2),
                  anisotropic(np.diag([1.5, 0.8]))):
        report = validate_model(model, pts, rng=rng)
        assert report["convex_ok"], report
        assert report["coercive_ok"], report
