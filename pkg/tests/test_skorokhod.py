"""Reflected-path solver: pushes along the boundary and triple validation."""

import numpy as np
import pytest

from obliquehj.geometry import disk, ellipse, rotated_normal
from obliquehj.skorokhod import (
    PenaltyScheme,
    SkorokhodTriple,
    extract_triple,
    solve_penalized,
    solve_reflected,
    validate_triple,
)


def test_stationary_push_stays_put(unit_disk, normal_field):
    x0 = np.array([1.0, 0.0])
    v = np.array([1.0, 0.0])
    tri = solve_reflected(unit_disk, normal_field, x0, v, T=2.0, tol=1e-3)
    assert np.max(np.abs(tri.eta - x0)) <= 1e-3
    # after the initial relaxation layer the multiplier rate locks to v . nu = 1
    late = tri.t >= 0.1
    assert np.max(np.abs(tri.l[late] - 1.0)) <= 0.05
    rep = validate_triple(unit_disk, normal_field, tri)
    assert rep.ok, rep.failures


def test_tangential_push_follows_projected_ode(unit_disk, normal_field):
    # v = (0,1) at (1,0): theta' = cos(theta), so theta(t) = gd(t) and
    # eta = (sech t, tanh t) with multiplier rate l = tanh t
    x0 = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    T = float(np.pi)
    tri = solve_reflected(unit_disk, normal_field, x0, v, T=T, tol=1e-3)
    eta_exact = np.stack([1.0 / np.cosh(tri.t), np.tanh(tri.t)], axis=1)
    assert np.max(np.linalg.norm(tri.eta - eta_exact, axis=1)) <= 1e-2
    assert np.max(np.abs(tri.l - np.tanh(tri.t))) <= 0.05 * np.tanh(T)
    rep = validate_triple(unit_disk, normal_field, tri)
    assert rep.ok, rep.failures


def test_epsilon_halving_contracts(unit_disk, normal_field):
    x0 = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    T = float(np.pi)
    errs = []
    for k in range(4):
        eps = 0.05 / 2 ** k
        scheme = PenaltyScheme(epsilon=eps, cap_delta=0.5, h_ode=eps / 8)
        path = solve_penalized(unit_disk, normal_field, x0, v, T, scheme)
        tri = extract_triple(unit_disk, normal_field, path)
        eta_exact = np.stack([1.0 / np.cosh(tri.t), np.tanh(tri.t)], axis=1)
        errs.append(np.max(np.linalg.norm(tri.eta - eta_exact, axis=1)))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all(ratios <= 0.8), ratios


def test_random_pushes_satisfy_speed_bound():
    rng = np.random.default_rng(7)
    dom = ellipse((1.2, 0.8))
    for _ in range(6):
        theta = float(rng.uniform(-50.0, 50.0))
        fld = rotated_normal(dom, theta_deg=theta)
        ang = float(rng.uniform(0.0, 2.0 * np.pi))
        x0 = np.array([1.2 * np.cos(ang), 0.8 * np.sin(ang)])
        v = rng.uniform(-1.0, 1.0, size=2)
        tri = solve_reflected(dom, fld, x0, v, T=1.0, tol=2e-3)
        rep = validate_triple(dom, fld, tri)
        assert rep.ok, rep.failures
        limit = 1.1 * (1.0 + fld.gamma_sup / fld.delta0)
        assert rep.bound_limit == pytest.approx(limit, rel=1e-9)
        assert rep.bound_ratio <= rep.bound_limit


def test_validate_triple_accepts_exact_interior_path(unit_disk, normal_field):
    t = np.linspace(0.0, 1.0, 201)
    v = np.array([0.3, 0.1])
    eta = t[:, None] * v[None, :]
    tri = SkorokhodTriple(
        t=t,
        eta=eta,
        v=np.tile(v, (t.size - 1, 1)),
        l=np.zeros_like(t),
        residuals=None,
    )
    rep = validate_triple(unit_disk, normal_field, tri)
    assert rep.ok, rep.failures
    assert rep.complementarity <= 1e-12


def test_validate_triple_rejects_interior_pushing(unit_disk, normal_field):
    t = np.linspace(0.0, 1.0, 201)
    v = np.array([0.3, 0.1])
    eta = t[:, None] * v[None, :]
    tri = SkorokhodTriple(
        t=t,
        eta=eta,
        v=np.tile(v, (t.size - 1, 1)),
        l=np.full_like(t, 0.5),
        residuals=None,
    )
    rep = validate_triple(unit_disk, normal_field, tri)
    assert not rep.ok
    assert rep.failures


def test_validate_triple_handles_nonuniform_times(unit_disk, normal_field):
    # exact gudermannian triple sampled on a stretched (non-uniform) time grid
    s = np.linspace(0.0, 1.0, 400)
    t = np.pi * np.sinh(2.0 * s) / np.sinh(2.0)
    eta = np.stack([1.0 / np.cosh(t), np.tanh(t)], axis=1)
    tri = SkorokhodTriple(
        t=t,
        eta=eta,
        v=np.tile([0.0, 1.0], (t.size - 1, 1)),
        l=np.tanh(t),
        residuals=None,
    )
    rep = validate_triple(unit_disk, normal_field, tri, tol_ode=5e-2)
    assert rep.ok, rep.failures


def test_extract_triple_multiplier_is_nonnegative(unit_disk, normal_field):
    scheme = PenaltyScheme(epsilon=0.02, cap_delta=0.5, h_ode=0.0025)
    path = solve_penalized(
        unit_disk, normal_field, np.array([1.0, 0.0]), np.array([0.5, 0.8]),
        T=1.5, scheme=scheme,
    )
    tri = extract_triple(unit_disk, normal_field, path)
    assert tri.t[0] == 0.0 and tri.t[-1] == pytest.approx(1.5)
    assert np.all(tri.l >= -1e-12)
    assert np.all(np.diff(tri.t) > 0)
