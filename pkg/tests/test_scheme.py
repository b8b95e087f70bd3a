"""Semi-Lagrangian Cauchy solver: exactness, barriers, DPP, ordering."""

import numpy as np
import pytest

from obliquehj.grid import ControlSet, Grid
from obliquehj.hamiltonian import kinetic, mechanical
from obliquehj.scheme import check_dpp, default_dt, reflected_substep, solve_cauchy


def test_constants_preserved(unit_disk, normal_field, disk_grid8):
    tf = solve_cauchy(
        kinetic(), unit_disk, normal_field, disk_grid8,
        lambda x: np.full(x.shape[0], 0.7), T=0.5,
    )
    assert np.max(np.abs(tf.final().values - 0.7)) <= 1e-12


def test_hopf_lax_interior_match(unit_disk, normal_field, disk_grid16):
    # for H = |p|^2/2 and u0 = |x|^2/2 the exact value is |x|^2 / (2(1+t));
    # minimizing paths pull toward the origin, so the boundary is inactive
    tf = solve_cauchy(
        kinetic(), unit_disk, normal_field, disk_grid16,
        lambda x: 0.5 * np.sum(x ** 2, axis=-1), T=0.5,
    )
    r = np.linalg.norm(disk_grid16.points, axis=1)
    exact = 0.5 * r ** 2 / 1.5
    interior = r <= 1.0 - 2.0 * disk_grid16.h
    err = np.max(np.abs(tf.final().values - exact)[interior])
    assert err <= 0.04 * np.max(np.abs(exact))


def test_default_dt_matches_cfl(disk_grid8):
    controls = ControlSet.build(c_ctl=2.0, dim=2)
    dt = default_dt(disk_grid8, controls)
    assert dt == pytest.approx(disk_grid8.h / (2.0 * 2.0 + 1.0))
    assert dt * controls.c_ctl <= 2.0 * disk_grid8.h


def test_ordered_initial_data_stay_ordered(unit_disk, normal_field, disk_grid8):
    model = mechanical(lambda x: np.sum(x ** 2, axis=-1))
    lo = solve_cauchy(model, unit_disk, normal_field, disk_grid8,
                      lambda x: 0.3 * x[..., 0], T=0.5)
    hi = solve_cauchy(model, unit_disk, normal_field, disk_grid8,
                      lambda x: 0.3 * np.abs(x[..., 0]), T=0.5)
    gap = hi.final().values - lo.final().values
    assert np.min(gap) >= -1e-12


def test_dpp_defect_within_tolerance(unit_disk, normal_field, disk_grid8):
    model = mechanical(lambda x: np.sum(x ** 2, axis=-1))
    tf = solve_cauchy(model, unit_disk, normal_field, disk_grid8,
                      lambda x: 0.3 * x[..., 0], T=1.0, keep_policies=True)
    assert tf.policies is not None
    bound = 3.0 * (disk_grid8.h + tf.dt)
    for refine in (1, 2):
        rep = check_dpp(model, unit_disk, normal_field, tf,
                        s=0.4, t=0.4, refine=refine)
        assert rep.ok
        assert rep.defect <= bound


def test_barrier_diagnostics(unit_disk, normal_field, disk_grid8):
    tf = solve_cauchy(
        kinetic(), unit_disk, normal_field, disk_grid8,
        lambda x: 0.5 * np.sum(x ** 2, axis=-1), T=0.5,
    )
    d = tf.diagnostics
    assert d["c_up"] >= 0.0
    assert d["eps_h"] > 0.0
    # rest-control upper barrier and initial-slope lower barrier both hold
    assert d["barrier_upper_defect"] <= 1e-10
    assert d["barrier_lower_defect"] <= 1e-10


def test_reflected_substep_confines_to_closure(unit_disk, normal_field):
    rng = np.random.default_rng(3)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=12)
    x = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    xi = rng.uniform(-2.0, 2.0, size=(12, 2))
    pos, mult = reflected_substep(unit_disk, normal_field, x, xi, dt=0.1)
    assert np.max(unit_disk.psi(pos)) <= 1e-8
    assert np.all(mult >= -1e-12)
    # an interior point moving with small velocity is unconstrained
    pos2, mult2 = reflected_substep(
        unit_disk, normal_field,
        np.array([[0.1, 0.0]]), np.array([[0.5, 0.2]]), dt=0.1,
    )
    assert pos2[0] == pytest.approx([0.15, 0.02])
    assert mult2[0] == pytest.approx(0.0, abs=1e-12)


def test_store_every_and_slice_at(unit_disk, normal_field, disk_grid8):
    tf = solve_cauchy(
        kinetic(), unit_disk, normal_field, disk_grid8,
        lambda x: np.zeros(x.shape[0]), T=0.5, store_every=5,
    )
    assert tf.times[0] == 0.0
    assert tf.times[-1] == pytest.approx(0.5, abs=tf.dt)
    assert np.all(np.diff(tf.times) > 0)
    mid = tf.slice_at(tf.times[len(tf.times) // 2])
    assert mid.shape == (len(disk_grid8.points),)
