"""Calibrated curves, two-sided orbits, and traced Cauchy minimizers."""

import numpy as np
import pytest

from obliquehj import Grid, kinetic, mechanical, representation
from obliquehj.extremals import (
    CalibrationLost,
    NoCheapLoop,
    attained_minimizer,
    aubry_convergence,
    calibrated_extremal,
    two_sided_extremal,
)
from obliquehj.grid import GridField
from obliquehj.scheme import solve_cauchy
from obliquehj.skorokhod import validate_triple


@pytest.fixture(scope="module")
def mech_solution(mech_chain16):
    chain = mech_chain16
    u = representation(np.zeros(len(chain.aubry.nodes)), chain.potential,
                       chain.aubry)
    return chain, u


def test_calibrated_extremal_defect_and_speed(mech_solution):
    chain, u = mech_solution
    curve = calibrated_extremal(chain.model, chain.domain, chain.field_, u,
                                np.array([0.8, 0.3]), T=10.0,
                                a=chain.critical.c)
    assert curve.max_defect <= curve.tol_cal
    dt = curve.triple.t[1] - curve.triple.t[0]
    assert curve.max_defect <= 5.0 * (chain.grid.h + dt)
    assert curve.v_sup <= 1.2 * curve.v_bound
    # the decrement of phi along the whole curve equals the action paid
    phi0 = chain.grid.interpolate(u.values, curve.triple.eta[:1])[0]
    phiT = chain.grid.interpolate(u.values, curve.triple.eta[-1:])[0]
    action = float(np.sum(curve.step_actions))
    n_windows = len(curve.window_defects)
    assert abs(phi0 - phiT - action) <= n_windows * curve.tol_cal


def test_calibrated_extremal_approaches_aubry(mech_solution):
    chain, u = mech_solution
    curve = calibrated_extremal(chain.model, chain.domain, chain.field_, u,
                                np.array([0.8, 0.3]), T=10.0,
                                a=chain.critical.c)
    conv = aubry_convergence(curve, chain.aubry)
    assert conv.passed
    assert conv.tail_late <= conv.threshold
    assert conv.tail_late <= 2.0 * chain.grid.h


def test_calibration_lost_on_non_solution(mech_solution):
    chain, _ = mech_solution
    rng = np.random.default_rng(0)
    bad = GridField(chain.grid, rng.uniform(-1.0, 1.0, len(chain.grid.points)))
    with pytest.raises(CalibrationLost):
        calibrated_extremal(chain.model, chain.domain, chain.field_, bad,
                            np.array([0.8, 0.3]), T=4.0, a=chain.critical.c,
                            tol_cal=1e-3)


def test_two_sided_orbit_at_aubry_node(mech_solution):
    chain, _ = mech_solution
    y = int(chain.aubry.nodes[0])
    ts = two_sided_extremal(chain.aubry, chain.graph_c, chain.potential, y,
                            T=6.0)
    assert ts.n_loops >= 1
    assert abs(ts.loop_action) <= ts.n_loops * chain.aubry.tol_A
    assert ts.max_dist_to_aubry <= 2.0 * chain.grid.h
    rep = validate_triple(chain.domain, chain.field_, ts.triple)
    assert rep.ok, rep.failures


def test_two_sided_needs_cheap_loop(mech_solution):
    chain, _ = mech_solution
    far = chain.grid.nearest_node(np.array([0.7, 0.0]))
    assert not chain.aubry.mask[far]
    with pytest.raises(NoCheapLoop):
        two_sided_extremal(chain.aubry, chain.graph_c, chain.potential,
                           int(far), T=6.0)


def test_attained_minimizer_traces_value(unit_disk, normal_field, disk_grid8):
    model = mechanical(lambda x: np.sum(np.asarray(x, float) ** 2, axis=-1))
    tf = solve_cauchy(model, unit_disk, normal_field, disk_grid8,
                      lambda x: 0.3 * x[..., 0], T=1.0, keep_policies=True)
    tm = attained_minimizer(model, unit_disk, normal_field, tf,
                            np.array([0.5, -0.2]), t=1.0)
    assert tm.defect <= tm.defect_bound
    assert tm.defect <= 0.05
    assert tm.traced_value == pytest.approx(tm.value, abs=0.05)


def test_attained_minimizer_matches_hopf_lax(unit_disk, normal_field,
                                             disk_grid16):
    # free kinetic motion: w(x, t) = |x|^2 / (2 (1 + t)), minimizer pulls
    # straight toward the origin
    tf = solve_cauchy(kinetic(), unit_disk, normal_field, disk_grid16,
                      lambda x: 0.5 * np.sum(x ** 2, axis=-1), T=0.5,
                      keep_policies=True)
    x = np.array([0.6, 0.0])
    tm = attained_minimizer(kinetic(), unit_disk, normal_field, tf, x, t=0.5)
    exact = 0.5 * np.sum(x ** 2) / 1.5
    assert tm.value == pytest.approx(exact, abs=0.03 * 0.5 / 1.5)
    # the traced path stays within a couple of cells of the chord
    eta = tm.triple.eta
    assert np.max(np.abs(eta[:, 1])) <= 2.0 * disk_grid16.h
    assert np.min(eta[:, 0]) >= x[0] / 1.5 - 2.0 * disk_grid16.h
