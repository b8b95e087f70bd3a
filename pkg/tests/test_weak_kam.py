"""Critical values, the distance-like potential, Aubry sets, representation."""

import numpy as np
import pytest

from obliquehj import (
    Grid,
    aubry_detect,
    build_action_graph,
    critical_value_cycle,
    critical_value_slope,
    disk,
    kinetic,
    mane_potential,
    mechanical,
    representation,
    rotated_normal,
    u_minus,
)
from obliquehj.checks import check_subsolution
from obliquehj.grid import GridField
from obliquehj.weak_kam import (
    IncompatibleTrace,
    NegativeCycleAtC,
    has_negative_cycle,
)

from conftest import WeakKamChain, single_well_V


def test_kinetic_critical_value_is_zero(kinetic_chain8):
    assert abs(kinetic_chain8.critical.c) <= 1e-3


def test_shifted_kinetic_critical_value(unit_disk, normal_field, disk_grid8):
    model = kinetic().shifted(1.0)  # effective H = |p|^2/2 - 1
    cv = critical_value_cycle(model, unit_disk, normal_field, disk_grid8)
    assert cv.c == pytest.approx(-1.0, abs=1e-2)


def test_mechanical_critical_value_and_gap(unit_disk, normal_field, disk_grid8):
    model = mechanical(single_well_V)
    cv = critical_value_cycle(model, unit_disk, normal_field, disk_grid8)
    assert abs(cv.c) <= 0.05
    c_slope, info = critical_value_slope(model, unit_disk, normal_field,
                                         disk_grid8)
    cv = cv.with_slope(c_slope)
    assert cv.gap <= 0.05
    assert cv.bracket[0] <= cv.c <= cv.bracket[1]
    assert cv.width >= 0.0
    assert cv.potential_check


def test_mane_potential_matches_maupertuis(mech_chain16):
    # V = |x|^2: least action between rest points equals int_0^r sqrt(2 V)
    # along the radius, i.e. d(x, 0) = |x|^2 / sqrt(2)
    chain = mech_chain16
    x0 = chain.grid.nearest_node(np.zeros(2))
    for r in np.linspace(0.1, 0.9, 10):
        node = chain.grid.nearest_node(np.array([r, 0.0]))
        r_eff = np.linalg.norm(chain.grid.points[node])
        exact = r_eff ** 2 / np.sqrt(2.0)
        got = chain.potential.d[node, x0]
        assert got == pytest.approx(exact, rel=0.05), f"radius {r_eff}"


def test_triangle_inequality_full_matrix(mech_chain16):
    assert mech_chain16.potential.triangle_defect() <= 1e-9


def test_aubry_single_well_is_one_cell(mech_chain16):
    chain = mech_chain16
    nodes = chain.aubry.nodes
    assert len(nodes) >= 1
    assert np.max(np.linalg.norm(chain.grid.points[nodes], axis=1)) <= chain.grid.h
    assert not chain.aubry.fallback_used


def test_aubry_kinetic_is_everything(kinetic_chain8):
    assert kinetic_chain8.aubry.mask.all()


def test_aubry_two_well_detects_both(unit_disk, normal_field):
    z1 = np.array([0.5, 0.0])
    z2 = np.array([-0.5, 0.0])

    def V(x):
        x = np.asarray(x, dtype=float)
        d1 = np.sum((x - z1) ** 2, axis=-1)
        d2 = np.sum((x - z2) ** 2, axis=-1)
        return 4.0 * d1 * d2

    grid = Grid(unit_disk, 1.0 / 12, field_=normal_field)
    chain = WeakKamChain(mechanical(V), unit_disk, normal_field, grid)
    assert abs(chain.critical.c) <= 0.05
    pts = grid.points[chain.aubry.nodes]
    assert np.min(np.linalg.norm(pts - z1, axis=1)) <= 1.5 * grid.h
    assert np.min(np.linalg.norm(pts - z2, axis=1)) <= 1.5 * grid.h
    # nothing detected far from both wells
    near_either = np.minimum(np.linalg.norm(pts - z1, axis=1),
                             np.linalg.norm(pts - z2, axis=1))
    assert np.max(near_either) <= 1.5 * grid.h


def test_representation_roundtrip(mech_chain16, kinetic_chain8):
    for chain in (mech_chain16, kinetic_chain8):
        u = representation(np.zeros(len(chain.aubry.nodes)), chain.potential,
                           chain.aubry)
        trace = u.values[chain.aubry.nodes]
        u2 = representation(trace, chain.potential, chain.aubry)
        defect = np.max(np.abs(u2.values - u.values))
        bound = 5.0 * chain.grid.h * (1.0 + u.lipschitz_ratio())
        assert defect <= bound
        assert defect <= 1e-10  # two passes of min-plus are idempotent


def test_incompatible_trace_rejected(kinetic_chain8):
    # at the kinetic critical level all loops are free, so d = 0 and only
    # constant traces are compatible
    chain = kinetic_chain8
    trace = np.zeros(len(chain.aubry.nodes))
    trace[3] = 1.0
    with pytest.raises(IncompatibleTrace):
        representation(trace, chain.potential, chain.aubry)


def test_u_minus_settles_to_weak_kam_solution(unit_disk, normal_field,
                                              disk_grid8):
    model = mechanical(single_well_V)
    zero = GridField(disk_grid8, np.zeros(len(disk_grid8.points)))
    u2, _ = u_minus(model, unit_disk, normal_field, zero, T=2.0, a=0.0)
    u6, tf = u_minus(model, unit_disk, normal_field, zero, T=6.0, a=0.0)
    # the semigroup from data below the solution is nondecreasing in T
    assert np.min(u6.values - u2.values) >= -1e-12
    well = disk_grid8.nearest_node(np.zeros(2))
    assert u6.values[well] == pytest.approx(0.0, abs=1e-12)
    # converges to d(., well) up to first-order scheme error
    exact = np.sum(disk_grid8.points ** 2, axis=1) / np.sqrt(2.0)
    assert np.max(np.abs(u6.values - exact)) <= 0.15
    rep = check_subsolution(model, unit_disk, normal_field, disk_grid8,
                            u6.values, a=0.0)
    assert rep.passed, rep


def test_negative_cycles_bracket_critical_value(mech_chain16):
    chain = mech_chain16
    assert has_negative_cycle(chain.graph, chain.critical.c - 0.2)
    assert not has_negative_cycle(chain.graph, chain.critical.c + 0.2)


def test_potential_below_critical_level_raises(mech_chain16):
    chain = mech_chain16
    with pytest.raises(NegativeCycleAtC):
        mane_potential(chain.graph.at_level(chain.critical.c - 0.5))
