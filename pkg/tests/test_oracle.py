"""Independent fine-lattice value-iteration reference solver."""

import numpy as np
import pytest

from obliquehj.oracle import NotConverged, oracle_value_iteration
from obliquehj.spec_file import parse_spec

MECH_DISK = """
domain {
  family = disk
}
hamiltonian {
  family = mechanical
  V = x^2 + y^2
}
grid {
  h = 0.125
}
"""


def test_refine_must_exceed_one():
    with pytest.raises(ValueError):
        oracle_value_iteration(parse_spec(MECH_DISK), refine=1)


def test_kinetic_field_is_flat():
    spec = parse_spec("domain {\n  family = disk\n}\ngrid {\n  h = 0.125\n}")
    field = oracle_value_iteration(spec, refine=2)
    # at the critical level the kinetic distance vanishes identically;
    # the tiny residue is the positive speed-floor of the rate search
    assert np.max(np.abs(field.values)) <= 1e-4


def test_mechanical_matches_maupertuis():
    field = oracle_value_iteration(parse_spec(MECH_DISK), refine=2)
    r2 = np.sum(field.grid.points ** 2, axis=1)
    exact = r2 / np.sqrt(2.0)
    mask = r2 >= 0.09
    rel = np.max(np.abs(field.values - exact)[mask] / exact[mask])
    assert rel <= 0.05


def test_one_dimensional_interval():
    spec = parse_spec("""
domain {
  family = interval
  lo = -1
  hi = 1
}
hamiltonian {
  family = mechanical
  V = x^2
}
grid {
  h = 0.0625
}
""")
    field = oracle_value_iteration(spec, refine=2)
    x = field.grid.points[:, 0]
    exact = x ** 2 / np.sqrt(2.0)
    mask = np.abs(x) >= 0.3
    assert np.max(np.abs(field.values - exact)[mask] / exact[mask]) <= 0.05


def test_sweep_cap_raises_not_converged():
    with pytest.raises(NotConverged):
        oracle_value_iteration(parse_spec(MECH_DISK), refine=2, max_sweeps=1)


def test_refinement_tightens_values():
    spec = parse_spec(MECH_DISK)
    coarse = oracle_value_iteration(spec, refine=2)
    fine = oracle_value_iteration(spec, refine=4)
    r2 = np.sum(coarse.grid.points ** 2, axis=1)
    exact = r2 / np.sqrt(2.0)
    err_c = np.max(np.abs(coarse.values - exact))
    err_f = np.max(np.abs(fine.values - exact))
    assert err_f <= 0.7 * err_c
