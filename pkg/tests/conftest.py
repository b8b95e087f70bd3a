"""Shared problem setups; session-scoped to amortize grid/graph builds."""

import numpy as np
import pytest

from obliquehj import (Grid, aubry_detect, build_action_graph,
                       critical_value_cycle, disk, kinetic, mane_potential,
                       mechanical, rotated_normal)


def single_well_V(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


class WeakKamChain:
    """Action graph, critical value, potential and Aubry set for one setup."""

    def __init__(self, model, domain, field_, grid):
        self.model = model
        self.domain = domain
        self.field_ = field_
        self.grid = grid
        self.graph = build_action_graph(model, domain, field_, grid)
        self.critical = critical_value_cycle(model, domain, field_, grid,
                                             graph=self.graph)
        self.graph_c = self.graph.at_level(self.critical.c)
        self.potential = mane_potential(self.graph_c)
        self.aubry = aubry_detect(self.graph_c, self.potential)


@pytest.fixture(scope="session")
def unit_disk():
    return disk()


@pytest.fixture(scope="session")
def normal_field(unit_disk):
    return rotated_normal(unit_disk, 0.0, 0.0)


@pytest.fixture(scope="session")
def disk_grid8(unit_disk, normal_field):
    return Grid(unit_disk, 1.0 / 8, field_=normal_field)


@pytest.fixture(scope="session")
def disk_grid16(unit_disk, normal_field):
    return Grid(unit_disk, 1.0 / 16, field_=normal_field)


@pytest.fixture(scope="session")
def mech_chain16(unit_disk, normal_field, disk_grid16):
    return WeakKamChain(mechanical(single_well_V), unit_disk, normal_field,
                        disk_grid16)


@pytest.fixture(scope="session")
def kinetic_chain8(unit_disk, normal_field, disk_grid8):
    return WeakKamChain(kinetic(), unit_disk, normal_field, disk_grid8)
