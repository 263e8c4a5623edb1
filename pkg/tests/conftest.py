"""
Shared pytest setup for skyheight
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path to import skyheight
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from skyheight.world.topology import AreaSpec, BaseStation, BuildingGrid, CityTopology


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical and learning checks")


def make_topology(bss, pitch=500.0, half_count=2, heights=None, side_m=5000.0,
                  footprint_side=40.0 ** 0.5, bs_density=5.0, build_density=4.0, seed=0):
    """Hand-built city for geometry tests"""
    size = 2 * half_count + 1
    if heights is None:
        heights = np.zeros((size, size))
    return CityTopology(
        area=AreaSpec(side_m),
        bss=tuple(BaseStation(*b) for b in bss),
        buildings=BuildingGrid(pitch_m=pitch, footprint_side_m=footprint_side,
                               half_count=half_count, heights_m=np.asarray(heights, dtype=float)),
        bs_density_km2=bs_density,
        build_density_km2=build_density,
        seed=seed,
    )


@pytest.fixture
def open_city():
    """Two BSs, no building taller than the ground"""
    return make_topology([(-300.0, 50.0, 30.0), (400.0, -80.0, 30.0)])
