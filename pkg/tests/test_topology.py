"""
Tests for the topology module
"""

import math

import numpy as np
import pytest
from scipy import stats

from conftest import make_topology
from skyheight.utils import SimUtils
from skyheight.world.topology import (
    AreaSpec,
    BaseStation,
    BuildingGrid,
    CityGenerator,
    CityTopology,
    TopologyParams,
)


class TestAreaSpec:
    """Test class for the simulation area"""

    def test_from_km2(self):
        area = AreaSpec.from_km2(25.0)
        assert area.side_m == pytest.approx(5000.0)
        assert area.half_side_m == pytest.approx(2500.0)
        assert area.area_km2 == pytest.approx(25.0)

    def test_rejects_degenerate_side(self):
        with pytest.raises(ValueError):
            AreaSpec(0.0)
        with pytest.raises(ValueError):
            AreaSpec.from_km2(-1.0)

    def test_path_margin(self):
        area = AreaSpec.from_km2(25.0)
        area.check_path(-500.0, 500.0, 500.0)
        # 2.5 km^2 leaves less than 500 m between the path and the edge
        with pytest.raises(ValueError):
            AreaSpec.from_km2(2.5).check_path(-500.0, 500.0, 500.0)


class TestBaseStations:
    """Test class for Poisson base station sampling"""

    def setup_method(self):
        self.area = AreaSpec.from_km2(25.0)

    def test_positions_inside_and_fixed_height(self):
        bss = CityGenerator.sample_base_stations(1.0, self.area, np.random.default_rng(3))
        assert all(bs.height_m == 30.0 for bs in bss)
        assert all(self.area.contains(bs.x_m, bs.y_m) for bs in bss)

    def test_rejects_non_positive_density(self):
        with pytest.raises(ValueError):
            CityGenerator.sample_base_stations(0.0, self.area, np.random.default_rng(0))

    def test_mean_count_matches_intensity(self):
        rng = np.random.default_rng(11)
        counts = [len(CityGenerator.sample_base_stations(5.0, self.area, rng)) for _ in range(2000)]
        # sd of the mean is sqrt(125 / 2000) = 0.25
        assert np.mean(counts) == pytest.approx(125.0, abs=1.25)

    @pytest.mark.slow
    def test_mean_count_within_one_percent(self):
        rng = np.random.default_rng(12)
        counts = [len(CityGenerator.sample_base_stations(5.0, self.area, rng)) for _ in range(10000)]
        assert abs(np.mean(counts) - 125.0) / 125.0 < 0.01


class TestBuildings:
    """Test class for the building lattice"""

    def setup_method(self):
        self.area = AreaSpec.from_km2(25.0)

    def test_pitch(self):
        assert CityGenerator.lattice_pitch(100.0) == pytest.approx(100.0)
        assert CityGenerator.lattice_pitch(500.0) == pytest.approx(44.721, abs=1e-3)

    def test_footprint_side(self):
        grid = CityGenerator.sample_buildings(500.0, 40.0, 20.0, self.area, np.random.default_rng(0))
        assert grid.footprint_side_m == pytest.approx(6.3246, abs=1e-4)
        assert grid.pitch_m >= grid.footprint_side_m

    def test_lattice_covers_area(self):
        grid = CityGenerator.sample_buildings(100.0, 40.0, 20.0, self.area, np.random.default_rng(0))
        xs, ys = grid.centers()
        assert xs.max() == pytest.approx(2500.0)
        assert xs.min() == pytest.approx(-2500.0)
        assert grid.count == 51 * 51
        assert np.all(grid.flat_heights >= 0)

    def test_overlapping_footprints_rejected(self):
        with pytest.raises(ValueError):
            CityGenerator.sample_buildings(100000.0, 40.0, 20.0, self.area, np.random.default_rng(0))
        with pytest.raises(ValueError):
            BuildingGrid(pitch_m=5.0, footprint_side_m=6.0, half_count=1, heights_m=np.zeros((3, 3)))

    def test_heights_read_only(self):
        grid = CityGenerator.sample_buildings(100.0, 40.0, 20.0, self.area, np.random.default_rng(0))
        with pytest.raises(ValueError):
            grid.heights_m[0, 0] = 1.0

    def test_rayleigh_heights(self):
        rng = np.random.default_rng(5)
        heights = np.concatenate([
            CityGenerator.sample_buildings(1000.0, 40.0, 20.0, self.area, rng).flat_heights
            for _ in range(4)
        ])
        assert heights.size > 100000
        assert heights.mean() == pytest.approx(20.0 * math.sqrt(math.pi / 2.0), rel=0.01)
        result = stats.kstest(heights, stats.rayleigh(scale=20.0).cdf)
        assert result.pvalue > 0.01


class TestBuildingsNearSegment:
    """Test class for candidate pruning"""

    def setup_method(self):
        self.grid = CityGenerator.sample_buildings(
            500.0, 40.0, 20.0, AreaSpec.from_km2(25.0), np.random.default_rng(0)
        )

    def _exhaustive(self, p0, p1):
        xs, ys = self.grid.centers()
        s = self.grid.half_side_m
        hits = []
        for k, (cx, cy) in enumerate(zip(xs, ys)):
            lo, hi = 0.0, 1.0
            inside = True
            for o, d, c in ((p0[0], p1[0] - p0[0], cx), (p0[1], p1[1] - p0[1], cy)):
                if d == 0.0:
                    inside &= abs(o - c) <= s
                    continue
                ta, tb = (c - s - o) / d, (c + s - o) / d
                lo, hi = max(lo, min(ta, tb)), min(hi, max(ta, tb))
            if inside and lo <= hi:
                hits.append(k)
        return set(hits)

    def test_zero_length_segment_is_local(self):
        p = (101.3, -47.9, 50.0)
        found = self.grid.buildings_near_segment(p, p)
        assert 0 < len(found) <= 9

    def test_row_segment(self):
        pitch = self.grid.pitch_m
        found = self.grid.buildings_near_segment((0.0, 0.0, 10.0), (10 * pitch, 0.0, 10.0))
        assert len(found) >= 10

    def test_superset_of_exhaustive_scan(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            p0 = (*rng.uniform(-600, 600, 2), 100.0)
            p1 = (*rng.uniform(-600, 600, 2), 30.0)
            found = set(self.grid.buildings_near_segment(p0, p1).tolist())
            assert self._exhaustive(p0, p1) <= found


class TestCityTopology:
    """Test class for the generated city"""

    def test_reconstruction_is_bit_identical(self):
        a = CityGenerator.generate(5.0, 500.0, seed=42)
        b = CityGenerator.generate(5.0, 500.0, seed=42)
        np.testing.assert_array_equal(a.bs_xy, b.bs_xy)
        np.testing.assert_array_equal(a.buildings.heights_m, b.buildings.heights_m)

    def test_different_seeds_differ(self):
        a = CityGenerator.generate(5.0, 500.0, seed=1)
        b = CityGenerator.generate(5.0, 500.0, seed=2)
        assert a.n_bss != b.n_bss or not np.array_equal(a.bs_xy, b.bs_xy)

    def test_substreams_are_independent(self):
        # BS positions do not depend on the building density
        a = CityGenerator.generate(5.0, 100.0, seed=7)
        b = CityGenerator.generate(5.0, 1000.0, seed=7)
        np.testing.assert_array_equal(a.bs_xy, b.bs_xy)
        expected = np.random.default_rng(SimUtils.derive_seed(7, "bs-positions")).poisson(125.0)
        assert a.n_bss == expected

    def test_building_seed_overrides_building_stream(self):
        a = CityGenerator.generate(1.0, 500.0, seed=4, building_seed=99)
        b = CityGenerator.generate(10.0, 500.0, seed=5, building_seed=99)
        c = CityGenerator.generate(1.0, 500.0, seed=4)
        np.testing.assert_array_equal(a.buildings.heights_m, b.buildings.heights_m)
        np.testing.assert_array_equal(a.bs_xy, c.bs_xy)
        assert not np.array_equal(a.buildings.heights_m, c.buildings.heights_m)
        assert a.building_seed == 99 and c.building_seed is None

    def test_json_keeps_building_seed(self, tmp_path):
        topology = CityGenerator.generate(1.0, 100.0, seed=3, building_seed=8)
        topology.to_json(tmp_path / "topology.json")
        loaded = CityTopology.from_json(tmp_path / "topology.json")
        assert loaded.building_seed == 8
        np.testing.assert_array_equal(loaded.buildings.heights_m, topology.buildings.heights_m)

    def test_json_round_trip(self, tmp_path):
        topology = CityGenerator.generate(1.0, 100.0, seed=3)
        path = tmp_path / "topology.json"
        topology.to_json(path)
        loaded = CityTopology.from_json(path)
        assert loaded.seed == topology.seed
        assert loaded.area.side_m == topology.area.side_m
        np.testing.assert_array_equal(loaded.bs_xy, topology.bs_xy)
        np.testing.assert_array_equal(loaded.buildings.heights_m, topology.buildings.heights_m)
        assert loaded.buildings.pitch_m == topology.buildings.pitch_m

    def test_nearest_bs_ties_prefer_lowest_index(self):
        topology = make_topology([(100.0, 0.0, 30.0), (-100.0, 0.0, 30.0), (300.0, 0.0, 30.0)])
        assert topology.nearest_bs(0.0, 0.0) == 0
        assert topology.nearest_bs(250.0, 0.0) == 2
        np.testing.assert_allclose(topology.nearest_distances(0.0, 0.0, 2), [100.0, 100.0])

    def test_nearest_bs_without_stations(self):
        topology = make_topology([])
        with pytest.raises(ValueError):
            topology.nearest_bs(0.0, 0.0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            TopologyParams(area_km2=-1.0).validate()
        with pytest.raises(ValueError):
            TopologyParams.from_dict({"area": 25.0})
        assert TopologyParams.from_dict({"area_km2": 9}).area_km2 == 9.0

    def test_base_station_is_frozen(self):
        bs = BaseStation(0.0, 0.0, 30.0)
        with pytest.raises(Exception):
            bs.x_m = 1.0
