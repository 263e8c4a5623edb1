"""
City Topology Module for skyheight
Generates and queries the immutable synthetic city: Poisson base stations
and a square lattice of buildings with Rayleigh-distributed heights
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils import ConfigError, SimUtils

logger = logging.getLogger(__name__)

Point3D = Tuple[float, float, float]


@dataclass
class TopologyParams:
    """Generation constants of the city (building/BS geometry and area)"""

    area_km2: float = 25.0
    bs_height_m: float = 30.0
    building_area_m2: float = 40.0
    height_scale_m: float = 20.0
    path_margin_m: float = 500.0

    def validate(self) -> None:
        if self.area_km2 <= 0:
            raise ConfigError(f"area_km2 must be positive, got {self.area_km2}")
        if self.bs_height_m <= 0:
            raise ConfigError(f"bs_height_m must be positive, got {self.bs_height_m}")
        if self.building_area_m2 <= 0:
            raise ConfigError(f"building_area_m2 must be positive, got {self.building_area_m2}")
        if self.height_scale_m <= 0:
            raise ConfigError(f"height_scale_m must be positive, got {self.height_scale_m}")
        if self.path_margin_m < 0:
            raise ConfigError(f"path_margin_m must be non-negative, got {self.path_margin_m}")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "TopologyParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown topology keys: {sorted(unknown)}")
        params = cls(**{k: float(v) for k, v in data.items()})
        params.validate()
        return params


@dataclass(frozen=True)
class AreaSpec:
    """Square simulation area of side side_m, origin at its center"""

    side_m: float

    def __post_init__(self):
        if not (self.side_m > 0 and math.isfinite(self.side_m)):
            raise ValueError(f"Area side must be positive and finite, got {self.side_m}")

    @classmethod
    def from_km2(cls, area_km2: float) -> "AreaSpec":
        if area_km2 <= 0:
            raise ValueError(f"Area must be positive, got {area_km2} km^2")
        return cls(side_m=math.sqrt(area_km2) * 1000.0)

    @property
    def half_side_m(self) -> float:
        return self.side_m / 2.0

    @property
    def area_km2(self) -> float:
        return (self.side_m / 1000.0) ** 2

    def contains(self, x_m: float, y_m: float) -> bool:
        h = self.half_side_m
        return -h <= x_m <= h and -h <= y_m <= h

    def check_path(self, x_start_m: float, x_end_m: float, margin_m: float) -> None:
        """
        Check that a path along y = 0 keeps margin_m to every edge

        Raises:
            ValueError: If the path leaves the area or violates the margin
        """
        limit = self.half_side_m - margin_m
        if min(x_start_m, x_end_m) < -limit or max(x_start_m, x_end_m) > limit or limit < 0:
            raise ValueError(
                f"Path [{x_start_m}, {x_end_m}] m does not fit in a {self.side_m:.1f} m area "
                f"with {margin_m} m margin"
            )


@dataclass(frozen=True)
class BaseStation:
    """A ground base station"""

    x_m: float
    y_m: float
    height_m: float


@dataclass(frozen=True, eq=False)
class BuildingGrid:
    """
    Square lattice of buildings anchored at the area origin

    Centers sit at (i * pitch, j * pitch) for |i|, |j| <= half_count.
    heights_m is indexed [i + half_count, j + half_count]; flat building
    indices are the C-order ravel of that array.
    """

    pitch_m: float
    footprint_side_m: float
    half_count: int
    heights_m: np.ndarray

    def __post_init__(self):
        size = 2 * self.half_count + 1
        heights = np.array(self.heights_m, dtype=np.float64).reshape(size, size)
        heights.setflags(write=False)
        object.__setattr__(self, "heights_m", heights)
        if self.footprint_side_m > self.pitch_m:
            raise ValueError(
                f"Building footprints overlap: side {self.footprint_side_m:.4f} m > "
                f"pitch {self.pitch_m:.4f} m"
            )
        if np.any(heights < 0):
            raise ValueError("Building heights must be non-negative")

    @property
    def size(self) -> int:
        return 2 * self.half_count + 1

    @property
    def count(self) -> int:
        return self.size * self.size

    @property
    def half_side_m(self) -> float:
        return self.footprint_side_m / 2.0

    @property
    def flat_heights(self) -> np.ndarray:
        return self.heights_m.ravel()

    def centers(self, indices: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Center coordinates of buildings

        Args:
            indices: Flat building indices (all buildings if None)

        Returns:
            Tuple[np.ndarray, np.ndarray]: x and y center coordinates
        """
        if indices is None:
            indices = np.arange(self.count)
        indices = np.asarray(indices, dtype=np.int64)
        i = indices // self.size - self.half_count
        j = indices % self.size - self.half_count
        return i * self.pitch_m, j * self.pitch_m

    def buildings_near_segment(self, p0: Sequence[float], p1: Sequence[float]) -> np.ndarray:
        """
        Candidate buildings whose footprint may meet the horizontal projection of p0 -> p1

        The segment is sampled at spacing <= pitch / 2; each sample's nearest
        lattice cell and its 8 neighbors are collected. Any footprint point lies
        in the cell of its own center (footprint side <= pitch), and every point
        of the segment is within pitch / 4 of a sample, so the result is a
        superset of the exact intersection set.

        Args:
            p0: Segment start (x, y[, z])
            p1: Segment end (x, y[, z])

        Returns:
            np.ndarray: Sorted unique flat building indices
        """
        x0, y0 = float(p0[0]), float(p0[1])
        x1, y1 = float(p1[0]), float(p1[1])
        length = math.hypot(x1 - x0, y1 - y0)
        n_samples = int(math.ceil(length / (self.pitch_m / 2.0))) + 1
        t = np.linspace(0.0, 1.0, n_samples)
        ix = np.rint((x0 + t * (x1 - x0)) / self.pitch_m).astype(np.int64)
        iy = np.rint((y0 + t * (y1 - y0)) / self.pitch_m).astype(np.int64)

        offsets = np.arange(-1, 2)
        cand_ix = (ix[:, None, None] + offsets[None, :, None]) + np.zeros((1, 1, 3), dtype=np.int64)
        cand_iy = (iy[:, None, None] + offsets[None, None, :]) + np.zeros((1, 3, 1), dtype=np.int64)
        cand_ix = cand_ix.ravel()
        cand_iy = cand_iy.ravel()

        n = self.half_count
        valid = (np.abs(cand_ix) <= n) & (np.abs(cand_iy) <= n)
        flat = (cand_ix[valid] + n) * self.size + (cand_iy[valid] + n)
        return np.unique(flat)

    def to_dict(self) -> Dict:
        return {
            "pitch": self.pitch_m,
            "side": self.footprint_side_m,
            "heights": [float(h) for h in self.flat_heights],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "BuildingGrid":
        heights = np.asarray(data["heights"], dtype=np.float64)
        size = int(round(math.sqrt(len(heights))))
        if size * size != len(heights) or size % 2 == 0:
            raise ValueError(f"Building heights do not form an odd square lattice: {len(heights)}")
        return cls(
            pitch_m=float(data["pitch"]),
            footprint_side_m=float(data["side"]),
            half_count=(size - 1) // 2,
            heights_m=heights,
        )


@dataclass(frozen=True, eq=False)
class CityTopology:
    """Immutable sampled world shared by every episode of a cell"""

    area: AreaSpec
    bss: Tuple[BaseStation, ...]
    buildings: BuildingGrid
    bs_density_km2: float
    build_density_km2: float
    seed: int
    building_seed: Optional[int] = None
    bs_xy: np.ndarray = field(init=False, repr=False)
    bs_heights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bss", tuple(self.bss))
        xy = np.array([[bs.x_m, bs.y_m] for bs in self.bss], dtype=np.float64).reshape(-1, 2)
        heights = np.array([bs.height_m for bs in self.bss], dtype=np.float64)
        xy.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "bs_xy", xy)
        object.__setattr__(self, "bs_heights", heights)

    @property
    def n_bss(self) -> int:
        return len(self.bss)

    def nearest_bs(self, x_m: float, y_m: float = 0.0) -> int:
        """
        Index of the horizontally closest base station (lowest index on ties)

        Raises:
            ValueError: If the topology has no base stations
        """
        if self.n_bss == 0:
            raise ValueError("Topology has no base stations")
        d2 = (self.bs_xy[:, 0] - x_m) ** 2 + (self.bs_xy[:, 1] - y_m) ** 2
        return int(np.argmin(d2))

    def nearest_distances(self, x_m: float, y_m: float, k: int) -> np.ndarray:
        """Sorted horizontal distances to the k closest base stations (fewer if N < k)"""
        d = np.hypot(self.bs_xy[:, 0] - x_m, self.bs_xy[:, 1] - y_m)
        return np.sort(d)[:k]

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "building_seed": self.building_seed,
            "bs_density_km2": self.bs_density_km2,
            "build_density_km2": self.build_density_km2,
            "area_side_m": self.area.side_m,
            "bss": [{"x": bs.x_m, "y": bs.y_m, "h": bs.height_m} for bs in self.bss],
            "buildings": self.buildings.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CityTopology":
        return cls(
            area=AreaSpec(float(data["area_side_m"])),
            bss=tuple(BaseStation(float(b["x"]), float(b["y"]), float(b["h"])) for b in data["bss"]),
            buildings=BuildingGrid.from_dict(data["buildings"]),
            bs_density_km2=float(data["bs_density_km2"]),
            build_density_km2=float(data["build_density_km2"]),
            seed=int(data["seed"]),
            building_seed=None if data.get("building_seed") is None else int(data["building_seed"]),
        )

    def to_json(self, path: Union[str, Path]) -> None:
        """Write the topology as a JSON document (full double precision)"""
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CityTopology":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


class CityGenerator:
    """
    Samplers for the city world
    """

    @staticmethod
    def sample_base_stations(density_km2: float, area: AreaSpec, rng: np.random.Generator,
                             height_m: float = 30.0) -> List[BaseStation]:
        """
        Sample base stations from a homogeneous Poisson point process

        Args:
            density_km2: Intensity in BSs per square kilometre
            area: Simulation area
            rng: Seeded generator
            height_m: Height of every BS

        Returns:
            List[BaseStation]: Sampled base stations
        """
        if not density_km2 > 0:
            raise ValueError(f"BS density must be positive, got {density_km2}")
        if not area.side_m > 0:
            raise ValueError(f"Degenerate area: side {area.side_m}")

        count = int(rng.poisson(density_km2 * area.area_km2))
        half = area.half_side_m
        xs = rng.uniform(-half, half, count)
        ys = rng.uniform(-half, half, count)
        return [BaseStation(float(x), float(y), float(height_m)) for x, y in zip(xs, ys)]

    @staticmethod
    def lattice_pitch(density_km2: float) -> float:
        """Lattice spacing in meters for a building density per km^2"""
        if not density_km2 > 0:
            raise ValueError(f"Building density must be positive, got {density_km2}")
        return 1000.0 / math.sqrt(density_km2)

    @staticmethod
    def sample_buildings(density_km2: float, building_area_m2: float, height_scale_m: float,
                         area: AreaSpec, rng: np.random.Generator) -> BuildingGrid:
        """
        Build the square building lattice with Rayleigh heights

        Args:
            density_km2: Buildings per square kilometre
            building_area_m2: Footprint area of every building
            height_scale_m: Rayleigh scale parameter of the heights
            area: Simulation area
            rng: Seeded generator

        Returns:
            BuildingGrid: The building lattice
        """
        pitch = CityGenerator.lattice_pitch(density_km2)
        if building_area_m2 <= 0:
            raise ValueError(f"Building area must be positive, got {building_area_m2}")
        side = math.sqrt(building_area_m2)
        if side > pitch:
            raise ValueError(
                f"Footprints of {building_area_m2} m^2 overlap at density {density_km2}/km^2 "
                f"(pitch {pitch:.3f} m)"
            )
        if height_scale_m <= 0:
            raise ValueError(f"Height scale must be positive, got {height_scale_m}")

        half_count = int(math.floor(area.half_side_m / pitch + 1e-9))
        size = 2 * half_count + 1
        heights = rng.rayleigh(scale=height_scale_m, size=(size, size))
        return BuildingGrid(pitch_m=pitch, footprint_side_m=side,
                            half_count=half_count, heights_m=heights)

    @staticmethod
    def generate(bs_density_km2: float, build_density_km2: float, seed: int,
                 params: Optional[TopologyParams] = None,
                 building_seed: Optional[int] = None) -> CityTopology:
        """
        Generate a full city from its seed and parameters

        BS positions and building heights use separate labeled substreams.
        Buildings draw from building_seed when given, so two cities can share
        their base stations while differing in buildings (and vice versa).
        Regenerating from (seed, building_seed, params) is bit-identical.

        Args:
            bs_density_km2: BS intensity per km^2
            build_density_km2: Buildings per km^2
            seed: Topology seed
            params: Generation constants (defaults if None)
            building_seed: Seed of the building substream (seed if None)

        Returns:
            CityTopology: The generated city
        """
        params = params or TopologyParams()
        area = AreaSpec.from_km2(params.area_km2)
        bss = CityGenerator.sample_base_stations(
            bs_density_km2, area, SimUtils.substream(seed, "bs-positions"), params.bs_height_m
        )
        buildings = CityGenerator.sample_buildings(
            build_density_km2, params.building_area_m2, params.height_scale_m, area,
            SimUtils.substream(seed if building_seed is None else building_seed, "building-heights"),
        )
        logger.debug(
            "Generated topology seed=%d: %d BSs, %d buildings (pitch %.3f m)",
            seed, len(bss), buildings.count, buildings.pitch_m,
        )
        return CityTopology(
            area=area,
            bss=tuple(bss),
            buildings=buildings,
            bs_density_km2=float(bs_density_km2),
            build_density_km2=float(build_density_km2),
            seed=int(seed),
            building_seed=None if building_seed is None else int(building_seed),
        )
