"""
Radio Module for skyheight
Physical-layer math: LoS/NLoS blockage, UAV and BS antenna gains,
directional-beam interferer selection, SINR and Shannon spectral efficiency
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np

from ..utils import ConfigError, SimUtils
from .topology import BaseStation, BuildingGrid, CityTopology

logger = logging.getLogger(__name__)

# Below this horizontal direction component a segment is treated as parallel to an axis
_PARALLEL_EPS = 1e-12


@dataclass
class RadioParams:
    """Channel constants of the downlink budget"""

    tx_power_w: float = 40.0
    near_field_c: float = 1.42e-4
    alpha_los: float = 2.1
    alpha_nlos: float = 4.0
    noise_w: float = 8e-13
    beamwidth_rad: float = math.pi / 3
    bs_downtilt_rad: float = math.radians(10.0)
    n_elements: int = 8
    element_spacing_wl: float = 0.5

    def validate(self) -> None:
        for name in ("tx_power_w", "near_field_c", "noise_w", "bs_downtilt_rad", "element_spacing_wl"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.beamwidth_rad < math.pi:
            raise ConfigError(f"beamwidth_rad must be in (0, pi), got {self.beamwidth_rad}")
        if not self.alpha_nlos >= self.alpha_los >= 2:
            raise ConfigError(
                f"Need alpha_nlos >= alpha_los >= 2, got {self.alpha_nlos}, {self.alpha_los}"
            )
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ConfigError(f"n_elements must be a positive integer, got {self.n_elements}")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "RadioParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown radio keys: {sorted(unknown)}")
        values = {k: float(v) for k, v in data.items()}
        if "n_elements" in values:
            values["n_elements"] = int(values["n_elements"])
        params = cls(**values)
        params.validate()
        return params


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry of one UAV-BS link as seen from the UAV"""

    r_horiz_m: float
    dh_m: float
    dist3d_m: float
    elev_angle_rad: float
    azimuth_rad: float


@dataclass(frozen=True)
class LinkBudget:
    """Terms of the SINR ratio at one pose"""

    signal_w: float
    interference_los_w: float
    interference_nlos_w: float
    noise_w: float
    serving_blocked: bool
    n_interferers: int

    @property
    def sinr(self) -> float:
        return self.signal_w / (self.interference_los_w + self.interference_nlos_w + self.noise_w)


class Channel:
    """
    Collection of pure radio functions
    """

    @staticmethod
    def link_geometry(uav: Sequence[float], bs: BaseStation) -> LinkGeometry:
        """
        Geometry of the link from a UAV position to a base station

        Args:
            uav: UAV position (x, y, h)
            bs: Base station

        Returns:
            LinkGeometry: Distances and angles of the link
        """
        dx = bs.x_m - uav[0]
        dy = bs.y_m - uav[1]
        r = math.hypot(dx, dy)
        dh = uav[2] - bs.height_m
        return LinkGeometry(
            r_horiz_m=r,
            dh_m=dh,
            dist3d_m=math.hypot(r, dh),
            elev_angle_rad=math.atan2(dh, r),
            azimuth_rad=math.atan2(dy, dx),
        )

    @staticmethod
    def segment_blocked(grid: BuildingGrid, p0: Sequence[float], p1: Sequence[float]) -> bool:
        """
        Exact slab test of a 3D segment against the building lattice

        For each candidate footprint the entry/exit parameters [t_in, t_out]
        of the horizontal projection are computed; the segment is blocked when
        a building is at least as tall as the lower end of the segment over
        that interval (height is linear in t).

        Args:
            grid: Building lattice
            p0: Segment start (x, y, z)
            p1: Segment end (x, y, z)

        Returns:
            bool: True if some building blocks the segment
        """
        candidates = grid.buildings_near_segment(p0, p1)
        if candidates.size == 0:
            return False

        cx, cy = grid.centers(candidates)
        heights = grid.flat_heights[candidates]
        s = grid.half_side_m

        t_in = np.zeros(candidates.size)
        t_out = np.ones(candidates.size)
        hit = np.ones(candidates.size, dtype=bool)
        for origin, delta, center in ((p0[0], p1[0] - p0[0], cx), (p0[1], p1[1] - p0[1], cy)):
            if abs(delta) < _PARALLEL_EPS:
                hit &= np.abs(origin - center) <= s
                continue
            ta = (center - s - origin) / delta
            tb = (center + s - origin) / delta
            t_in = np.maximum(t_in, np.minimum(ta, tb))
            t_out = np.minimum(t_out, np.maximum(ta, tb))

        hit &= t_in <= t_out
        if not np.any(hit):
            return False

        dz = p1[2] - p0[2]
        z_min = np.minimum(p0[2] + t_in * dz, p0[2] + t_out * dz)
        return bool(np.any(hit & (heights >= z_min)))

    @staticmethod
    def is_blocked(topology: CityTopology, uav: Sequence[float], bs: BaseStation) -> bool:
        """
        Whether any building blocks the straight link between UAV and BS

        Args:
            topology: City
            uav: UAV position (x, y, h)
            bs: Base station

        Returns:
            bool: True for NLoS, False for LoS
        """
        return Channel.segment_blocked(
            topology.buildings, (uav[0], uav[1], uav[2]), (bs.x_m, bs.y_m, bs.height_m)
        )

    @staticmethod
    def is_blocked_oracle(topology: CityTopology, uav: Sequence[float], bs: BaseStation,
                          step_m: float = 0.1) -> bool:
        """
        Sampling oracle for blockage, used to validate is_blocked

        Args:
            topology: City
            uav: UAV position (x, y, h)
            bs: Base station
            step_m: Sampling step along the 3D segment (<= 0.5 m)

        Returns:
            bool: True if any sample lies inside a building below its top
        """
        if not 0 < step_m <= 0.5:
            raise ValueError(f"Oracle step must be in (0, 0.5] m, got {step_m}")
        grid = topology.buildings
        p0 = np.array([uav[0], uav[1], uav[2]], dtype=np.float64)
        p1 = np.array([bs.x_m, bs.y_m, bs.height_m], dtype=np.float64)
        length = float(np.linalg.norm(p1 - p0))
        n = int(math.ceil(length / step_m)) + 1
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts = p0 + t * (p1 - p0)

        i = np.rint(pts[:, 0] / grid.pitch_m).astype(np.int64)
        j = np.rint(pts[:, 1] / grid.pitch_m).astype(np.int64)
        valid = (np.abs(i) <= grid.half_count) & (np.abs(j) <= grid.half_count)
        if not np.any(valid):
            return False
        pts, i, j = pts[valid], i[valid], j[valid]
        inside = (
            (np.abs(pts[:, 0] - i * grid.pitch_m) <= grid.half_side_m)
            & (np.abs(pts[:, 1] - j * grid.pitch_m) <= grid.half_side_m)
        )
        heights = grid.heights_m[i + grid.half_count, j + grid.half_count]
        return bool(np.any(inside & (pts[:, 2] <= heights)))

    @staticmethod
    def uav_antenna_gain(beamwidth_rad: float) -> float:
        """
        Main-lobe gain of the UAV's rectangular directional antenna

        Args:
            beamwidth_rad: Beamwidth omega in (0, pi)

        Returns:
            float: 16 pi / omega^2 (off-lobe gain is zero)
        """
        if not 0 < beamwidth_rad < math.pi:
            raise ValueError(f"Beamwidth must be in (0, pi), got {beamwidth_rad}")
        return 16.0 * math.pi / beamwidth_rad ** 2

    @staticmethod
    def in_beam(serving_geom: LinkGeometry, other_geom: LinkGeometry, beamwidth_rad: float) -> bool:
        """
        Whether a BS falls in the UAV beam aimed at the serving BS (inclusive edges)

        Args:
            serving_geom: Boresight link
            other_geom: Candidate link
            beamwidth_rad: Beamwidth omega

        Returns:
            bool: True if inside both angular windows
        """
        half = beamwidth_rad / 2.0
        d_elev = abs(other_geom.elev_angle_rad - serving_geom.elev_angle_rad)
        d_az = abs(SimUtils.wrap_angle(other_geom.azimuth_rad - serving_geom.azimuth_rad))
        return d_elev <= half and d_az <= half

    @staticmethod
    def bs_vertical_gain(elev_angle_rad: float, params: RadioParams) -> float:
        """
        Vertical array factor of the BS uniform linear array

        Args:
            elev_angle_rad: Angle of the UAV as seen by the BS
            params: Radio parameters (N_t, spacing, downtilt)

        Returns:
            float: sin^2(N u) / (N sin^2 u), u = pi s (sin theta - sin tilt); N at u -> 0
        """
        n = int(params.n_elements)
        u = math.pi * params.element_spacing_wl * (
            math.sin(elev_angle_rad) - math.sin(params.bs_downtilt_rad)
        )
        sin_u = math.sin(u)
        if abs(sin_u) < 1e-12:
            return float(n)
        return math.sin(n * u) ** 2 / (n * sin_u ** 2)

    @staticmethod
    def received_power(geom: LinkGeometry, blocked: bool, gain_uav: float,
                       params: RadioParams) -> float:
        """
        Received power of one link in watts

        Args:
            geom: Link geometry
            blocked: NLoS flag selecting the pathloss exponent
            gain_uav: UAV antenna gain on this link
            params: Radio parameters

        Returns:
            float: p * gain_uav * mu(phi) * c * d^-alpha, with d clamped to 1 m
        """
        alpha = params.alpha_nlos if blocked else params.alpha_los
        dist = max(geom.dist3d_m, 1.0)
        return (
            params.tx_power_w
            * gain_uav
            * Channel.bs_vertical_gain(geom.elev_angle_rad, params)
            * params.near_field_c
            * dist ** (-alpha)
        )

    @staticmethod
    def link_budget(topology: CityTopology, uav: Sequence[float], serving_idx: int,
                    params: RadioParams) -> LinkBudget:
        """
        Signal, interference and noise terms at a UAV pose

        Interferers are the BSs inside the beam aimed at the serving BS;
        each gets its own blockage test and BS-side vertical gain.

        Args:
            topology: City
            uav: UAV position (x, y, h)
            serving_idx: Index of the serving BS
            params: Radio parameters

        Returns:
            LinkBudget: Terms of the SINR ratio

        Raises:
            IndexError: If serving_idx is out of range
        """
        if not 0 <= serving_idx < topology.n_bss:
            raise IndexError(f"Serving BS index {serving_idx} out of range [0, {topology.n_bss})")

        gain_uav = Channel.uav_antenna_gain(params.beamwidth_rad)
        serving = topology.bss[serving_idx]
        serving_geom = Channel.link_geometry(uav, serving)
        serving_blocked = Channel.is_blocked(topology, uav, serving)
        signal = Channel.received_power(serving_geom, serving_blocked, gain_uav, params)

        i_los = 0.0
        i_nlos = 0.0
        n_interferers = 0
        for idx in Channel._beam_candidates(topology, uav, serving_geom, params.beamwidth_rad):
            if idx == serving_idx:
                continue
            bs = topology.bss[idx]
            geom = Channel.link_geometry(uav, bs)
            if not Channel.in_beam(serving_geom, geom, params.beamwidth_rad):
                continue
            blocked = Channel.is_blocked(topology, uav, bs)
            power = Channel.received_power(geom, blocked, gain_uav, params)
            if blocked:
                i_nlos += power
            else:
                i_los += power
            n_interferers += 1

        return LinkBudget(
            signal_w=signal,
            interference_los_w=i_los,
            interference_nlos_w=i_nlos,
            noise_w=params.noise_w,
            serving_blocked=serving_blocked,
            n_interferers=n_interferers,
        )

    @staticmethod
    def _beam_candidates(topology: CityTopology, uav: Sequence[float],
                         serving_geom: LinkGeometry, beamwidth_rad: float) -> np.ndarray:
        # Vectorized prefilter with a small slack; exact membership is rechecked per link
        dx = topology.bs_xy[:, 0] - uav[0]
        dy = topology.bs_xy[:, 1] - uav[1]
        r = np.hypot(dx, dy)
        elev = np.arctan2(uav[2] - topology.bs_heights, r)
        az = np.arctan2(dy, dx)
        d_az = np.abs((az - serving_geom.azimuth_rad + np.pi) % (2 * np.pi) - np.pi)
        half = beamwidth_rad / 2.0 + 1e-9
        mask = (np.abs(elev - serving_geom.elev_angle_rad) <= half) & (d_az <= half)
        return np.flatnonzero(mask)

    @staticmethod
    def sinr(topology: CityTopology, uav: Sequence[float], serving_idx: int,
             params: RadioParams) -> float:
        """
        Linear SINR of the serving link at a UAV pose

        Args:
            topology: City
            uav: UAV position (x, y, h)
            serving_idx: Index of the serving BS
            params: Radio parameters

        Returns:
            float: S / (I_L + I_N + noise)
        """
        budget = Channel.link_budget(topology, uav, serving_idx, params)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "Pose (%.1f, %.1f, %.1f) -> BS %d: %s serving link, %d interferers in beam",
                uav[0], uav[1], uav[2], serving_idx,
                "blocked" if budget.serving_blocked else "clear", budget.n_interferers,
            )
        return budget.sinr

    @staticmethod
    def spectral_efficiency(sinr_linear: float) -> float:
        """
        Shannon spectral efficiency

        Args:
            sinr_linear: Linear SINR (>= 0)

        Returns:
            float: log2(1 + SINR) in bits/s/Hz
        """
        if sinr_linear < 0:
            raise ValueError(f"SINR must be non-negative, got {sinr_linear}")
        return math.log2(1.0 + sinr_linear)
