"""
Environment Module for skyheight
The Markov environment of one UAV flight: kinematics along the fixed path,
height actions, nearest-BS association, observations and rewards
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum, IntEnum
from typing import Dict, Optional, Tuple

import numpy as np

from ..utils import ConfigError, EpisodeFinishedError, SimUtils
from .radio import Channel, RadioParams
from .topology import CityTopology

logger = logging.getLogger(__name__)


class Action(IntEnum):
    """Height actions"""

    UP = 0
    DOWN = 1
    STAY = 2


class StateVariant(str, Enum):
    """Observation compositions"""

    BASIC = "basic"
    BS = "bs"
    BUILD = "build"
    COMPLETE = "complete"

    @property
    def uses_bs_density(self) -> bool:
        return self in (StateVariant.BS, StateVariant.COMPLETE)

    @property
    def uses_build_density(self) -> bool:
        return self in (StateVariant.BUILD, StateVariant.COMPLETE)


@dataclass
class EpisodeConfig:
    """Flight and observation constants of one episode"""

    steps_per_episode: int = 100
    speed_mps: float = 10.0
    dt_s: float = 1.0
    travel_m: float = 1000.0
    h_init_m: float = 100.0
    h_min_m: float = 20.0
    h_max_m: float = 200.0
    dh_m: float = 7.0
    k_nearest: int = 3
    genie_grid_m: float = 1.0
    sinr_db_low: float = -20.0
    sinr_db_high: float = 60.0
    distance_scale_m: float = 2000.0
    bs_density_max_km2: float = 10.0
    build_density_max_km2: float = 1000.0

    def validate(self) -> None:
        if self.steps_per_episode < 1:
            raise ConfigError(f"steps_per_episode must be >= 1, got {self.steps_per_episode}")
        travelled = self.speed_mps * self.dt_s * self.steps_per_episode
        if not math.isclose(travelled, self.travel_m, rel_tol=1e-9):
            raise ConfigError(
                f"speed * dt * steps = {travelled} m does not match travel_m = {self.travel_m}"
            )
        if not self.h_min_m <= self.h_init_m <= self.h_max_m:
            raise ConfigError(
                f"Need h_min <= h_init <= h_max, got {self.h_min_m}, {self.h_init_m}, {self.h_max_m}"
            )
        if self.h_min_m <= 0:
            raise ConfigError(f"h_min_m must be positive, got {self.h_min_m}")
        if self.dh_m <= 0 or self.genie_grid_m <= 0:
            raise ConfigError("dh_m and genie_grid_m must be positive")
        if self.k_nearest < 1:
            raise ConfigError(f"k_nearest must be >= 1, got {self.k_nearest}")

    @property
    def x_start_m(self) -> float:
        return -self.travel_m / 2.0

    def x_at(self, step_idx: int) -> float:
        return self.x_start_m + step_idx * self.speed_mps * self.dt_s

    def observation_size(self, variant: StateVariant) -> int:
        return 2 + self.k_nearest + int(variant.uses_bs_density) + int(variant.uses_build_density)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "EpisodeConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown episode keys: {sorted(unknown)}")
        values = dict(data)
        for key in ("steps_per_episode", "k_nearest"):
            if key in values:
                values[key] = int(values[key])
        config = cls(**values)
        config.validate()
        return config


@dataclass(frozen=True)
class EnvState:
    """UAV kinematic state within an episode"""

    step_idx: int
    x_m: float
    h_m: float
    serving_idx: int
    sinr_db: float


@dataclass(frozen=True)
class Observation:
    """Normalized state vector handed to a policy"""

    variant: StateVariant
    vector: np.ndarray


class UavEnvironment:
    """
    UAV flight over a fixed topology

    SINR evaluations are memoized per pose (x, h): the topology is immutable,
    so a cached value is identical to a fresh evaluation.
    """

    def __init__(self, topology: CityTopology, params: RadioParams,
                 config: Optional[EpisodeConfig] = None, channel=Channel,
                 path_margin_m: float = 0.0):
        """
        Initialize the environment

        Args:
            topology: City shared by all episodes
            params: Radio parameters
            config: Episode constants (defaults if None)
            channel: Object exposing sinr(topology, uav, serving_idx, params)
            path_margin_m: Required clearance between the path and the area edge
        """
        self.topology = topology
        self.params = params
        self.config = config or EpisodeConfig()
        self.config.validate()
        self.channel = channel
        self.path_margin_m = path_margin_m
        self._sinr_cache: Dict[Tuple[float, float], Tuple[int, float]] = {}

    def evaluate_pose(self, x_m: float, h_m: float) -> Tuple[int, float]:
        """
        Serving BS and linear SINR at a pose on the path

        Args:
            x_m: Position along the path (y = 0)
            h_m: UAV height

        Returns:
            Tuple[int, float]: (serving BS index, linear SINR)
        """
        key = (float(x_m), float(h_m))
        cached = self._sinr_cache.get(key)
        if cached is None:
            serving = self.topology.nearest_bs(x_m, 0.0)
            value = self.channel.sinr(self.topology, (x_m, 0.0, h_m), serving, self.params)
            cached = (serving, float(value))
            self._sinr_cache[key] = cached
        return cached

    def reset(self, rng: Optional[np.random.Generator] = None) -> EnvState:
        """
        Start an episode at the path origin and the initial height

        Args:
            rng: Environment substream (the reset pose is deterministic)

        Returns:
            EnvState: Initial state

        Raises:
            ValueError: If the topology has no BSs or the path leaves the area
        """
        if self.topology.n_bss == 0:
            raise ValueError("Cannot reset: topology has no base stations")
        cfg = self.config
        self.topology.area.check_path(cfg.x_start_m, cfg.x_at(cfg.steps_per_episode), self.path_margin_m)
        x = cfg.x_at(0)
        serving, sinr = self.evaluate_pose(x, cfg.h_init_m)
        return EnvState(step_idx=0, x_m=x, h_m=cfg.h_init_m, serving_idx=serving,
                        sinr_db=SimUtils.linear_to_db(sinr))

    def next_height(self, h_m: float, action: int) -> float:
        """Height after an action, clamped to the legal range"""
        cfg = self.config
        action = Action(action)
        if action == Action.UP:
            h_m = h_m + cfg.dh_m
        elif action == Action.DOWN:
            h_m = h_m - cfg.dh_m
        return min(max(h_m, cfg.h_min_m), cfg.h_max_m)

    def step(self, env: EnvState, action: int) -> Tuple[EnvState, float, bool]:
        """
        Apply a height action and advance one timestep

        Args:
            env: Current state
            action: 0 up, 1 down, 2 stay

        Returns:
            Tuple[EnvState, float, bool]: (next state, reward in bits/s/Hz, done)

        Raises:
            EpisodeFinishedError: If the episode is already done
        """
        cfg = self.config
        if env.step_idx >= cfg.steps_per_episode:
            raise EpisodeFinishedError(
                f"Episode finished after {cfg.steps_per_episode} steps; call reset()"
            )
        step_idx = env.step_idx + 1
        x = cfg.x_at(step_idx)
        h = self.next_height(env.h_m, action)
        serving, sinr = self.evaluate_pose(x, h)
        reward = Channel.spectral_efficiency(sinr)
        next_env = EnvState(step_idx=step_idx, x_m=x, h_m=h, serving_idx=serving,
                            sinr_db=SimUtils.linear_to_db(sinr))
        return next_env, reward, step_idx == cfg.steps_per_episode

    def observe(self, env: EnvState, variant: StateVariant) -> Observation:
        """
        Build the normalized observation of a state

        Args:
            env: Current state
            variant: Observation composition

        Returns:
            Observation: [sinr, h, k nearest distances] plus density features
        """
        cfg = self.config
        variant = StateVariant(variant)
        features = [
            SimUtils.normalize_clipped(env.sinr_db, cfg.sinr_db_low, cfg.sinr_db_high),
            env.h_m / cfg.h_max_m,
        ]
        distances = self.topology.nearest_distances(env.x_m, 0.0, cfg.k_nearest)
        normalized = np.minimum(distances / cfg.distance_scale_m, 1.0)
        features.extend(float(d) for d in normalized)
        features.extend([1.0] * (cfg.k_nearest - len(normalized)))
        if variant.uses_bs_density:
            features.append(self.topology.bs_density_km2 / cfg.bs_density_max_km2)
        if variant.uses_build_density:
            features.append(self.topology.build_density_km2 / cfg.build_density_max_km2)
        return Observation(variant=variant, vector=np.asarray(features, dtype=np.float64))

    def genie_heights(self) -> np.ndarray:
        """Height grid searched by the genie"""
        cfg = self.config
        count = int(math.floor((cfg.h_max_m - cfg.h_min_m) / cfg.genie_grid_m + 1e-9)) + 1
        return cfg.h_min_m + cfg.genie_grid_m * np.arange(count)

    def best_height(self, env: EnvState) -> float:
        """
        Height with the highest SINR at the next position

        Ties prefer the current height, then the lowest height.
        """
        x_next = self.config.x_at(env.step_idx + 1)
        heights = self.genie_heights()
        values = np.array([self.evaluate_pose(x_next, float(h))[1] for h in heights])
        best = float(values.max())
        if self.evaluate_pose(x_next, env.h_m)[1] >= best:
            return env.h_m
        return float(heights[int(np.argmax(values))])

    def genie_action(self, env: EnvState) -> int:
        """
        Move toward the height of maximum SINR at the next position

        Args:
            env: Current state (not done)

        Returns:
            int: Action.UP, Action.DOWN or Action.STAY
        """
        if env.step_idx >= self.config.steps_per_episode:
            raise EpisodeFinishedError("Genie queried after the episode finished")
        target = self.best_height(env)
        if target > env.h_m:
            return int(Action.UP)
        if target < env.h_m:
            return int(Action.DOWN)
        return int(Action.STAY)
