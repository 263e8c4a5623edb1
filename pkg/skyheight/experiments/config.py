"""
Experiment Configuration Module for skyheight
JSON configuration document, environment overrides and density sweep legs
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv

from ..learning.agent import AgentConfig
from ..utils import ConfigError
from ..world.environment import EpisodeConfig, StateVariant
from ..world.radio import RadioParams
from ..world.topology import TopologyParams

POLICIES = ("constant", "random", "genie", "dqn")

ENV_OVERRIDES = {
    "SKYHEIGHT_SEED": ("master_seed", int),
    "SKYHEIGHT_JOBS": ("jobs", int),
    "SKYHEIGHT_EPISODES": ("episodes", int),
    "SKYHEIGHT_OUT": ("out_dir", str),
}


@dataclass
class ExperimentConfig:
    """Everything a sweep depends on"""

    bs_densities_km2: List[float] = field(default_factory=lambda: [1.0, 5.0, 10.0])
    build_densities_km2: List[float] = field(default_factory=lambda: [100.0, 500.0, 1000.0])
    bs_median_km2: float = 5.0
    build_median_km2: float = 500.0
    episodes: int = 300
    policies: List[str] = field(default_factory=lambda: list(POLICIES))
    variants: List[str] = field(default_factory=lambda: [v.value for v in StateVariant])
    master_seed: int = 0
    replicates: int = 5
    summary_window: Tuple[int, int] = (250, 300)
    trace_episodes: Optional[List[int]] = None
    jobs: int = 1
    out_dir: str = "results"
    topology: TopologyParams = field(default_factory=TopologyParams)
    radio: RadioParams = field(default_factory=RadioParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def validate(self) -> None:
        """
        Check the configuration

        Raises:
            ConfigError: On any invalid value
        """
        if not self.bs_densities_km2 or not self.build_densities_km2:
            raise ConfigError("Density lists must be non-empty")
        if any(d <= 0 for d in self.bs_densities_km2 + self.build_densities_km2):
            raise ConfigError("Densities must be positive")
        if self.bs_median_km2 <= 0 or self.build_median_km2 <= 0:
            raise ConfigError("Fixed (median) densities must be positive")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown:
            raise ConfigError(f"Unknown policies {unknown}; choose from {list(POLICIES)}")
        for variant in self.variants:
            try:
                StateVariant(variant)
            except ValueError:
                raise ConfigError(f"Unknown state variant '{variant}'") from None
        if "dqn" in self.policies and not self.variants:
            raise ConfigError("The dqn policy needs at least one state variant")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        start, end = self.summary_window
        if not 1 <= start <= end:
            raise ConfigError(f"Invalid summary window {self.summary_window}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        self.topology.validate()
        self.radio.validate()
        self.episode.validate()
        self.agent.validate()

    def window(self) -> Tuple[int, int]:
        """Summary window clipped to the configured episode count"""
        start, end = self.summary_window
        end = min(end, self.episodes)
        return min(start, end), end

    def traced_episodes(self) -> List[int]:
        """Episodes whose per-step records are kept (first and last by default)"""
        if self.trace_episodes is None:
            return sorted({1, self.episodes})
        return sorted({e for e in self.trace_episodes if 1 <= e <= self.episodes})

    def density_cells(self) -> List[Tuple[float, float]]:
        """
        Density pairs of both sweep legs, the shared median cell listed once

        The BS leg varies BS density with buildings at their median; the
        building leg varies building density with BSs at their median.
        """
        cells: List[Tuple[float, float]] = []
        for bs in self.bs_densities_km2:
            cells.append((float(bs), float(self.build_median_km2)))
        for build in self.build_densities_km2:
            cell = (float(self.bs_median_km2), float(build))
            if cell not in cells:
                cells.append(cell)
        return cells

    def to_dict(self) -> Dict:
        return {
            "bs_densities_km2": list(self.bs_densities_km2),
            "build_densities_km2": list(self.build_densities_km2),
            "bs_median_km2": self.bs_median_km2,
            "build_median_km2": self.build_median_km2,
            "episodes": self.episodes,
            "policies": list(self.policies),
            "variants": list(self.variants),
            "master_seed": self.master_seed,
            "replicates": self.replicates,
            "summary_window": list(self.summary_window),
            "trace_episodes": self.trace_episodes,
            "jobs": self.jobs,
            "out_dir": self.out_dir,
            "topology": self.topology.to_dict(),
            "radio": self.radio.to_dict(),
            "episode": self.episode.to_dict(),
            "agent": self.agent.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        """
        Build a configuration from a JSON-like dictionary

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        if not isinstance(data, dict):
            raise ConfigError("Configuration document must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        values = dict(data)
        try:
            blocks = {
                "topology": TopologyParams.from_dict(values.pop("topology", {})),
                "radio": RadioParams.from_dict(values.pop("radio", {})),
                "episode": EpisodeConfig.from_dict(values.pop("episode", {})),
                "agent": AgentConfig.from_dict(values.pop("agent", {})),
            }
            if "summary_window" in values:
                start, end = values["summary_window"]
                values["summary_window"] = (int(start), int(end))
            for key in ("episodes", "master_seed", "replicates", "jobs"):
                if key in values:
                    values[key] = int(values[key])
            config = cls(**values, **blocks)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed configuration: {e}") from e
        config.validate()
        return config

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, use_env: bool = True) -> "ExperimentConfig":
        """
        Load defaults, then the JSON file, then environment overrides

        Args:
            path: JSON configuration file (defaults only if None)
            use_env: Apply SKYHEIGHT_* variables (a .env file is loaded first)

        Returns:
            ExperimentConfig: Validated configuration
        """
        data: Dict = {}
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
            except OSError as e:
                raise ConfigError(f"Cannot read config {path}: {e}") from e
            except json.JSONDecodeError as e:
                raise ConfigError(f"Malformed config {path}: {e}") from e
        config = cls.from_dict(data)
        if use_env:
            config.apply_env()
        return config

    def apply_env(self) -> None:
        """Apply SKYHEIGHT_* environment variables (loading .env if present)"""
        load_dotenv()
        for var, (attr, cast) in ENV_OVERRIDES.items():
            raw = os.environ.get(var)
            if raw is None or raw == "":
                continue
            try:
                setattr(self, attr, cast(raw))
            except ValueError:
                raise ConfigError(f"Invalid value for {var}: {raw!r}") from None
        self.validate()
