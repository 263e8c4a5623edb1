"""
skyheight - Height control of a cellular-connected UAV with deep Q-learning
Deterministic city, radio and flight simulator with DQN and baseline policies

Organized modules:
- world: city topology, radio channel and the flight environment
- learning: numpy Q-network, DQN agent and baseline policies
- experiments: configuration, density sweeps and the command-line interface
- utils: seeding, conversions, logging and error types
"""

__version__ = "1.0.0"

# Import submodules
from . import world
from . import learning
from . import experiments

# Import main classes
from .world.topology import CityGenerator, CityTopology, TopologyParams
from .world.radio import Channel, RadioParams
from .world.environment import Action, EpisodeConfig, StateVariant, UavEnvironment
from .learning.neural import QNetwork, TargetNetwork, gradient_check
from .learning.agent import AgentConfig, DQNPolicy, make_policy, run_episode
from .experiments.config import ExperimentConfig
from .experiments.harness import ExperimentHarness
from .utils import SimUtils

__all__ = [
    # Main classes
    "CityGenerator",
    "CityTopology",
    "TopologyParams",
    "Channel",
    "RadioParams",
    "Action",
    "EpisodeConfig",
    "StateVariant",
    "UavEnvironment",
    "QNetwork",
    "TargetNetwork",
    "gradient_check",
    "AgentConfig",
    "DQNPolicy",
    "make_policy",
    "run_episode",
    "ExperimentConfig",
    "ExperimentHarness",
    "SimUtils",

    # Submodules
    "world",
    "learning",
    "experiments",
    "utils",
]
