"""
World module for skyheight
Contains the city topology, the radio channel and the flight environment
"""

from .topology import AreaSpec, BaseStation, BuildingGrid, CityGenerator, CityTopology, TopologyParams
from .radio import Channel, LinkBudget, LinkGeometry, RadioParams
from .environment import Action, EnvState, EpisodeConfig, Observation, StateVariant, UavEnvironment

__all__ = [
    "AreaSpec",
    "BaseStation",
    "BuildingGrid",
    "CityGenerator",
    "CityTopology",
    "TopologyParams",
    "Channel",
    "LinkBudget",
    "LinkGeometry",
    "RadioParams",
    "Action",
    "EnvState",
    "EpisodeConfig",
    "Observation",
    "StateVariant",
    "UavEnvironment",
]
