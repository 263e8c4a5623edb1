"""
Learning module for skyheight
Contains the numpy Q-network, the DQN agent and the baseline policies
"""

from .neural import QNetwork, TargetNetwork, Transition, TransitionBatch, gradient_check
from .agent import (
    AgentConfig,
    ConstantPolicy,
    DQNPolicy,
    EpisodeLog,
    EpsilonSchedule,
    GeniePolicy,
    Policy,
    RandomPolicy,
    ReplayBuffer,
    StepRecord,
    make_policy,
    run_episode,
)

__all__ = [
    "QNetwork",
    "TargetNetwork",
    "Transition",
    "TransitionBatch",
    "gradient_check",
    "AgentConfig",
    "ConstantPolicy",
    "DQNPolicy",
    "EpisodeLog",
    "EpsilonSchedule",
    "GeniePolicy",
    "Policy",
    "RandomPolicy",
    "ReplayBuffer",
    "StepRecord",
    "make_policy",
    "run_episode",
]
