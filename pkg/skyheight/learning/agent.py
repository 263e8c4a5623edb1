"""
Agent Module for skyheight
The DQN height controller (epsilon-greedy, experience replay, per-step
training) and the Constant, Random and Genie baselines
"""

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..utils import ConfigError
from ..world.environment import Action, EnvState, Observation, StateVariant, UavEnvironment
from .neural import QNetwork, TargetNetwork, Transition, TransitionBatch

logger = logging.getLogger(__name__)

N_ACTIONS = len(Action)


@dataclass
class AgentConfig:
    """Learning hyper-parameters of the DQN agent"""

    hidden_sizes: Tuple[int, ...] = (64, 64)
    learning_rate: float = 5e-4
    gamma: float = 0.95
    batch_size: int = 32
    buffer_capacity: int = 50000
    min_fill: int = 32
    target_sync_every: int = 500
    reward_scale: float = 0.1
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_floor: float = 0.001
    constant_height_m: float = 100.0

    def validate(self) -> None:
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError(f"Invalid hidden_sizes {self.hidden_sizes}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("Need 1 <= batch_size <= buffer_capacity")
        if self.min_fill < self.batch_size:
            raise ConfigError(f"min_fill ({self.min_fill}) must be >= batch_size ({self.batch_size})")
        if self.target_sync_every < 1:
            raise ConfigError(f"target_sync_every must be >= 1, got {self.target_sync_every}")
        if self.reward_scale <= 0:
            raise ConfigError(f"reward_scale must be positive, got {self.reward_scale}")
        if not 0 < self.epsilon_floor <= self.epsilon_start <= 1:
            raise ConfigError("Need 0 < epsilon_floor <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["hidden_sizes"] = list(self.hidden_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "AgentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown agent keys: {sorted(unknown)}")
        values = dict(data)
        if "hidden_sizes" in values:
            values["hidden_sizes"] = tuple(int(h) for h in values["hidden_sizes"])
        for key in ("batch_size", "buffer_capacity", "min_fill", "target_sync_every"):
            if key in values:
                values[key] = int(values[key])
        config = cls(**values)
        config.validate()
        return config


class ReplayBuffer:
    """
    Ring storage of transitions with uniform sampling
    """

    def __init__(self, capacity: int, state_dim: int, min_fill: int = 32):
        if capacity < 1:
            raise ValueError(f"Capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.min_fill = int(min_fill)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.insertions = 0

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    @property
    def ready(self) -> bool:
        return len(self) >= self.min_fill

    def append(self, transition: Transition) -> None:
        """Store a transition, evicting the oldest at capacity"""
        slot = self.insertions % self.capacity
        self.states[slot] = transition.state
        self.actions[slot] = transition.action
        self.rewards[slot] = transition.reward
        self.next_states[slot] = transition.next_state
        self.dones[slot] = transition.done
        self.insertions += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """
        Uniform sample without replacement

        Raises:
            ValueError: If fewer than min_fill or batch_size transitions are stored
        """
        size = len(self)
        if size < self.min_fill or size < batch_size:
            raise ValueError(f"Cannot sample {batch_size} from a buffer of {size} (min fill {self.min_fill})")
        idx = rng.choice(size, size=batch_size, replace=False)
        return TransitionBatch(
            states=self.states[idx].copy(),
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            next_states=self.next_states[idx].copy(),
            dones=self.dones[idx].copy(),
        )


class EpsilonSchedule:
    """Multiplicative epsilon decay with a floor"""

    def __init__(self, start: float = 1.0, decay: float = 0.99, floor: float = 0.001):
        self.value = float(start)
        self.decay = float(decay)
        self.floor = float(floor)
        self.steps = 0

    def step(self) -> float:
        self.value = max(self.floor, self.value * self.decay)
        self.steps += 1
        return self.value


@dataclass(frozen=True)
class EnvContext:
    """What a policy may consult besides the observation"""

    environment: UavEnvironment
    state: EnvState


class Policy:
    """
    Base class of height policies
    """

    name = "policy"
    learns = False

    def __init__(self, variant: Optional[StateVariant] = None):
        self.variant = StateVariant(variant) if variant is not None else StateVariant.BASIC

    @property
    def variant_label(self) -> str:
        return self.variant.value if self.learns else "none"

    def select_action(self, observation: Observation, context: EnvContext,
                      rng: np.random.Generator) -> int:
        raise NotImplementedError

    def record_and_train(self, transition: Transition) -> Optional[float]:
        """Baselines do not learn"""
        return None


class ConstantPolicy(Policy):
    """Hold a fixed height (the initial height by default)"""

    name = "constant"

    def __init__(self, height_m: float = 100.0):
        super().__init__()
        self.height_m = height_m

    def select_action(self, observation, context, rng):
        h = context.state.h_m
        if h < self.height_m:
            return int(Action.UP)
        if h > self.height_m:
            return int(Action.DOWN)
        return int(Action.STAY)


class RandomPolicy(Policy):
    """Uniformly random action every step"""

    name = "random"

    def select_action(self, observation, context, rng):
        return int(rng.integers(N_ACTIONS))


class GeniePolicy(Policy):
    """Step toward the best next-step height found by exhaustive search"""

    name = "genie"

    def select_action(self, observation, context, rng):
        return context.environment.genie_action(context.state)


class DQNPolicy(Policy):
    """
    Deep Q-learning height controller
    """

    name = "dqn"
    learns = True

    def __init__(self, variant: StateVariant, state_dim: int, config: AgentConfig,
                 init_rng: np.random.Generator, replay_rng: np.random.Generator):
        """
        Initialize the agent

        Args:
            variant: Observation composition
            state_dim: Observation length
            config: Hyper-parameters
            init_rng: Substream for weight initialization
            replay_rng: Substream for replay sampling
        """
        super().__init__(variant)
        self.config = config
        dims = [state_dim, *config.hidden_sizes, N_ACTIONS]
        self.network = QNetwork.init(dims, init_rng)
        self.target = TargetNetwork(self.network)
        self.buffer = ReplayBuffer(config.buffer_capacity, state_dim, config.min_fill)
        self.epsilon = EpsilonSchedule(config.epsilon_start, config.epsilon_decay, config.epsilon_floor)
        self.replay_rng = replay_rng
        self.train_steps = 0
        self.last_loss: Optional[float] = None

    def greedy_action(self, vector: np.ndarray) -> int:
        """argmax Q (lowest action index on ties)"""
        return int(np.argmax(self.network.forward(vector)))

    def select_action(self, observation, context, rng, epsilon: Optional[float] = None):
        eps = self.epsilon.value if epsilon is None else epsilon
        if rng.random() < eps:
            return int(rng.integers(N_ACTIONS))
        return self.greedy_action(observation.vector)

    def record_and_train(self, transition: Transition) -> Optional[float]:
        """
        Store a transition, train on one batch once the buffer is warm, decay epsilon

        The stored reward is the spectral efficiency times reward_scale.

        Args:
            transition: Latest transition

        Returns:
            Optional[float]: Batch loss, or None if no training happened
        """
        cfg = self.config
        self.buffer.append(replace(transition, reward=transition.reward * cfg.reward_scale))
        loss = None
        if self.buffer.ready:
            batch = self.buffer.sample(cfg.batch_size, self.replay_rng)
            loss, grads = self.network.td_loss_and_grads(self.target, batch, cfg.gamma)
            self.network.optimizer_step(grads, cfg.learning_rate)
            self.train_steps += 1
            if self.train_steps % cfg.target_sync_every == 0:
                self.target.sync_target(self.network)
            self.last_loss = loss
        self.epsilon.step()
        return loss

    def save_checkpoint(self, path: Union[str, Path]) -> None:
        """Write network, target and schedule state as one JSON document"""
        document = {
            "header": {
                "variant": self.variant.value,
                "epsilon": self.epsilon.value,
                "epsilon_steps": self.epsilon.steps,
                "train_steps": self.train_steps,
                "buffer_size": len(self.buffer),
                "buffer_capacity": self.buffer.capacity,
                "target_sync_count": self.target.sync_count,
            },
            "network": self.network.to_dict(),
            "target": [p.ravel().tolist() for p in self.target.params],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f)
        logger.debug(f"Saved checkpoint to {path} after {self.train_steps} training steps")

    @classmethod
    def load_checkpoint(cls, path: Union[str, Path], config: AgentConfig,
                        replay_rng: np.random.Generator) -> "DQNPolicy":
        """
        Restore an agent from a checkpoint (the replay buffer starts empty)
        """
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
        header = document["header"]
        network = QNetwork.from_dict(document["network"])
        policy = cls(StateVariant(header["variant"]), network.input_dim, config,
                     np.random.default_rng(0), replay_rng)
        policy.network = network
        policy.target = TargetNetwork(network)
        for dst, src in zip(policy.target.params, document["target"]):
            dst[...] = np.asarray(src, dtype=np.float64).reshape(dst.shape)
        policy.target.sync_count = int(header["target_sync_count"])
        policy.epsilon.value = float(header["epsilon"])
        policy.epsilon.steps = int(header["epsilon_steps"])
        policy.train_steps = int(header["train_steps"])
        return policy


@dataclass(frozen=True)
class StepRecord:
    """One logged timestep"""

    step: int
    x_m: float
    h_m: float
    action: int
    sinr_db: float
    se_bits_hz: float


@dataclass
class EpisodeLog:
    """Result of one episode, labeled with its cell"""

    episode: int
    throughput_bits_hz: float
    mean_height_m: float
    steps: Optional[List[StepRecord]] = None
    cell_id: str = ""
    bs_density: float = 0.0
    build_density: float = 0.0
    policy: str = ""
    variant: str = ""
    seed: int = 0
    replicate: int = 0


def run_episode(policy: Policy, environment: UavEnvironment, rng: np.random.Generator,
                episode: int = 1, keep_steps: bool = True,
                env_rng: Optional[np.random.Generator] = None) -> EpisodeLog:
    """
    Fly one episode, training the policy online if it learns

    Args:
        policy: Height policy
        environment: Environment over the cell's topology
        rng: Exploration substream
        episode: 1-based episode index
        keep_steps: Keep per-step records
        env_rng: Environment substream

    Returns:
        EpisodeLog: Throughput (sum of per-step SE) and optional step records
    """
    state = environment.reset(env_rng)
    observation = environment.observe(state, policy.variant)
    records: List[StepRecord] = []
    se_values: List[float] = []
    heights: List[float] = []
    done = False

    while not done:
        action = policy.select_action(observation, EnvContext(environment, state), rng)
        next_state, reward, done = environment.step(state, action)
        next_observation = environment.observe(next_state, policy.variant)
        if policy.learns:
            policy.record_and_train(Transition(observation.vector, action, reward,
                                               next_observation.vector, done))
        se_values.append(reward)
        heights.append(next_state.h_m)
        if keep_steps:
            records.append(StepRecord(next_state.step_idx, next_state.x_m, next_state.h_m,
                                      action, next_state.sinr_db, reward))
        state, observation = next_state, next_observation

    return EpisodeLog(
        episode=episode,
        throughput_bits_hz=float(sum(se_values)),
        mean_height_m=float(np.mean(heights)),
        steps=records if keep_steps else None,
        variant=policy.variant_label,
        policy=policy.name,
    )


def make_policy(name: str, variant: Optional[Union[str, StateVariant]], state_dim: int,
                config: AgentConfig, init_rng: np.random.Generator,
                replay_rng: np.random.Generator) -> Policy:
    """
    Build a policy by name

    Args:
        name: "constant", "random", "genie" or "dqn"
        variant: Observation composition (DQN only)
        state_dim: Observation length for the variant
        config: Agent hyper-parameters
        init_rng: Weight initialization substream
        replay_rng: Replay sampling substream

    Returns:
        Policy: The policy
    """
    name = name.lower()
    if name == "constant":
        return ConstantPolicy(config.constant_height_m)
    if name == "random":
        return RandomPolicy()
    if name == "genie":
        return GeniePolicy()
    if name == "dqn":
        return DQNPolicy(StateVariant(variant or StateVariant.BASIC), state_dim, config,
                         init_rng, replay_rng)
    raise ValueError(f"Unknown policy '{name}'")
