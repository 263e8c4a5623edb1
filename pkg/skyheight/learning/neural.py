"""
Neural Module for skyheight
Feedforward Q-value approximator with manual backpropagation and the
Adam optimizer, in double precision numpy
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class Transition:
    """One replay record"""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class TransitionBatch:
    """Stacked transitions"""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def stack(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        return cls(
            states=np.array([t.state for t in transitions], dtype=np.float64),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.array([t.next_state for t in transitions], dtype=np.float64),
            dones=np.array([t.done for t in transitions], dtype=bool),
        )


def _forward_pass(params: Sequence[np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    # params alternate W, b; hidden layers use ReLU, the output layer is linear
    activations = [x]
    pre_activations = []
    a = x
    n_layers = len(params) // 2
    for layer in range(n_layers):
        z = a @ params[2 * layer] + params[2 * layer + 1]
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if layer < n_layers - 1 else z
        activations.append(a)
    return a, pre_activations + activations


class QNetwork:
    """
    Multilayer perceptron mapping an observation to one Q-value per action
    """

    def __init__(self, dims: Sequence[int], params: List[np.ndarray],
                 moments_m: Optional[List[np.ndarray]] = None,
                 moments_v: Optional[List[np.ndarray]] = None, step: int = 0):
        """
        Initialize from explicit parameters

        Args:
            dims: Layer sizes [in, hidden..., out]
            params: [W0, b0, W1, b1, ...] with W of shape (fan_in, fan_out)
            moments_m: Adam first moments (zeros if None)
            moments_v: Adam second moments (zeros if None)
            step: Adam step counter
        """
        self.dims = [int(d) for d in dims]
        if len(params) != 2 * (len(self.dims) - 1):
            raise ValueError(f"Expected {2 * (len(self.dims) - 1)} parameter arrays, got {len(params)}")
        for layer, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            if params[2 * layer].shape != (fan_in, fan_out) or params[2 * layer + 1].shape != (fan_out,):
                raise ValueError(f"Parameter shapes of layer {layer} do not match dims {self.dims}")
        self.params = [np.array(p, dtype=np.float64) for p in params]
        self.m = [np.array(p, dtype=np.float64) for p in moments_m] if moments_m else [np.zeros_like(p) for p in self.params]
        self.v = [np.array(p, dtype=np.float64) for p in moments_v] if moments_v else [np.zeros_like(p) for p in self.params]
        self.step = int(step)

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator) -> "QNetwork":
        """
        Glorot-uniform weights, zero biases, zero moments

        Args:
            dims: Layer sizes, e.g. [5, 64, 64, 3]
            rng: Seeded generator

        Returns:
            QNetwork: Fresh network
        """
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise ValueError(f"Invalid layer dims {list(dims)}")
        params = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(dims, params)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def n_actions(self) -> int:
        return self.dims[-1]

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """
        Q-values for one observation (shape (in,)) or a batch (shape (B, in))

        Raises:
            ValueError: On input dimension mismatch
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim or x.ndim not in (1, 2):
            raise ValueError(f"Expected input of size {self.input_dim}, got shape {x.shape}")
        out, _ = _forward_pass(self.params, x)
        return out

    def td_loss_and_grads(self, target: "TargetNetwork",
                          batch: Union[TransitionBatch, Sequence[Transition]],
                          gamma: float) -> Tuple[float, List[np.ndarray]]:
        """
        Mean squared TD error and its gradient w.r.t. the online parameters

        Targets are r + gamma * max_a' Q_target(s', a'), or r for terminal
        transitions; they are constants for differentiation.

        Args:
            target: Target network
            batch: Transitions
            gamma: Discount factor

        Returns:
            Tuple[float, List[np.ndarray]]: (loss, gradients aligned with params)
        """
        if not isinstance(batch, TransitionBatch):
            batch = TransitionBatch.stack(list(batch))
        if len(batch) == 0:
            raise ValueError("Empty batch")

        y = self.td_targets(target, batch, gamma)
        return self._loss_and_grads(batch.states, batch.actions, y)

    @staticmethod
    def td_targets(target: "TargetNetwork", batch: TransitionBatch, gamma: float) -> np.ndarray:
        next_q = target.forward(batch.next_states).max(axis=1)
        return batch.rewards + gamma * np.where(batch.dones, 0.0, next_q)

    def _loss_and_grads(self, states: np.ndarray, actions: np.ndarray,
                        y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
        n_layers = len(self.dims) - 1
        q, cache = _forward_pass(self.params, states)
        pre = cache[:n_layers]
        acts = cache[n_layers:]

        rows = np.arange(len(actions))
        err = q[rows, actions] - y
        loss = float(np.mean(err ** 2))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * err / len(actions)

        grads: List[Optional[np.ndarray]] = [None] * len(self.params)
        for layer in reversed(range(n_layers)):
            grads[2 * layer] = acts[layer].T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.params[2 * layer].T) * (pre[layer - 1] > 0)
        return loss, grads

    def optimizer_step(self, grads: Sequence[np.ndarray], lr: float) -> None:
        """
        One Adam update with bias correction

        Args:
            grads: Gradients aligned with params
            lr: Learning rate
        """
        if len(grads) != len(self.params) or any(g.shape != p.shape for g, p in zip(grads, self.params)):
            raise ValueError("Gradient shapes do not match parameters")
        self.step += 1
        correction1 = 1.0 - ADAM_BETA1 ** self.step
        correction2 = 1.0 - ADAM_BETA2 ** self.step
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)

    def loss_and_pattern(self, states: np.ndarray, actions: np.ndarray,
                         y: np.ndarray) -> Tuple[float, np.ndarray]:
        """Squared TD loss and the ReLU on/off pattern of all hidden units"""
        n_layers = len(self.dims) - 1
        q, cache = _forward_pass(self.params, states)
        loss = float(np.mean((q[np.arange(len(actions)), actions] - y) ** 2))
        pattern = np.concatenate([(z > 0).ravel() for z in cache[:n_layers - 1]])
        return loss, pattern

    def to_dict(self) -> Dict:
        return {
            "dims": self.dims,
            "params": [p.ravel().tolist() for p in self.params],
            "adam_m": [m.ravel().tolist() for m in self.m],
            "adam_v": [v.ravel().tolist() for v in self.v],
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "QNetwork":
        dims = [int(d) for d in data["dims"]]
        shapes = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            shapes.extend([(fan_in, fan_out), (fan_out,)])

        def unflatten(arrays):
            return [np.asarray(a, dtype=np.float64).reshape(s) for a, s in zip(arrays, shapes)]

        return cls(
            dims,
            unflatten(data["params"]),
            unflatten(data["adam_m"]) if "adam_m" in data else None,
            unflatten(data["adam_v"]) if "adam_v" in data else None,
            int(data.get("step", 0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        """Write a lossless JSON checkpoint"""
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QNetwork":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


class TargetNetwork:
    """
    Frozen snapshot of a QNetwork used for bootstrapped targets
    """

    def __init__(self, net: QNetwork):
        self.dims = list(net.dims)
        self.params = [p.copy() for p in net.params]
        self.sync_count = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = _forward_pass(self.params, np.asarray(x, dtype=np.float64))
        return out

    def sync_target(self, net: QNetwork) -> "TargetNetwork":
        """
        Hard copy of the online parameters

        Args:
            net: Online network

        Returns:
            TargetNetwork: self, now equal to net
        """
        if list(net.dims) != self.dims:
            raise ValueError(f"Cannot sync {net.dims} into {self.dims}")
        for dst, src in zip(self.params, net.params):
            np.copyto(dst, src)
        self.sync_count += 1
        return self


def gradient_check(rng: np.random.Generator, n_instances: int = 10,
                   dims: Sequence[int] = (5, 64, 64, 3), batch_size: int = 32,
                   gamma: float = 0.95, h: float = 1e-6) -> Dict[str, float]:
    """
    Compare analytic TD-loss gradients with central finite differences

    Coordinates whose +-h perturbation changes the ReLU activation pattern
    sit on a kink and are skipped. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-5).

    Args:
        rng: Seeded generator
        n_instances: Random (network, batch) instances
        dims: Layer sizes
        batch_size: Transitions per batch
        gamma: Discount factor
        h: Finite-difference step

    Returns:
        Dict[str, float]: max_rel_error, checked and skipped coordinate counts
    """
    max_rel = 0.0
    checked = 0
    skipped = 0
    for _ in range(n_instances):
        net = QNetwork.init(dims, rng)
        target = TargetNetwork(QNetwork.init(dims, rng))
        batch = TransitionBatch(
            states=rng.normal(size=(batch_size, dims[0])),
            actions=rng.integers(0, dims[-1], size=batch_size),
            rewards=rng.normal(size=batch_size),
            next_states=rng.normal(size=(batch_size, dims[0])),
            dones=rng.random(batch_size) < 0.2,
        )
        y = QNetwork.td_targets(target, batch, gamma)
        _, grads = net._loss_and_grads(batch.states, batch.actions, y)
        _, base_pattern = net.loss_and_pattern(batch.states, batch.actions, y)

        for p, g in zip(net.params, grads):
            flat = p.reshape(-1)
            flat_g = g.reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + h
                loss_plus, pattern_plus = net.loss_and_pattern(batch.states, batch.actions, y)
                flat[k] = original - h
                loss_minus, pattern_minus = net.loss_and_pattern(batch.states, batch.actions, y)
                flat[k] = original

                if not (np.array_equal(pattern_plus, base_pattern)
                        and np.array_equal(pattern_minus, base_pattern)):
                    skipped += 1
                    continue
                numeric = (loss_plus - loss_minus) / (2.0 * h)
                analytic = flat_g[k]
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-5)
                max_rel = max(max_rel, rel)
                checked += 1

    return {"max_rel_error": max_rel, "checked": float(checked), "skipped": float(skipped)}
