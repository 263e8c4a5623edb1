"""
Tests for the Q-network
"""

import numpy as np
import pytest

from skyheight.learning.neural import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    QNetwork,
    TargetNetwork,
    Transition,
    TransitionBatch,
    gradient_check,
)


def _oracle_forward(params, x):
    """Layer-by-layer recomputation with explicit loops over layers"""
    w0, b0, w1, b1, w2, b2 = params
    h1 = np.maximum(np.dot(x, w0) + b0, 0.0)
    h2 = np.maximum(np.dot(h1, w1) + b1, 0.0)
    return np.dot(h2, w2) + b2


def _random_batch(rng, n=32, dim=5):
    return TransitionBatch(
        states=rng.normal(size=(n, dim)),
        actions=rng.integers(0, 3, size=n),
        rewards=rng.normal(size=n),
        next_states=rng.normal(size=(n, dim)),
        dones=rng.random(n) < 0.2,
    )


class TestQNetwork:
    """Test class for the network"""

    def setup_method(self):
        self.rng = np.random.default_rng(0)
        self.net = QNetwork.init([5, 64, 64, 3], self.rng)

    def test_parameter_count(self):
        assert self.net.parameter_count == 4675

    def test_init(self):
        for layer in range(3):
            assert np.all(self.net.params[2 * layer + 1] == 0.0)
            fan_in, fan_out = self.net.dims[layer], self.net.dims[layer + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.abs(self.net.params[2 * layer]).max() <= limit
        assert all(np.all(m == 0) for m in self.net.m)
        again = QNetwork.init([5, 64, 64, 3], np.random.default_rng(0))
        for a, b in zip(self.net.params, again.params):
            np.testing.assert_array_equal(a, b)

    def test_forward_matches_oracle(self):
        x = self.rng.normal(size=5)
        np.testing.assert_allclose(self.net.forward(x), _oracle_forward(self.net.params, x), rtol=1e-12, atol=1e-12)
        batch = self.rng.normal(size=(8, 5))
        assert self.net.forward(batch).shape == (8, 3)

    def test_zero_weights_give_bias(self):
        params = [np.zeros_like(p) for p in self.net.params]
        params[-1] = np.array([0.5, -1.0, 2.0])
        net = QNetwork(self.net.dims, params)
        np.testing.assert_array_equal(net.forward(np.ones(5)), params[-1])

    def test_last_layer_linearity(self):
        x = self.rng.normal(size=5)
        self.net.params[-1][:] = [0.1, 0.2, 0.3]
        before = self.net.forward(x) - self.net.params[-1]
        self.net.params[-2] *= 2.0
        after = self.net.forward(x) - self.net.params[-1]
        np.testing.assert_allclose(after, 2.0 * before, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            self.net.forward(np.zeros(4))

    def test_checkpoint_round_trip(self, tmp_path):
        path = tmp_path / "net.json"
        loss, grads = self.net.td_loss_and_grads(TargetNetwork(self.net), _random_batch(self.rng), 0.95)
        self.net.optimizer_step(grads, 1e-3)
        self.net.save(path)
        loaded = QNetwork.load(path)
        assert loaded.step == self.net.step
        for a, b in zip(loaded.params + loaded.m + loaded.v, self.net.params + self.net.m + self.net.v):
            np.testing.assert_array_equal(a, b)


class TestTdLoss:
    """Test class for TD loss and gradients"""

    def setup_method(self):
        self.rng = np.random.default_rng(1)
        self.net = QNetwork.init([5, 64, 64, 3], self.rng)
        self.target = TargetNetwork(QNetwork.init([5, 64, 64, 3], self.rng))

    def test_myopic_targets(self):
        batch = _random_batch(self.rng)
        np.testing.assert_array_equal(QNetwork.td_targets(self.target, batch, 0.0), batch.rewards)

    def test_terminal_targets(self):
        batch = _random_batch(self.rng)
        y = QNetwork.td_targets(self.target, batch, 0.95)
        np.testing.assert_array_equal(y[batch.dones], batch.rewards[batch.dones])

    def test_zero_loss_at_targets(self):
        states = self.rng.normal(size=(6, 5))
        actions = np.array([0, 1, 2, 0, 1, 2])
        q = self.net.forward(states)[np.arange(6), actions]
        transitions = [Transition(s, int(a), float(r), s, True) for s, a, r in zip(states, actions, q)]
        loss, grads = self.net.td_loss_and_grads(self.target, transitions, 0.95)
        assert loss == pytest.approx(0.0, abs=1e-20)
        assert all(np.allclose(g, 0.0, atol=1e-15) for g in grads)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            self.net.td_loss_and_grads(self.target, [], 0.95)

    def test_gradient_check(self):
        result = gradient_check(np.random.default_rng(7), n_instances=2, dims=(5, 16, 16, 3))
        assert result["checked"] > 0
        assert result["max_rel_error"] <= 1e-4

    @pytest.mark.slow
    def test_gradient_check_full(self):
        result = gradient_check(np.random.default_rng(8), n_instances=10)
        assert result["checked"] > 10 * 4000
        assert result["max_rel_error"] <= 1e-4


class TestOptimizer:
    """Test class for the Adam update"""

    def setup_method(self):
        self.rng = np.random.default_rng(2)
        self.net = QNetwork.init([5, 64, 64, 3], self.rng)

    def test_zero_gradients(self):
        before = [p.copy() for p in self.net.params]
        self.net.optimizer_step([np.zeros_like(p) for p in self.net.params], 1e-3)
        for a, b in zip(before, self.net.params):
            np.testing.assert_array_equal(a, b)
        assert self.net.step == 1

    def test_first_step_closed_form(self):
        before = [p.copy() for p in self.net.params]
        grads = [self.rng.normal(size=p.shape) for p in self.net.params]
        lr = 1e-3
        self.net.optimizer_step(grads, lr)
        for p0, p1, g in zip(before, self.net.params, grads):
            m_hat = (1 - ADAM_BETA1) * g / (1 - ADAM_BETA1)
            v_hat = (1 - ADAM_BETA2) * g * g / (1 - ADAM_BETA2)
            np.testing.assert_allclose(p1 - p0, -lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), rtol=1e-9, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            self.net.optimizer_step([np.zeros(3)], 1e-3)

    def test_moments_stay_finite(self):
        grads_rng = np.random.default_rng(3)
        for _ in range(2000):
            grads = [grads_rng.normal(scale=10.0, size=p.shape) for p in self.net.params]
            self.net.optimizer_step(grads, 1e-3)
        assert all(np.all(np.isfinite(a)) for a in self.net.params + self.net.m + self.net.v)

    def test_regression_loss_drops(self):
        rng = np.random.default_rng(4)
        net = QNetwork.init([2, 64, 64, 3], rng)
        target = TargetNetwork(net)
        states = rng.uniform(-1, 1, size=(64, 2))
        actions = np.tile([0, 1, 2], 22)[:64]
        rewards = np.sin(2 * states[:, 0]) + states[:, 1] * (actions - 1)
        batch = TransitionBatch(states, actions, rewards, states, np.ones(64, dtype=bool))
        first, _ = net.td_loss_and_grads(target, batch, 0.0)
        for _ in range(2000):
            loss, grads = net.td_loss_and_grads(target, batch, 0.0)
            net.optimizer_step(grads, 1e-3)
        assert loss < first / 100.0


class TestTargetNetwork:
    """Test class for target synchronization"""

    def setup_method(self):
        rng = np.random.default_rng(5)
        self.net = QNetwork.init([5, 64, 64, 3], rng)
        self.target = TargetNetwork(QNetwork.init([5, 64, 64, 3], rng))
        self.inputs = rng.normal(size=(20, 5))

    def test_divergence_before_sync(self):
        assert np.abs(self.net.forward(self.inputs) - self.target.forward(self.inputs)).max() > 0

    def test_sync_equalizes(self):
        self.target.sync_target(self.net)
        np.testing.assert_array_equal(self.net.forward(self.inputs), self.target.forward(self.inputs))
        snapshot = [p.copy() for p in self.target.params]
        self.target.sync_target(self.net)
        for a, b in zip(snapshot, self.target.params):
            np.testing.assert_array_equal(a, b)
        assert self.target.sync_count == 2

    def test_snapshot_is_a_copy(self):
        self.target.sync_target(self.net)
        self.net.params[0] += 1.0
        assert not np.array_equal(self.net.params[0], self.target.params[0])

    def test_sync_shape_mismatch(self):
        other = QNetwork.init([4, 8, 3], np.random.default_rng(0))
        with pytest.raises(ValueError):
            self.target.sync_target(other)
