"""
Tests for the flight environment
"""

import math

import numpy as np
import pytest

from conftest import make_topology
from skyheight.utils import ConfigError, EpisodeFinishedError, SimUtils
from skyheight.world.environment import (
    Action,
    EnvState,
    EpisodeConfig,
    StateVariant,
    UavEnvironment,
)
from skyheight.world.radio import Channel, RadioParams
from skyheight.world.topology import CityGenerator


class FlatChannel:
    """SINR independent of the pose"""

    calls = 0

    @staticmethod
    def sinr(topology, uav, serving_idx, params):
        FlatChannel.calls += 1
        return 10.0


class PeakChannel:
    """SINR peaked at a fixed height"""

    peak_m = 250.0

    @staticmethod
    def sinr(topology, uav, serving_idx, params):
        return 1.0 / (1.0 + (uav[2] - PeakChannel.peak_m) ** 2)


class TestEpisodeConfig:
    """Test class for episode constants"""

    def test_defaults(self):
        cfg = EpisodeConfig()
        cfg.validate()
        assert cfg.x_start_m == -500.0
        assert cfg.x_at(100) == 500.0
        assert cfg.observation_size(StateVariant.BASIC) == 5
        assert cfg.observation_size(StateVariant.BS) == 6
        assert cfg.observation_size(StateVariant.BUILD) == 6
        assert cfg.observation_size(StateVariant.COMPLETE) == 7

    def test_travel_mismatch(self):
        with pytest.raises(ConfigError):
            EpisodeConfig(speed_mps=12.0).validate()

    def test_height_order(self):
        with pytest.raises(ConfigError):
            EpisodeConfig(h_init_m=250.0).validate()

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            EpisodeConfig.from_dict({"steps": 100})
        assert EpisodeConfig.from_dict({"k_nearest": 2}).k_nearest == 2


class TestResetAndStep:
    """Test class for kinematics and rewards"""

    def setup_method(self):
        self.topology = make_topology([(-300.0, 50.0, 30.0), (400.0, -80.0, 30.0)])
        self.env = UavEnvironment(self.topology, RadioParams())

    def test_reset(self):
        state = self.env.reset()
        assert state.step_idx == 0
        assert state.h_m == 100.0
        assert state.x_m == -500.0
        assert state.serving_idx == 0
        assert self.env.reset() == state

    def test_single_bs_serves(self):
        env = UavEnvironment(make_topology([(900.0, 900.0, 30.0)]), RadioParams())
        assert env.reset().serving_idx == 0

    def test_reset_without_bs(self):
        env = UavEnvironment(make_topology([]), RadioParams())
        with pytest.raises(ValueError):
            env.reset()

    def test_reset_checks_path_margin(self):
        env = UavEnvironment(make_topology([(0.0, 0.0, 30.0)], side_m=1500.0), RadioParams(),
                             path_margin_m=500.0)
        with pytest.raises(ValueError):
            env.reset()

    def test_stay_advances_ten_meters(self):
        state = self.env.reset()
        nxt, reward, done = self.env.step(state, Action.STAY)
        assert nxt.h_m == 100.0
        assert nxt.x_m == -490.0
        assert not done
        _, sinr = self.env.evaluate_pose(-490.0, 100.0)
        assert reward == Channel.spectral_efficiency(sinr)
        assert nxt.sinr_db == pytest.approx(SimUtils.linear_to_db(sinr))

    def test_clamping(self):
        top = EnvState(step_idx=3, x_m=-470.0, h_m=200.0, serving_idx=0, sinr_db=0.0)
        assert self.env.step(top, Action.UP)[0].h_m == 200.0
        bottom = EnvState(step_idx=3, x_m=-470.0, h_m=24.0, serving_idx=0, sinr_db=0.0)
        assert self.env.step(bottom, Action.DOWN)[0].h_m == 20.0
        assert self.env.next_height(100.0, Action.UP) == 107.0
        assert self.env.next_height(100.0, Action.DOWN) == 93.0

    def test_full_episode(self):
        state = self.env.reset()
        rng = np.random.default_rng(0)
        done = False
        steps = 0
        while not done:
            state, reward, done = self.env.step(state, int(rng.integers(3)))
            steps += 1
            assert state.x_m == -500.0 + 10.0 * state.step_idx
            assert 20.0 <= state.h_m <= 200.0
            assert reward >= 0.0
            d = np.hypot(self.topology.bs_xy[:, 0] - state.x_m, self.topology.bs_xy[:, 1])
            assert state.serving_idx == int(np.argmin(d))
        assert steps == 100
        with pytest.raises(EpisodeFinishedError):
            self.env.step(state, Action.STAY)

    def test_handover_at_crossover(self):
        topology = make_topology([(100.0, 50.0, 30.0), (110.0, 50.0, 30.0)])
        env = UavEnvironment(topology, RadioParams())
        state = env.reset()
        serving = []
        for _ in range(62):
            state, _, _ = env.step(state, Action.STAY)
            serving.append((state.x_m, state.serving_idx))
        assert (100.0, 0) in serving
        assert (110.0, 1) in serving

    def test_cache_matches_fresh_evaluation(self):
        x, h = 30.0, 121.0
        cached = self.env.evaluate_pose(x, h)
        again = self.env.evaluate_pose(x, h)
        serving = self.topology.nearest_bs(x, 0.0)
        fresh = Channel.sinr(self.topology, (x, 0.0, h), serving, RadioParams())
        assert cached == again
        assert cached == (serving, fresh)

    def test_cache_avoids_recomputation(self):
        env = UavEnvironment(self.topology, RadioParams(), channel=FlatChannel)
        FlatChannel.calls = 0
        for _ in range(2):
            state = env.reset()
            done = False
            while not done:
                state, _, done = env.step(state, Action.STAY)
        assert FlatChannel.calls == 101


class TestObserve:
    """Test class for observation vectors"""

    def setup_method(self):
        self.topology = make_topology([(-300.0, 50.0, 30.0), (400.0, -80.0, 30.0)],
                                      bs_density=5.0, build_density=500.0)
        self.env = UavEnvironment(self.topology, RadioParams())
        self.state = self.env.reset()

    def test_lengths(self):
        assert self.env.observe(self.state, StateVariant.BASIC).vector.shape == (5,)
        assert self.env.observe(self.state, StateVariant.COMPLETE).vector.shape == (7,)

    def test_padding_with_fewer_bss(self):
        vector = self.env.observe(self.state, "basic").vector
        # two BSs, k = 3: the third distance slot is the sentinel
        assert vector[4] == 1.0
        assert vector[2] == pytest.approx(math.hypot(200.0, 50.0) / 2000.0)

    def test_normalization(self):
        state = EnvState(step_idx=0, x_m=-500.0, h_m=150.0, serving_idx=0, sinr_db=20.0)
        vector = self.env.observe(state, StateVariant.COMPLETE).vector
        assert vector[0] == pytest.approx(0.5)
        assert vector[1] == pytest.approx(0.75)
        assert vector[5] == pytest.approx(0.5)
        assert vector[6] == pytest.approx(0.5)
        assert np.all(np.isfinite(vector))

    def test_sinr_clipping(self):
        low = EnvState(0, -500.0, 100.0, 0, -300.0)
        high = EnvState(0, -500.0, 100.0, 0, 90.0)
        assert self.env.observe(low, StateVariant.BASIC).vector[0] == 0.0
        assert self.env.observe(high, StateVariant.BASIC).vector[0] == 1.0

    def test_variant_features(self):
        bs_only = self.env.observe(self.state, StateVariant.BS).vector
        build_only = self.env.observe(self.state, StateVariant.BUILD).vector
        assert bs_only[-1] == pytest.approx(0.5)
        assert build_only[-1] == pytest.approx(0.5)


class TestGenie:
    """Test class for the genie-assisted action"""

    def setup_method(self):
        self.topology = make_topology([(0.0, 0.0, 30.0)])

    def test_flat_channel_stays(self):
        env = UavEnvironment(self.topology, RadioParams(), channel=FlatChannel)
        assert env.genie_action(env.reset()) == Action.STAY

    def test_peak_above_moves_up(self):
        env = UavEnvironment(self.topology, RadioParams(), channel=PeakChannel)
        state = env.reset()
        assert env.best_height(state) == 200.0
        assert env.genie_action(state) == Action.UP

    def test_grid(self):
        env = UavEnvironment(self.topology, RadioParams())
        heights = env.genie_heights()
        assert heights[0] == 20.0 and heights[-1] == 200.0 and len(heights) == 181

    def test_after_done(self):
        env = UavEnvironment(self.topology, RadioParams(), channel=FlatChannel)
        with pytest.raises(EpisodeFinishedError):
            env.genie_action(EnvState(100, 500.0, 100.0, 0, 0.0))

    def _direction_agreement(self, n_poses, seed):
        topology = CityGenerator.generate(5.0, 500.0, seed=seed)
        params = RadioParams()
        env = UavEnvironment(topology, params)
        rng = np.random.default_rng(seed)
        scans = {}
        for _ in range(n_poses):
            step_idx = int(rng.integers(0, 100))
            h = float(20 + 7 * rng.integers(0, 26))
            state = EnvState(step_idx, env.config.x_at(step_idx), h, 0, 0.0)
            x_next = env.config.x_at(step_idx + 1)
            serving = topology.nearest_bs(x_next, 0.0)
            if step_idx not in scans:
                scans[step_idx] = {g: Channel.sinr(topology, (x_next, 0.0, float(g)), serving, params)
                                   for g in range(20, 201)}
            values = scans[step_idx]
            best = max(values.values())
            if values.get(int(h), -1.0) >= best:
                target = h
            else:
                target = min(g for g, v in values.items() if v == best)
            expected = Action.UP if target > h else Action.DOWN if target < h else Action.STAY
            assert env.genie_action(state) == expected

    def test_direction_matches_argmax(self):
        self._direction_agreement(10, seed=3)

    @pytest.mark.slow
    def test_direction_matches_argmax_full(self):
        self._direction_agreement(1000, seed=4)
