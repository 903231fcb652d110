import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from counterpol import rollout as R
from counterpol.envs import ACROBOT, CARTPOLE, PENDULUM
from counterpol.policy import (
    ArchMismatchError,
    PolicyParams,
    categorical_arch,
    forward,
    kl_divergence,
    log_prob,
)
from counterpol.rollout import Batch, Trajectory
from counterpol.trainer import policy_arch_for
from oracles import random_params

ALL = [CARTPOLE, ACROBOT, PENDULUM]


def _policy(spec, seed=0, scale=0.3):
    return random_params(policy_arch_for(spec, (16, 16)), np.random.default_rng(seed), scale)


def _traj(rewards, obs_dim=2):
    n = len(rewards)
    return Trajectory(np.zeros((n, obs_dim)), np.zeros(n, dtype=np.int64),
                      np.asarray(rewards, dtype=float), np.zeros(n))


class TestRewardsToGo:
    def test_hand_example(self):
        np.testing.assert_allclose(R.rewards_to_go(np.array([1.0, 2.0, 3.0]), 0.5),
                                   [1 + 1 + 0.75, 2 + 1.5, 3.0], rtol=0, atol=1e-15)

    def test_gamma_one_is_suffix_sum(self):
        r = np.array([1.0, -2.0, 4.0, 0.5])
        np.testing.assert_array_equal(R.rewards_to_go(r, 1.0), [3.5, 2.5, 4.5, 0.5])

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            R.reward_to_go(_traj([1.0, 1.0]), 2, 0.9)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.01, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_matches_direct_sum(self, rewards, gamma):
        r = np.array(rewards)
        rtg = R.rewards_to_go(r, gamma)
        for t in range(len(r)):
            direct = sum(gamma ** (j - t) * r[j] for j in range(t, len(r)))
            assert rtg[t] == pytest.approx(direct, rel=1e-12, abs=1e-10)


class TestPerformanceEstimate:
    def test_mean_of_returns(self):
        batch = Batch([_traj([1.0, 1.0]), _traj([3.0])], gamma=1.0)
        assert R.estimate_performance(batch) == 2.5

    def test_discounting(self):
        batch = Batch([_traj([1.0, 1.0, 1.0])], gamma=0.5)
        assert R.estimate_performance(batch) == 1.75
        assert R.estimate_performance(batch, 1.0) == 3.0

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            Batch([], 0.99)

    def test_inconsistent_trajectory_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((2, 2)), np.zeros(3), np.zeros(2), np.zeros(2))


class TestSampling:
    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.id.value)
    def test_seeded_reproducibility(self, spec):
        params = _policy(spec)
        a = R.sample_episodes(spec, params, 4, 123)
        b = R.sample_episodes(spec, params, 4, 123)
        for ta, tb in zip(a.trajectories, b.trajectories):
            assert np.array_equal(ta.obs, tb.obs) and np.array_equal(ta.actions, tb.actions)
            assert np.array_equal(ta.rewards, tb.rewards)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.id.value)
    def test_episode_depends_only_on_its_seed(self, spec):
        params = _policy(spec)
        batch = R.sample_episodes(spec, params, 3, 500)
        single = R.sample_episodes(spec, params, 1, 502)
        assert np.array_equal(batch.trajectories[2].rewards, single.trajectories[0].rewards)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.id.value)
    def test_compiled_loop_matches_numpy_reference(self, spec):
        params = _policy(spec, seed=4)
        fast = R.sample_episodes(spec, params, 5, 77)
        ref = R.sample_episodes_numpy(spec, params, 5, 77)
        for tf, tr in zip(fast.trajectories, ref.trajectories):
            assert tf.length == tr.length and tf.terminated == tr.terminated
            if spec.discrete:
                assert np.array_equal(tf.actions, tr.actions)
            else:
                np.testing.assert_allclose(tf.actions, tr.actions, rtol=1e-11, atol=1e-11)
            np.testing.assert_allclose(tf.obs, tr.obs, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(tf.rewards, tr.rewards, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(tf.log_probs, tr.log_probs, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.id.value)
    def test_log_probs_match_policy(self, spec):
        params = _policy(spec, seed=2)
        tr = R.sample_episodes(spec, params, 1, 9).trajectories[0]
        for t in range(0, tr.length, max(1, tr.length // 5)):
            dist = forward(params, tr.obs[t])
            assert log_prob(dist, tr.actions[t]) == pytest.approx(tr.log_probs[t], abs=1e-10)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.id.value)
    def test_lengths_respect_cap(self, spec):
        batch = R.sample_episodes(spec, _policy(spec), 5, 0)
        for tr in batch.trajectories:
            assert 1 <= tr.length <= spec.max_episode_steps
            if not tr.terminated:
                assert tr.length == spec.max_episode_steps
        assert batch.total_steps == sum(tr.length for tr in batch.trajectories)

    def test_arch_mismatch(self):
        params = PolicyParams(categorical_arch(3, 2, (4,)), np.zeros(categorical_arch(3, 2, (4,)).n_params))
        with pytest.raises(ArchMismatchError):
            R.sample_episodes(CARTPOLE, params, 1, 0)

    def test_cartpole_uniform_policy_return_range(self):
        arch = policy_arch_for(CARTPOLE, (8,))
        params = PolicyParams(arch, np.zeros(arch.n_params))
        mean, _ = R.evaluate(CARTPOLE, params, 200, seed=0)
        # a uniformly random CartPole policy lasts about 22 steps on average
        assert 15 < mean < 30


class TestKLEstimate:
    def test_zero_at_pivot(self):
        params = _policy(CARTPOLE)
        batch = R.sample_episodes(CARTPOLE, params, 3, 0)
        assert R.estimate_kl(params, params, batch) == 0.0

    def test_matches_hand_average(self):
        pivot, params = _policy(ACROBOT, 1), _policy(ACROBOT, 2)
        batch = R.sample_episodes(ACROBOT, params, 2, 0)
        obs = batch.observations()
        hand = np.mean([kl_divergence(forward(pivot, o), forward(params, o)) for o in obs])
        assert R.estimate_kl(pivot, params, batch) == pytest.approx(hand, rel=1e-12)


def test_trace_csv(tmp_path):
    batch = R.sample_episodes(PENDULUM, _policy(PENDULUM), 2, 0)
    path = tmp_path / "trace.csv"
    R.write_trace_csv(batch, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["episode", "t", "obs_0", "obs_1", "obs_2", "action_0", "reward", "log_prob"]
    assert len(rows) == 1 + batch.total_steps
    assert float(rows[1][6]) == batch.trajectories[0].rewards[0]
