import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from counterpol import policy as P
from counterpol.policy import (
    ArchMismatchError,
    Categorical,
    Gaussian,
    PolicyArch,
    PolicyParams,
    categorical_arch,
    gaussian_arch,
    value_arch,
)
from oracles import fd_kl, fd_log_prob, fd_value, random_params, rel_error

SMALL = (5, 4)


def _cat(obs_dim=3, n=3):
    return categorical_arch(obs_dim, n, SMALL)


def _gauss(obs_dim=3, d=2):
    return gaussian_arch(obs_dim, d, SMALL)


class TestArch:
    def test_param_count(self):
        arch = categorical_arch(4, 2)
        assert arch.n_params == 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2
        assert gaussian_arch(3, 1).n_params == 3 * 64 + 64 + 64 * 64 + 64 + 64 + 1 + 1

    def test_dict_round_trip(self):
        arch = gaussian_arch(3, 1, (8, 8))
        assert PolicyArch.from_dict(arch.to_dict()) == arch

    def test_wrong_length_rejected(self):
        arch = _cat()
        with pytest.raises(ArchMismatchError):
            PolicyParams(arch, np.zeros(arch.n_params - 1))

    def test_non_finite_rejected(self):
        arch = _cat()
        theta = np.zeros(arch.n_params)
        theta[3] = np.nan
        with pytest.raises(ValueError):
            PolicyParams(arch, theta)

    def test_theta_is_read_only(self):
        params = P.init_params(_cat(), 0)
        with pytest.raises(ValueError):
            params.theta[0] = 1.0

    def test_init_is_seeded(self):
        a = P.init_params(_cat(), 3)
        b = P.init_params(_cat(), 3)
        c = P.init_params(_cat(), 4)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)


class TestForward:
    def test_zero_network_gives_uniform_categorical(self):
        arch = _cat(n=3)
        dist = P.forward(PolicyParams(arch, np.zeros(arch.n_params)), [0.1, -2.0, 3.0])
        np.testing.assert_allclose(dist.probs, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_zero_network_gives_standard_gaussian(self):
        arch = _gauss(d=1)
        dist = P.forward(PolicyParams(arch, np.zeros(arch.n_params)), [0.3, 0.2, 0.1])
        assert dist.mean[0] == 0.0 and dist.std[0] == 1.0

    def test_obs_dim_mismatch(self):
        params = P.init_params(_cat(), 0)
        with pytest.raises(ArchMismatchError):
            P.forward(params, [1.0, 2.0])

    def test_non_finite_obs(self):
        params = P.init_params(_cat(), 0)
        with pytest.raises(ValueError):
            P.forward(params, [1.0, np.inf, 0.0])

    def test_batch_matches_single(self):
        params = random_params(_cat(), np.random.default_rng(0))
        obs = np.random.default_rng(1).normal(size=(5, 3))
        batch = P.forward_batch(params, obs)
        for i in range(5):
            np.testing.assert_allclose(P.forward(params, obs[i]).probs, batch.probs[i], rtol=1e-14)

    @given(st.lists(st.floats(-30, 30), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_categorical_probs_form_a_distribution(self, obs):
        params = random_params(_cat(), np.random.default_rng(7), scale=2.0)
        p = P.forward(params, obs).probs
        assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-12


class TestDensities:
    def test_categorical_log_prob(self):
        d = Categorical(np.array([0.2, 0.3, 0.5]))
        assert P.log_prob(d, 2) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_standard_normal_log_prob_at_zero(self):
        d = Gaussian(np.zeros(1), np.ones(1))
        assert P.log_prob(d, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)

    def test_kl_self_is_zero(self):
        d = Categorical(np.array([0.1, 0.9]))
        assert P.kl_divergence(d, d) == 0.0

    def test_kl_categorical_value(self):
        p, q = np.array([0.5, 0.5]), np.array([0.9, 0.1])
        expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
        assert P.kl_divergence(Categorical(p), Categorical(q)) == pytest.approx(expected, abs=1e-14)

    def test_kl_handles_zero_probability_in_first_argument(self):
        kl = P.kl_divergence(Categorical(np.array([0.0, 1.0])), Categorical(np.array([0.5, 0.5])))
        assert kl == pytest.approx(math.log(2.0), abs=1e-15)

    def test_kl_gaussian_value(self):
        d0 = Gaussian(np.array([0.0]), np.array([1.0]))
        d1 = Gaussian(np.array([1.0]), np.array([2.0]))
        expected = math.log(2.0) + (1.0 + 1.0) / 8.0 - 0.5
        assert P.kl_divergence(d0, d1) == pytest.approx(expected, abs=1e-15)

    def test_kl_family_mismatch(self):
        with pytest.raises(ArchMismatchError):
            P.kl_divergence(Categorical(np.array([0.5, 0.5])), Gaussian(np.zeros(1), np.ones(1)))

    @given(
        st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
        st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
    )
    @settings(max_examples=200, deadline=None)
    def test_kl_non_negative(self, a, b):
        p = np.array(a) / sum(a)
        q = np.array(b) / sum(b)
        assert P.kl_divergence(Categorical(p), Categorical(q)) >= 0.0

    @given(st.floats(-3, 3), st.floats(-2, 1), st.floats(-3, 3), st.floats(-2, 1))
    @settings(max_examples=200, deadline=None)
    def test_gaussian_kl_non_negative(self, m0, ls0, m1, ls1):
        d0 = Gaussian(np.array([m0]), np.exp([ls0]))
        d1 = Gaussian(np.array([m1]), np.exp([ls1]))
        assert P.kl_divergence(d0, d1) >= 0.0


class TestSampling:
    def test_inverse_cdf_boundaries(self):
        probs = np.array([0.25, 0.25, 0.5])
        assert list(P.inverse_cdf(probs, np.array([0.0, 0.2499, 0.25, 0.49, 0.5, 0.999]))) == [
            0, 0, 1, 1, 2, 2]

    def test_sampling_frequencies(self):
        rng = np.random.default_rng(0)
        d = Categorical(np.array([0.2, 0.8]))
        draws = [P.sample(d, rng) for _ in range(20000)]
        assert abs(np.mean(draws) - 0.8) < 0.01

    def test_gaussian_sample_moments(self):
        rng = np.random.default_rng(0)
        d = Gaussian(np.array([1.5]), np.array([0.5]))
        x = np.array([P.sample(d, rng)[0] for _ in range(20000)])
        assert abs(x.mean() - 1.5) < 0.02 and abs(x.std() - 0.5) < 0.02


@pytest.mark.parametrize("arch_fn", [_cat, _gauss], ids=["categorical", "gaussian"])
class TestGradients:
    def _action(self, arch, rng):
        if arch.head == "categorical":
            return int(rng.integers(arch.n_out))
        return rng.normal(size=arch.n_out)

    def test_grad_log_prob_matches_finite_differences(self, arch_fn):
        rng = np.random.default_rng(11)
        arch = arch_fn()
        for _ in range(10):
            params = random_params(arch, rng)
            obs = rng.normal(size=arch.obs_dim)
            a = self._action(arch, rng)
            assert rel_error(P.grad_log_prob(params, obs, a), fd_log_prob(params, obs, a)) <= 1e-6

    def test_grad_kl_matches_finite_differences(self, arch_fn):
        rng = np.random.default_rng(12)
        arch = arch_fn()
        for _ in range(10):
            pivot, params = random_params(arch, rng), random_params(arch, rng)
            obs = rng.normal(size=arch.obs_dim)
            assert rel_error(P.grad_kl(pivot, params, obs), fd_kl(pivot, params, obs)) <= 1e-6

    def test_grad_kl_vanishes_at_pivot(self, arch_fn):
        params = random_params(arch_fn(), np.random.default_rng(3))
        g = P.grad_kl(params, params, np.ones(3))
        assert np.max(np.abs(g)) <= 1e-15

    def test_score_has_zero_mean(self, arch_fn):
        """E_a[grad log pi(a|s)] = 0, checked exactly for categorical and by sampling for Gaussian."""
        rng = np.random.default_rng(5)
        arch = arch_fn()
        params = random_params(arch, rng)
        obs = rng.normal(size=3)
        dist = P.forward(params, obs)
        if arch.head == "categorical":
            mean = sum(dist.probs[a] * P.grad_log_prob(params, obs, a) for a in range(arch.n_out))
            assert np.max(np.abs(mean)) <= 1e-14
        else:
            acts = dist.mean + dist.std * rng.standard_normal((40000, arch.n_out))
            obs_b = np.tile(obs, (len(acts), 1))
            mean = P.log_prob_grad_sum(params, obs_b, acts, np.ones(len(acts))) / len(acts)
            scale = np.linalg.norm(P.grad_log_prob(params, obs, acts[0]))
            assert np.linalg.norm(mean) < 0.05 * scale

    def test_batched_sum_equals_per_sample_sum(self, arch_fn):
        rng = np.random.default_rng(8)
        arch = arch_fn()
        params = random_params(arch, rng)
        obs = rng.normal(size=(6, arch.obs_dim))
        acts = [self._action(arch, rng) for _ in range(6)]
        w = rng.normal(size=6)
        batched = P.log_prob_grad_sum(params, obs, np.array(acts), w)
        looped = sum(w[i] * P.grad_log_prob(params, obs[i], acts[i]) for i in range(6))
        np.testing.assert_allclose(batched, looped, rtol=1e-12, atol=1e-13)

    def test_arch_mismatch_in_kl_grad(self, arch_fn):
        a = random_params(arch_fn(), np.random.default_rng(0))
        b = random_params(categorical_arch(3, 3, (6, 4)), np.random.default_rng(0))
        with pytest.raises(ArchMismatchError):
            P.grad_kl(a, b, np.zeros(3))


class TestValueNetwork:
    def test_zero_network_predicts_zero(self):
        arch = value_arch(4, SMALL)
        assert P.value_forward(PolicyParams(arch, np.zeros(arch.n_params)), [1, 2, 3, 4]) == 0.0

    def test_deterministic(self):
        v = random_params(value_arch(4, SMALL), np.random.default_rng(0))
        assert P.value_forward(v, [0.1, 0.2, 0.3, 0.4]) == P.value_forward(v, [0.1, 0.2, 0.3, 0.4])

    def test_grad_value_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        arch = value_arch(4, SMALL)
        for _ in range(10):
            v = random_params(arch, rng)
            obs = rng.normal(size=4)
            assert rel_error(P.grad_value(v, obs), fd_value(v, obs)) <= 1e-6

    def test_value_has_no_action_distribution(self):
        v = random_params(value_arch(4, SMALL), np.random.default_rng(0))
        with pytest.raises(ArchMismatchError):
            P.forward(v, np.zeros(4))
