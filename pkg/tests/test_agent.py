"""Tests for the actor-critic backbone: policy, value head, replay buffer."""

import numpy as np
import pytest

from irdec import agent, classifier, netcore

STATE_DIM, ACTION_DIM = 2, 1


class _FixedRng:
    """Replays a fixed noise matrix so losses are deterministic functions."""

    def __init__(self, xi):
        self.xi = np.asarray(xi, dtype=np.float64)

    def standard_normal(self, shape):
        assert tuple(shape) == self.xi.shape
        return self.xi.copy()


def _small_policy(seed=0, **kwargs):
    defaults = dict(hidden=(3,))
    defaults.update(kwargs)
    return agent.init_policy(STATE_DIM, ACTION_DIM, [1.0],
                             np.random.default_rng(seed), **defaults)


def _zero_value_head(twin=True):
    vh = agent.init_value_head(STATE_DIM, ACTION_DIM,
                               np.random.default_rng(0), hidden=(3,), twin=twin)
    for name in ("q1", "q2", "q1_target", "q2_target"):
        net = getattr(vh, name)
        if net is not None:
            setattr(vh, name, net.with_params(np.zeros_like(net.params)))
    return vh


class TestAct:
    def test_deterministic_mode_repeats(self):
        policy = _small_policy(seed=1)
        state = np.array([0.4, -0.2])
        a = policy.act(state, "deterministic")
        b = policy.act(state, "deterministic")
        assert np.array_equal(a, b)

    def test_samples_stay_inside_open_action_box(self):
        policy = _small_policy(seed=2)
        rng = np.random.default_rng(3)
        states = rng.normal(size=(100_000, STATE_DIM))
        actions, logp = policy.sample_with_logp(states, rng)
        assert np.all(np.abs(actions) < 1.0)
        assert np.all(np.isfinite(logp))

    def test_small_std_sample_mean_matches_deterministic_action(self):
        # Pin the head to a tiny log-std so the Monte-Carlo mean of squashed
        # samples converges to the squashed mean.
        policy = _small_policy(seed=4)
        params = np.zeros_like(policy.net.params)
        *_, (_w, bias, _fi, _fo) = netcore.layer_slices(policy.net.layer_widths)
        params[bias] = [0.5, -4.0]  # mean 0.5, log-std -4
        policy.net = policy.net.with_params(params)
        state = np.array([0.0, 0.0])
        det = policy.act(state, "deterministic")
        rng = np.random.default_rng(5)
        samples = policy.sample_batch(np.tile(state, (5000, 1)), rng)
        assert abs(samples.mean() - det[0]) < 5e-4

    def test_unknown_mode_rejected(self):
        policy = _small_policy()
        with pytest.raises(ValueError):
            policy.act(np.zeros(STATE_DIM), "greedy")


class TestCriticLoss:
    def test_done_transition_with_unit_reward(self):
        vh = _zero_value_head()
        policy = _small_policy(seed=6)
        loss = agent.critic_loss(
            vh, np.zeros((1, STATE_DIM)), np.zeros((1, ACTION_DIM)),
            np.array([1.0]), np.zeros((1, STATE_DIM)), np.array([1.0]),
            policy, 0.99, np.random.default_rng(0))
        assert loss == pytest.approx(1.0)

    def test_fixed_point_gives_zero_loss(self):
        vh = _zero_value_head()
        policy = _small_policy(seed=7)
        loss = agent.critic_loss(
            vh, np.zeros((2, STATE_DIM)), np.zeros((2, ACTION_DIM)),
            np.zeros(2), np.zeros((2, STATE_DIM)), np.ones(2),
            policy, 0.99, np.random.default_rng(0))
        assert loss == 0.0

    def test_two_transition_batch_matches_scalar_recomputation(self):
        rng_init = np.random.default_rng(8)
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM, rng_init, hidden=(3,))
        policy = _small_policy(seed=9)
        rng = np.random.default_rng(10)
        s = rng.normal(size=(2, STATE_DIM))
        a = rng.normal(size=(2, ACTION_DIM))
        r = np.array([0.3, 1.0])
        s2 = rng.normal(size=(2, STATE_DIM))
        done = np.array([0.0, 1.0])
        gamma = 0.9

        loss = agent.critic_loss(vh, s, a, r, s2, done, policy, gamma,
                                 np.random.default_rng(11))
        # independent recomputation with the same seeded noise
        a2, logp2 = policy.sample_with_logp(s2, np.random.default_rng(11))
        x2 = np.concatenate([s2, a2], axis=-1)
        q_next = np.minimum(netcore.forward(vh.q1_target, x2)[:, 0],
                            netcore.forward(vh.q2_target, x2)[:, 0])
        y = r + gamma * (1 - done) * (q_next - policy.alpha * logp2)
        x = np.concatenate([s, a], axis=-1)
        per_head = [np.mean((netcore.forward(net, x)[:, 0] - y) ** 2)
                    for net in (vh.q1, vh.q2)]
        assert loss == pytest.approx(float(np.mean(per_head)), rel=1e-12)

    def test_twin_target_is_elementwise_minimum(self):
        rng_init = np.random.default_rng(12)
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM, rng_init, hidden=(3,))
        policy = _small_policy(seed=13, use_entropy=False)
        rng = np.random.default_rng(14)
        s2 = rng.normal(size=(8, STATE_DIM))
        r = np.zeros(8)
        done = np.zeros(8)
        y = agent.critic_targets(vh, policy, r, s2, done, 0.9,
                                 np.random.default_rng(15))
        a2, _ = policy.sample_with_logp(s2, np.random.default_rng(15))
        x2 = np.concatenate([s2, a2], axis=-1)
        for net in (vh.q1_target, vh.q2_target):
            head_y = r + 0.9 * (1 - done) * netcore.forward(net, x2)[:, 0]
            assert np.all(y <= head_y + 1e-12)

    def test_update_leaves_targets_untouched(self):
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM,
                                   np.random.default_rng(16), hidden=(3,))
        policy = _small_policy(seed=17)
        t1 = vh.q1_target.params.copy()
        rng = np.random.default_rng(18)
        agent.critic_update(vh, rng.normal(size=(4, STATE_DIM)),
                            rng.normal(size=(4, ACTION_DIM)), np.zeros(4),
                            rng.normal(size=(4, STATE_DIM)), np.zeros(4),
                            policy, 0.99, rng)
        assert np.array_equal(vh.q1_target.params, t1)


class TestActorUpdate:
    def _batch(self, seed=20, n=4):
        rng = np.random.default_rng(seed)
        return rng.normal(size=(n, STATE_DIM))

    def test_constant_classifier_matches_no_classifier(self):
        # A zero-weight classifier is constant in its inputs, so its action
        # gradient vanishes and the update reduces to the plain step on Q.
        states = self._batch()
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM,
                                   np.random.default_rng(21), hidden=(3,))
        clf = classifier.init_classifier(STATE_DIM, ACTION_DIM,
                                         np.random.default_rng(22), hidden=(3,))
        clf.net = clf.net.with_params(np.zeros_like(clf.net.params))
        with_clf = _small_policy(seed=23)
        without = _small_policy(seed=23)
        agent.actor_update(with_clf, vh, clf, states, None, None, 0.0,
                           np.random.default_rng(24))
        agent.actor_update(without, vh, None, states, None, None, 0.0,
                           np.random.default_rng(24))
        assert np.array_equal(with_clf.net.params, without.net.params)

    def test_constant_critics_reduce_to_bc_plus_entropy(self):
        states = self._batch()
        rng = np.random.default_rng(25)
        demo_s = rng.normal(size=(4, STATE_DIM))
        demo_a = rng.uniform(-0.9, 0.9, size=(4, ACTION_DIM))
        vh = _zero_value_head()
        clf = classifier.init_classifier(STATE_DIM, ACTION_DIM,
                                         np.random.default_rng(26), hidden=(3,))
        clf.net = clf.net.with_params(np.zeros_like(clf.net.params))
        full = _small_policy(seed=27)
        bare = _small_policy(seed=27)
        agent.actor_update(full, vh, clf, states, demo_s, demo_a, 0.7,
                           np.random.default_rng(28))
        agent.actor_update(bare, None, None, states, demo_s, demo_a, 0.7,
                           np.random.default_rng(28))
        assert np.array_equal(full.net.params, bare.net.params)

    def test_full_objective_gradient_matches_finite_differences(self):
        policy = _small_policy(seed=29, hidden=(2,))
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM,
                                   np.random.default_rng(30), hidden=(2,))
        clf = classifier.init_classifier(STATE_DIM, ACTION_DIM,
                                         np.random.default_rng(31), hidden=(2,),
                                         gamma=0.9)
        rng = np.random.default_rng(32)
        states = rng.normal(size=(3, STATE_DIM))
        demo_s = rng.normal(size=(2, STATE_DIM))
        demo_a = rng.uniform(-0.9, 0.9, size=(2, ACTION_DIM))
        xi = rng.standard_normal((3, ACTION_DIM))
        lam = 0.5
        cw = 1.0
        alpha = policy.alpha

        upstream, _ = agent.actor_objective_upstream(
            policy, vh, clf, states, _FixedRng(xi), classifier_weight=cw)
        analytic, _ = netcore.backward(policy.net, states, upstream)
        bc_up = agent.bc_upstream(policy, demo_s, demo_a)
        bc_grad, _ = netcore.backward(policy.net, demo_s, bc_up)
        analytic = analytic + lam * bc_grad

        def loss_of(params):
            probe = agent.ActorPolicy(
                policy.net.with_params(params), policy.action_bound,
                policy.opt, policy.log_alpha, policy.alpha_opt,
                policy.target_entropy)
            mu, t = probe._head(states)
            u = mu + np.exp(t) * xi
            actions = probe.action_bound * np.tanh(u)
            logp = probe._logp_from_parts(t, xi, u)
            x = np.concatenate([states, actions], axis=-1)
            q = np.minimum(netcore.forward(vh.q1, x)[:, 0],
                           netcore.forward(vh.q2, x)[:, 0])
            c = netcore.forward(clf.net, x)[:, 0]
            obj = np.mean(alpha * logp - cw * c - q)
            bc = -probe.log_prob(demo_s, demo_a).mean()
            return float(obj + lam * bc)

        numeric = netcore.finite_difference_grad(loss_of, policy.net.params)
        assert netcore.relative_errors(analytic, numeric).max() <= 1e-4

    def test_classifier_and_value_head_parameters_untouched(self):
        states = self._batch(seed=33)
        vh = agent.init_value_head(STATE_DIM, ACTION_DIM,
                                   np.random.default_rng(34), hidden=(3,))
        clf = classifier.init_classifier(STATE_DIM, ACTION_DIM,
                                         np.random.default_rng(35), hidden=(3,))
        policy = _small_policy(seed=36)
        q1 = vh.q1.params.copy()
        q2 = vh.q2.params.copy()
        cp = clf.net.params.copy()
        agent.actor_update(policy, vh, clf, states, None, None, 0.0,
                           np.random.default_rng(37))
        assert np.array_equal(vh.q1.params, q1)
        assert np.array_equal(vh.q2.params, q2)
        assert np.array_equal(clf.net.params, cp)

    def test_auto_entropy_moves_temperature(self):
        states = self._batch(seed=38)
        tuned = _small_policy(seed=39, auto_entropy=True)
        frozen = _small_policy(seed=39, auto_entropy=False)
        before = float(frozen.log_alpha[0])
        agent.actor_update(tuned, None, None, states, None, None, 0.0,
                           np.random.default_rng(40))
        agent.actor_update(frozen, None, None, states, None, None, 0.0,
                           np.random.default_rng(40))
        assert float(tuned.log_alpha[0]) != before
        assert float(frozen.log_alpha[0]) == before


class TestSoftUpdate:
    def _vh(self):
        return agent.init_value_head(STATE_DIM, ACTION_DIM,
                                     np.random.default_rng(41), hidden=(3,))

    def test_full_copy_at_tau_one(self):
        vh = self._vh()
        vh.q1 = vh.q1.with_params(vh.q1.params + 1.0)
        vh.tau = 1.0
        agent.soft_update(vh)
        assert np.array_equal(vh.q1_target.params, vh.q1.params)

    def test_frozen_at_tau_zero(self):
        vh = self._vh()
        before = vh.q1_target.params.copy()
        vh.q1 = vh.q1.with_params(vh.q1.params + 1.0)
        vh.tau = 0.0
        agent.soft_update(vh)
        assert np.array_equal(vh.q1_target.params, before)

    def test_two_half_steps_compose_affinely(self):
        vh = self._vh()
        t0 = vh.q1_target.params.copy()
        online = vh.q1.params + 2.0
        vh.q1 = vh.q1.with_params(online)
        vh.tau = 0.5
        agent.soft_update(vh)
        agent.soft_update(vh)
        assert np.allclose(vh.q1_target.params, 0.25 * t0 + 0.75 * online)


class TestReplayBuffer:
    def _push(self, buf, tag):
        buf.push(np.full(STATE_DIM, tag), np.zeros(ACTION_DIM), 0.0,
                 np.zeros(STATE_DIM), False)

    def test_fifo_eviction_at_capacity(self):
        buf = agent.ReplayBuffer(2)
        for tag in (1.0, 2.0, 3.0):
            self._push(buf, tag)
        stored = sorted(buf.states()[:, 0])
        assert stored == [2.0, 3.0]
        assert len(buf) == 2

    def test_sampling_uniform_within_three_sigma(self):
        buf = agent.ReplayBuffer(16)
        for tag in range(10):
            self._push(buf, float(tag))
        rng = np.random.default_rng(42)
        s, *_ = buf.sample(100_000, rng)
        counts = np.bincount(s[:, 0].astype(int), minlength=10)
        expected = 100_000 / 10
        sigma = np.sqrt(100_000 * 0.1 * 0.9)
        assert np.all(np.abs(counts - expected) <= 3 * sigma)

    def test_fixed_seed_reproducible(self):
        buf = agent.ReplayBuffer(8)
        for tag in range(5):
            self._push(buf, float(tag))
        a = buf.sample(5, np.random.default_rng(7))
        b = buf.sample(5, np.random.default_rng(7))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_empty_sample_rejected(self):
        buf = agent.ReplayBuffer(4)
        with pytest.raises(ValueError):
            buf.sample(1, np.random.default_rng(0))

    def test_invalid_capacity_rejected(self):
        with pytest.raises(ValueError):
            agent.ReplayBuffer(0)

    def test_stored_rewards_are_exactly_what_was_pushed(self):
        buf = agent.ReplayBuffer(4)
        buf.push(np.zeros(STATE_DIM), np.zeros(ACTION_DIM), 0.125,
                 np.zeros(STATE_DIM), True)
        _, _, r, _, done = buf.contents()
        assert r[0] == 0.125
        assert done[0] == 1.0
