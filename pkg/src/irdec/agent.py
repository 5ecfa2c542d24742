"""Off-policy actor-critic backbone with a combined-reward value head.

The actor is a squashed-Gaussian policy; the value head holds twin Q
networks with polyak-averaged target copies. ``actor_update`` implements the
full policy step: ascend the classifier value plus the (minimum) critic value
plus the entropy bonus over online states, descend the weighted
behaviour-cloning loss over demo pairs. All gradients are hand-chained
through the reparameterized action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .netcore import DenseNet, OptimizerState

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_2 = float(np.log(2.0))
# Demonstrated actions are pulled into the open action box before the
# inverse squash.
SQUASH_CLAMP = 1e-6


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class ActorPolicy:
    net: DenseNet  # state -> (mean, clamped log-std)
    action_bound: np.ndarray
    opt: OptimizerState
    log_alpha: np.ndarray  # shape (1,)
    alpha_opt: OptimizerState
    target_entropy: float
    auto_entropy: bool = True
    use_entropy: bool = True
    clamp_count: int = 0  # demo actions clamped into the open box by bc terms

    @property
    def action_dim(self) -> int:
        return self.net.out_width // 2

    @property
    def alpha(self) -> float:
        if not self.use_entropy:
            return 0.0
        return float(np.exp(self.log_alpha[0]))

    def _head(self, states):
        out = netcore.forward(self.net, np.asarray(states, dtype=np.float64))
        half = self.action_dim
        return out[..., :half], out[..., half:]

    def sample_batch(self, states, rng):
        """Stochastic actions for a batch of states (no gradient bookkeeping)."""
        actions, _ = self.sample_with_logp(states, rng)
        return actions

    def sample_with_logp(self, states, rng):
        states = np.asarray(states, dtype=np.float64)
        mu, t = self._head(states)
        xi = rng.standard_normal(mu.shape)
        sigma = np.exp(t)
        u = mu + sigma * xi
        actions = self.action_bound * np.tanh(u)
        logp = self._logp_from_parts(t, xi, u)
        return actions, logp

    def _logp_from_parts(self, t, xi, u):
        per_dim = (-t - 0.5 * xi * xi - 0.5 * LOG_2PI
                   - 2.0 * (LOG_2 - u - _softplus(-2.0 * u))
                   - np.log(self.action_bound))
        return per_dim.sum(axis=-1)

    def act(self, state, mode, rng=None):
        """One action for one state; ``deterministic`` mode squashes the mean."""
        state = np.asarray(state, dtype=np.float64)
        if mode == "deterministic":
            mu, _ = self._head(state[None, :])
            return self.action_bound * np.tanh(mu[0])
        if mode != "stochastic":
            raise ValueError(f"unknown mode {mode!r}")
        actions, _ = self.sample_with_logp(state[None, :], rng)
        return actions[0]

    def _inverse_squash(self, actions):
        scaled = np.asarray(actions, dtype=np.float64) / self.action_bound
        clipped = np.clip(scaled, -1.0 + SQUASH_CLAMP, 1.0 - SQUASH_CLAMP)
        self.clamp_count += int(np.count_nonzero(clipped != scaled))
        return np.arctanh(clipped)

    def log_prob(self, states, actions):
        """Log-density of given actions under the squashed Gaussian."""
        mu, t = self._head(np.asarray(states, dtype=np.float64))
        sigma = np.exp(t)
        u = self._inverse_squash(actions)
        per_dim = (-t - 0.5 * ((u - mu) / sigma) ** 2 - 0.5 * LOG_2PI
                   - 2.0 * (LOG_2 - u - _softplus(-2.0 * u))
                   - np.log(self.action_bound))
        return per_dim.sum(axis=-1)


def init_policy(state_dim, action_dim, action_bound, rng, *, hidden=(64, 64),
                learning_rate=3e-4, init_alpha=0.1, auto_entropy=True,
                use_entropy=True) -> ActorPolicy:
    net = netcore.init_dense_net((state_dim, *hidden, 2 * action_dim), "relu",
                                 "bounded_gaussian_head", rng)
    log_alpha = np.array([np.log(init_alpha)], dtype=np.float64)
    return ActorPolicy(
        net=net,
        action_bound=np.asarray(action_bound, dtype=np.float64),
        opt=OptimizerState.fresh(net.params.size, learning_rate),
        log_alpha=log_alpha,
        alpha_opt=OptimizerState.fresh(1, learning_rate),
        target_entropy=-float(action_dim),
        auto_entropy=auto_entropy,
        use_entropy=use_entropy,
    )


@dataclass
class ValueHead:
    q1: DenseNet
    q2: DenseNet  # None when running a single head
    q1_target: DenseNet
    q2_target: DenseNet
    tau: float
    opt_q1: OptimizerState
    opt_q2: OptimizerState


def init_value_head(state_dim, action_dim, rng, *, hidden=(64, 64),
                    learning_rate=3e-4, tau=0.005, twin=True) -> ValueHead:
    widths = (state_dim + action_dim, *hidden, 1)
    q1 = netcore.init_dense_net(widths, "relu", "identity", rng)
    q2 = netcore.init_dense_net(widths, "relu", "identity", rng) if twin else None
    return ValueHead(
        q1=q1,
        q2=q2,
        q1_target=q1.with_params(q1.params.copy()),
        q2_target=q2.with_params(q2.params.copy()) if twin else None,
        tau=float(tau),
        opt_q1=OptimizerState.fresh(q1.params.size, learning_rate),
        opt_q2=OptimizerState.fresh(q2.params.size, learning_rate) if twin else None,
    )


def soft_update(vh: ValueHead):
    """Polyak step: target <- (1 - tau) * target + tau * online."""
    vh.q1_target = vh.q1_target.with_params(
        (1.0 - vh.tau) * vh.q1_target.params + vh.tau * vh.q1.params)
    if vh.q2 is not None:
        vh.q2_target = vh.q2_target.with_params(
            (1.0 - vh.tau) * vh.q2_target.params + vh.tau * vh.q2.params)


def critic_targets(vh: ValueHead, policy: ActorPolicy, rewards, next_states,
                   dones, gamma, rng):
    """Detached TD targets with the elementwise minimum over twin target heads."""
    next_actions, next_logp = policy.sample_with_logp(next_states, rng)
    x_next = np.concatenate([next_states, next_actions], axis=-1)
    q_next = netcore.forward(vh.q1_target, x_next)[:, 0]
    if vh.q2 is not None:
        q_next = np.minimum(q_next, netcore.forward(vh.q2_target, x_next)[:, 0])
    if policy.use_entropy:
        q_next = q_next - policy.alpha * next_logp
    return rewards + gamma * (1.0 - dones) * q_next


def critic_loss(vh: ValueHead, states, actions, rewards, next_states, dones,
                policy: ActorPolicy, gamma, rng) -> float:
    """Mean squared TD error over the batch (both heads averaged)."""
    y = critic_targets(vh, policy, rewards, next_states, dones, gamma, rng)
    x = np.concatenate([states, actions], axis=-1)
    losses = [float(((netcore.forward(net, x)[:, 0] - y) ** 2).mean())
              for net in (vh.q1, vh.q2) if net is not None]
    return float(np.mean(losses))


def critic_update(vh: ValueHead, states, actions, rewards, next_states, dones,
                  policy: ActorPolicy, gamma, rng) -> float:
    """One optimizer step per head against shared detached targets."""
    y = critic_targets(vh, policy, rewards, next_states, dones, gamma, rng)
    if not np.all(np.isfinite(y)):
        raise netcore.NonFiniteError("non-finite critic target")
    x = np.concatenate([states, actions], axis=-1)
    n = x.shape[0]
    losses = []
    for head, opt_name in (("q1", "opt_q1"), ("q2", "opt_q2")):
        net = getattr(vh, head)
        if net is None:
            continue
        q = netcore.forward(net, x)[:, 0]
        losses.append(float(((q - y) ** 2).mean()))
        upstream = (2.0 * (q - y) / n)[:, None]
        grad, _ = netcore.backward(net, x, upstream)
        new_params, new_opt = netcore.adam_step(net.params, grad,
                                                getattr(vh, opt_name))
        setattr(vh, head, net.with_params(new_params))
        setattr(vh, opt_name, new_opt)
    return float(np.mean(losses))


def bc_upstream(policy: ActorPolicy, demo_states, demo_actions):
    """Head-space gradient of mean -log pi(a*|s*) at the demo states.

    The inverse-squashed action is a constant, so only the Gaussian part
    contributes parameter gradients.
    """
    demo_states = np.asarray(demo_states, dtype=np.float64)
    mu, t = policy._head(demo_states)
    sigma = np.exp(t)
    u_star = policy._inverse_squash(demo_actions)
    diff = (u_star - mu) / sigma
    n = demo_states.shape[0]
    d_mu = -(diff / sigma) / n
    d_t = (1.0 - diff * diff) / n
    return np.concatenate([d_mu, d_t], axis=-1)


def actor_objective_upstream(policy: ActorPolicy, vh: ValueHead, clf,
                             states, rng, *, classifier_weight=1.0):
    """Sample actions and build the head-space upstream of the actor loss.

    Returns ``(upstream, logp)`` where the loss being descended is
    ``mean(alpha*logp - classifier_weight*C - min(Q1, Q2))``.
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    mu, t = policy._head(states)
    sigma = np.exp(t)
    xi = rng.standard_normal(mu.shape)
    u = mu + sigma * xi
    tanh_u = np.tanh(u)
    actions = policy.action_bound * tanh_u
    logp = policy._logp_from_parts(t, xi, u)

    state_dim = states.shape[1]
    x = np.concatenate([states, actions], axis=-1)
    d_action = np.zeros_like(actions)
    if vh is not None:
        q1 = netcore.forward(vh.q1, x)[:, 0]
        if vh.q2 is not None:
            q2 = netcore.forward(vh.q2, x)[:, 0]
            pick1 = (q1 <= q2).astype(np.float64)
            _, in1 = netcore.backward(vh.q1, x, (pick1 / n)[:, None])
            _, in2 = netcore.backward(vh.q2, x, ((1.0 - pick1) / n)[:, None])
            d_action += in1[:, state_dim:] + in2[:, state_dim:]
        else:
            _, in1 = netcore.backward(vh.q1, x, np.full((n, 1), 1.0 / n))
            d_action += in1[:, state_dim:]
    if clf is not None and classifier_weight != 0.0:
        _, in_c = netcore.backward(clf.net, x,
                                   np.full((n, 1), classifier_weight / n))
        d_action += in_c[:, state_dim:]

    # descend L = -J: flip the ascent direction of the C + Q terms
    dl_da = -d_action
    squash = policy.action_bound * (1.0 - tanh_u * tanh_u)
    d_mu = dl_da * squash
    d_t = dl_da * squash * sigma * xi
    if policy.use_entropy:
        alpha = policy.alpha
        d_mu = d_mu + (alpha / n) * (2.0 * tanh_u)
        d_t = d_t + (alpha / n) * (-1.0 + 2.0 * tanh_u * sigma * xi)
    return np.concatenate([d_mu, d_t], axis=-1), logp


def actor_update(policy: ActorPolicy, vh: ValueHead, clf, states, demo_states,
                 demo_actions, lambda_reg, rng, *, classifier_weight=1.0):
    """One policy step; classifier and value-head parameters stay untouched.

    Returns the mean log-probability of the sampled actions (used for the
    entropy-temperature update and diagnostics).
    """
    upstream, logp = actor_objective_upstream(
        policy, vh, clf, states, rng, classifier_weight=classifier_weight)
    grad, _ = netcore.backward(policy.net, states, upstream)
    if demo_states is not None and lambda_reg != 0.0:
        bc_up = bc_upstream(policy, demo_states, demo_actions)
        bc_grad, _ = netcore.backward(policy.net, demo_states, bc_up)
        grad = grad + lambda_reg * bc_grad
    if not np.all(np.isfinite(grad)):
        raise netcore.NonFiniteError("non-finite actor gradient")
    new_params, policy.opt = netcore.adam_step(policy.net.params, grad, policy.opt)
    policy.net = policy.net.with_params(new_params)

    if policy.use_entropy and policy.auto_entropy:
        alpha_grad = np.array([-(logp + policy.target_entropy).mean()])
        policy.log_alpha, policy.alpha_opt = netcore.adam_step(
            policy.log_alpha, alpha_grad, policy.alpha_opt)
    return float(logp.mean())


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._storage = None
        self._cursor = 0
        self._size = 0

    def __len__(self):
        return self._size

    def _ensure(self, state_dim, action_dim):
        if self._storage is None:
            self._storage = {
                "s": np.zeros((self.capacity, state_dim)),
                "a": np.zeros((self.capacity, action_dim)),
                "r": np.zeros(self.capacity),
                "s2": np.zeros((self.capacity, state_dim)),
                "done": np.zeros(self.capacity),
            }

    def push(self, state, action, reward, next_state, done):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        next_state = np.asarray(next_state, dtype=np.float64)
        self._ensure(state.size, action.size)
        i = self._cursor
        self._storage["s"][i] = state
        self._storage["a"][i] = action
        self._storage["r"][i] = float(reward)
        self._storage["s2"][i] = next_state
        self._storage["done"][i] = 1.0 if done else 0.0
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, k: int, rng):
        """Uniform with-replacement batch of k transitions."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=k)
        s = self._storage
        return (s["s"][idx], s["a"][idx], s["r"][idx], s["s2"][idx],
                s["done"][idx])

    def states(self) -> np.ndarray:
        if self._size == 0:
            return np.zeros((0, 0))
        return self._storage["s"][: self._size]

    def contents(self):
        s = self._storage
        n = self._size
        return (s["s"][:n], s["a"][:n], s["r"][:n], s["s2"][:n], s["done"][:n])
