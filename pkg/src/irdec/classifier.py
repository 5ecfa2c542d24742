"""Example-guided exploration via a recursively-trained classifier.

``ExampleClassifier`` maps a raw (state, action) pair to a probability in
(0, 1). Positives are demo states paired with fresh actions from the current
policy; negatives come from the online buffer with recursive targets built
from the classifier's own ratio at the stored next state. At the fixed point
the ratio C/(1-C) is proportional to the discounted probability of reaching
the demonstrated (familiar) states in the future.

``TabularMDP`` and ``oracle_event_probability`` provide an exact brute-force
reference for that probability on small finite MDPs; they exist for tests
only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .netcore import DenseNet, OptimizerState


# Polyak rate for the target copy that evaluates the recursive ratio.
TARGET_TAU = 0.01


@dataclass
class ExampleClassifier:
    net: DenseNet  # sigmoid output over concat(state, action)
    gamma: float
    opt: OptimizerState
    # Slow-moving copy used for the recursive targets. Bootstrapping the
    # ratio off the online net is unstable in exactly the way online-net
    # value bootstraps are: chains of targets collapse and reform with the
    # optimizer noise.
    target_net: DenseNet = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.target_net is None:
            self.target_net = self.net


def init_classifier(state_dim, action_dim, rng, *, gamma=0.99, hidden=(64, 64),
                    learning_rate=3e-4) -> ExampleClassifier:
    net = netcore.init_dense_net((state_dim + action_dim, *hidden, 1),
                                 "relu", "sigmoid", rng)
    return ExampleClassifier(net, float(gamma),
                             OptimizerState.fresh(net.params.size, learning_rate))


def _join(s, a):
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return np.concatenate([s, a], axis=-1)


def predict(clf: ExampleClassifier, s, a):
    """Classifier probability for one pair or a batch; strictly in (0, 1)."""
    out = netcore.forward(clf.net, _join(s, a))
    return float(out[0]) if out.ndim == 1 else out[:, 0]


# Cap on the recursive ratio. Without it a saturated prediction at a demo
# state (odds ~ 1/eps under the logit clamp) propagates astronomically large
# targets through the recursion and the classifier collapses to 1 everywhere;
# the cap preserves the gamma-per-step decay of the guidance field.
W_CLIP = 20.0


# Policy-action samples averaged per state when evaluating the recursive
# ratio. A single sample is unbiased but its variance propagates through the
# recursion as target noise; a small average keeps the targets steady.
W_ACTION_SAMPLES = 4


def ratio_w(clf: ExampleClassifier, states, policy, rng):
    """w(s) = C/(1-C) averaged over sampled policy actions; no gradient flow.

    The fixed point of the recursive target depends on the expectation of the
    ratio itself, so each sampled action's ratio is formed (and clipped to
    [0, W_CLIP]) before averaging.
    """
    states = np.asarray(states, dtype=np.float64)
    single = states.ndim == 1
    if single:
        states = states[None, :]
    w = np.zeros(states.shape[0])
    for _ in range(W_ACTION_SAMPLES):
        x = _join(states, policy.sample_batch(states, rng))
        c = netcore.forward(clf.target_net, x)[:, 0]
        w += np.minimum(c / (1.0 - c), W_CLIP)
    w /= W_ACTION_SAMPLES
    return float(w[0]) if single else w


def neg_target(gamma: float, w):
    """Recursive negative target gamma*w / (1 + gamma*w), in [0, 1)."""
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0.0):
        raise ValueError("w must be non-negative")
    out = gamma * w / (1.0 + gamma * w)
    return float(out) if out.ndim == 0 else out


def cross_entropy(p, y):
    """CE(p; y) = -[y log p + (1-y) log(1-p)] for p strictly inside (0,1)."""
    p = np.asarray(p, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def classifier_loss_components(clf, pos_s, pos_a, neg_s, neg_a, w_next):
    """Loss plus pre-sigmoid upstreams for fixed actions and fixed w.

    The positive term is (1-gamma) * mean CE against target 1; each negative
    carries weight (1 + gamma*w) and target gamma*w/(1+gamma*w), with w
    treated as a constant.
    """
    gamma = clf.gamma
    pos_x = _join(pos_s, pos_a)
    neg_x = _join(neg_s, neg_a)
    if pos_x.shape[0] == 0 or neg_x.shape[0] == 0:
        raise ValueError("both batches must be non-empty")
    w_next = np.asarray(w_next, dtype=np.float64)

    p_pos = netcore.forward(clf.net, pos_x)[:, 0]
    p_neg = netcore.forward(clf.net, neg_x)[:, 0]
    y_neg = neg_target(gamma, w_next)
    weight = 1.0 + gamma * w_next

    loss_pos = (1.0 - gamma) * cross_entropy(p_pos, 1.0).mean()
    loss_neg = (weight * cross_entropy(p_neg, y_neg)).mean()
    loss = float(loss_pos + loss_neg)

    # d(CE(sigmoid(z); y))/dz = p - y; scale by term weights and batch means
    d_logit_pos = (1.0 - gamma) * (p_pos - 1.0) / p_pos.shape[0]
    d_logit_neg = weight * (p_neg - y_neg) / p_neg.shape[0]
    return loss, (pos_x, d_logit_pos), (neg_x, d_logit_neg)


def _logit_backward(clf, x, d_logit):
    """Backprop an upstream expressed w.r.t. the pre-sigmoid logit.

    The gradient is routed through an identity-output view of the net, the
    usual logit-space cross-entropy formulation. This keeps a useful p - y
    gradient even where the clamped sigmoid saturates, so a classifier that
    wanders into saturation can still recover.
    """
    logit_net = DenseNet(clf.net.layer_widths, clf.net.activation,
                         "identity", clf.net.params)
    g, _ = netcore.backward(logit_net, x, d_logit[:, None])
    return g


def classifier_loss(clf, demo_states, online_batch, policy, rng) -> float:
    """Sampled loss: policy actions at demo states, recursive targets at the
    stored next states."""
    loss, _, _ = _sampled_components(clf, demo_states, online_batch, policy, rng)
    return loss


def _sampled_components(clf, demo_states, online_batch, policy, rng):
    neg_s, neg_a, neg_s_next = online_batch
    demo_states = np.asarray(demo_states, dtype=np.float64)
    pos_a = policy.sample_batch(demo_states, rng)
    w_next = ratio_w(clf, neg_s_next, policy, rng)
    return classifier_loss_components(clf, demo_states, pos_a, neg_s, neg_a, w_next)


def classifier_update(clf, demo_states, online_batch, policy, rng) -> float:
    """One optimizer step on the classifier; returns the loss."""
    loss, (pos_x, d_pos), (neg_x, d_neg) = _sampled_components(
        clf, demo_states, online_batch, policy, rng)
    if not np.isfinite(loss):
        raise netcore.NonFiniteError("non-finite classifier loss")
    grad = _logit_backward(clf, pos_x, d_pos) + _logit_backward(clf, neg_x, d_neg)
    new_params, clf.opt = netcore.adam_step(clf.net.params, grad, clf.opt)
    clf.net = clf.net.with_params(new_params)
    clf.target_net = clf.target_net.with_params(
        (1.0 - TARGET_TAU) * clf.target_net.params + TARGET_TAU * new_params)
    return loss


def classifier_grad(clf, pos_s, pos_a, neg_s, neg_a, w_next):
    """Parameter gradient of the loss for fixed actions and fixed w."""
    loss, (pos_x, d_pos), (neg_x, d_neg) = classifier_loss_components(
        clf, pos_s, pos_a, neg_s, neg_a, w_next)
    grad = _logit_backward(clf, pos_x, d_pos) + _logit_backward(clf, neg_x, d_neg)
    return loss, grad


# ---------------------------------------------------------------------------
# Tabular reference model (tests only).


@dataclass
class TabularMDP:
    """Finite MDP with an example-state indicator and a fixed policy."""

    transitions: np.ndarray  # (S, A, S), rows sum to 1
    example_states: np.ndarray  # (S,) booleans
    policy: np.ndarray  # (S, A), rows sum to 1

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.example_states = np.asarray(self.example_states, dtype=bool)
        self.policy = np.asarray(self.policy, dtype=np.float64)
        if not np.allclose(self.transitions.sum(axis=-1), 1.0):
            raise ValueError("transition rows must sum to 1")
        if not np.allclose(self.policy.sum(axis=-1), 1.0):
            raise ValueError("policy rows must sum to 1")

    @property
    def n_states(self):
        return self.transitions.shape[0]

    @property
    def n_actions(self):
        return self.transitions.shape[1]


def oracle_event_probabilities(mdp: TabularMDP, gamma: float) -> np.ndarray:
    """Exact discounted probability of reaching the example states, per (s,a).

    Solves the closed-form linear system of the geometric series:
    p = (1-gamma)*e + gamma * T Pi p, with e the indicator at the current
    state. Returns an (S, A) array.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    n_s, n_a = mdp.n_states, mdp.n_actions
    n = n_s * n_a
    # M[(s,a),(s',a')] = T(s'|s,a) * pi(a'|s')
    m = (mdp.transitions[:, :, :, None] * mdp.policy[None, None, :, :]).reshape(n, n)
    b = np.repeat((1.0 - gamma) * mdp.example_states.astype(np.float64), n_a)
    p = np.linalg.solve(np.eye(n) - gamma * m, b)
    return p.reshape(n_s, n_a)


def oracle_event_probability(mdp: TabularMDP, state: int, action: int,
                             gamma: float) -> float:
    return float(oracle_event_probabilities(mdp, gamma)[state, action])
