"""Curiosity-impact intrinsic rewards from learned dynamics models.

State and action embeddings are trained jointly with a forward model (predict
the next state embedding) and an inverse model (recover the raw action from
consecutive state embeddings). The curiosity reward is the forward
prediction error; the impact reward is the embedding displacement between
consecutive states scaled by a running average. Reward computation never
propagates gradients; embeddings are shaped only by the combined model loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .netcore import DenseNet, OptimizerState

# Exponential running-average rate for the impact normalizer d_m.
D_M_BETA = 0.01


@dataclass
class IntrinsicModule:
    phi_s: DenseNet  # state -> embedding (d_e)
    phi_a: DenseNet  # action -> embedding (d_a)
    f_fw: DenseNet  # (d_e + d_a) -> d_e
    g_inv: DenseNet  # 2*d_e -> action_dim (raw action recovery)
    eta: float
    d_m: float
    d_m_count: int
    opt_phi_s: OptimizerState
    opt_phi_a: OptimizerState
    opt_f_fw: OptimizerState
    opt_g_inv: OptimizerState
    beta: float = D_M_BETA
    # "eq8": displacement / d_m**2 exactly as the displayed formula;
    # "squared": squared displacement / d_m**2 per the surrounding prose.
    impact_variant: str = "eq8"

    @property
    def embed_dim(self) -> int:
        return self.phi_s.out_width


def init_intrinsic_module(state_dim, action_dim, rng, *, embed_dim=16,
                          action_embed_dim=8, hidden=(64, 64), eta=0.5,
                          learning_rate=1e-3, impact_variant="eq8") -> IntrinsicModule:
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    hidden = tuple(hidden)
    phi_s = netcore.init_dense_net((state_dim, *hidden, embed_dim), "tanh",
                                   "identity", rng)
    phi_a = netcore.init_dense_net((action_dim, *hidden, action_embed_dim), "tanh",
                                   "identity", rng)
    f_fw = netcore.init_dense_net((embed_dim + action_embed_dim, *hidden, embed_dim),
                                  "tanh", "identity", rng)
    g_inv = netcore.init_dense_net((2 * embed_dim, *hidden, action_dim),
                                   "tanh", "identity", rng)
    return IntrinsicModule(
        phi_s=phi_s, phi_a=phi_a, f_fw=f_fw, g_inv=g_inv,
        eta=float(eta), d_m=0.0, d_m_count=0,
        opt_phi_s=OptimizerState.fresh(phi_s.params.size, learning_rate),
        opt_phi_a=OptimizerState.fresh(phi_a.params.size, learning_rate),
        opt_f_fw=OptimizerState.fresh(f_fw.params.size, learning_rate),
        opt_g_inv=OptimizerState.fresh(g_inv.params.size, learning_rate),
        impact_variant=impact_variant,
    )


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _embed(module: IntrinsicModule, s, a, s_next):
    e_s = netcore.forward(module.phi_s, s)
    e_next = netcore.forward(module.phi_s, s_next)
    e_a = netcore.forward(module.phi_a, a)
    return e_s, e_a, e_next


def forward_loss(module: IntrinsicModule, s, a, s_next) -> float:
    """Half squared error of the forward model in embedding space."""
    e_s, e_a, e_next = _embed(module, s, a, s_next)
    pred = netcore.forward(module.f_fw, np.concatenate([e_s, e_a], axis=-1))
    err = pred - e_next
    return float(0.5 * np.sum(err * err, axis=-1).mean())


def inverse_loss(module: IntrinsicModule, s, a, s_next) -> float:
    """Negative log-likelihood of the action under the inverse model,
    realized as half squared error (unit-variance Gaussian up to an additive
    constant).

    Predicting the raw action rather than its learned embedding anchors the
    state encoder: mapping every state to the same point would zero the
    forward loss but make the action unrecoverable, so the embeddings cannot
    collapse.
    """
    e_s, _, e_next = _embed(module, s, a, s_next)
    pred = netcore.forward(module.g_inv, np.concatenate([e_s, e_next], axis=-1))
    err = pred - np.asarray(a, dtype=np.float64)
    return float(0.5 * np.sum(err * err, axis=-1).mean())


def icm_loss(module: IntrinsicModule, s, a, s_next) -> float:
    """Mean over the batch of forward plus inverse loss."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty batch")
    return forward_loss(module, s, a, s_next) + inverse_loss(module, s, a, s_next)


def icm_gradients(module: IntrinsicModule, s, a, s_next, *,
                  w_forward: float = 1.0, w_inverse: float = 1.0):
    """Loss value and parameter gradients of the weighted model loss.

    With the default unit weights this is ``icm_loss``; setting one weight to
    zero isolates the forward or inverse term.
    """
    s, _ = _as_batch(s)
    a, _ = _as_batch(a)
    s_next, _ = _as_batch(s_next)
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    d_e = module.embed_dim

    e_s = netcore.forward(module.phi_s, s)
    e_next = netcore.forward(module.phi_s, s_next)
    e_a = netcore.forward(module.phi_a, a)
    fw_in = np.concatenate([e_s, e_a], axis=-1)
    inv_in = np.concatenate([e_s, e_next], axis=-1)
    pred_fw = netcore.forward(module.f_fw, fw_in)
    pred_inv = netcore.forward(module.g_inv, inv_in)

    err_fw = pred_fw - e_next
    err_inv = pred_inv - a
    loss = float(0.5 * (w_forward * np.sum(err_fw ** 2, axis=-1)
                        + w_inverse * np.sum(err_inv ** 2, axis=-1)).mean())

    d_pred_fw = w_forward * err_fw / n
    d_pred_inv = w_inverse * err_inv / n
    g_f, d_fw_in = netcore.backward(module.f_fw, fw_in, d_pred_fw)
    g_g, d_inv_in = netcore.backward(module.g_inv, inv_in, d_pred_inv)

    d_e_s = d_fw_in[:, :d_e] + d_inv_in[:, :d_e]
    d_e_next = -d_pred_fw + d_inv_in[:, d_e:]
    d_e_a = d_fw_in[:, d_e:]

    g_phi_s_cur, _ = netcore.backward(module.phi_s, s, d_e_s)
    g_phi_s_next, _ = netcore.backward(module.phi_s, s_next, d_e_next)
    g_phi_a, _ = netcore.backward(module.phi_a, a, d_e_a)

    grads = {
        "phi_s": g_phi_s_cur + g_phi_s_next,
        "phi_a": g_phi_a,
        "f_fw": g_f,
        "g_inv": g_g,
    }
    return loss, grads


def icm_update(module: IntrinsicModule, s, a, s_next) -> float:
    """One optimizer step on all intrinsic-module nets; returns the loss."""
    loss, grads = icm_gradients(module, s, a, s_next)
    for name in ("phi_s", "phi_a", "f_fw", "g_inv"):
        net = getattr(module, name)
        new_params, new_opt = netcore.adam_step(
            net.params, grads[name], getattr(module, "opt_" + name))
        setattr(module, name, net.with_params(new_params))
        setattr(module, "opt_" + name, new_opt)
    return loss


def curiosity_reward(module: IntrinsicModule, s, a, s_next):
    """Unsquared forward prediction error; no gradient flow."""
    e_s, e_a, e_next = _embed(module, s, a, s_next)
    pred = netcore.forward(module.f_fw, np.concatenate([e_s, e_a], axis=-1))
    return np.linalg.norm(pred - e_next, axis=-1)


def impact_reward(module: IntrinsicModule, s, s_next):
    """Embedding displacement over d_m^2, then update the running average.

    The reward uses d_m from before this call; d_m is seeded with the first
    observed displacement so the first reward is finite, and a stream of
    all-zero displacements yields reward 0 rather than a division by zero.
    Batched input is treated as an ordered stream of per-step updates.
    """
    s_b, single = _as_batch(s)
    s_next_b, _ = _as_batch(s_next)
    e_s = netcore.forward(module.phi_s, s_b)
    e_next = netcore.forward(module.phi_s, s_next_b)
    numerators = np.linalg.norm(e_next - e_s, axis=-1)
    rewards = np.empty_like(numerators)
    for i, num in enumerate(numerators):
        if module.d_m_count == 0:
            module.d_m = float(num)
            module.d_m_count = 1
            denom = module.d_m
        else:
            denom = module.d_m
            module.d_m = (1.0 - module.beta) * module.d_m + module.beta * float(num)
            module.d_m_count += 1
        if denom == 0.0:
            rewards[i] = 0.0
        elif module.impact_variant == "squared":
            rewards[i] = num * num / (denom * denom)
        else:
            rewards[i] = num / (denom * denom)
    return float(rewards[0]) if single else rewards


def intrinsic_reward(module: IntrinsicModule, s, a, s_next):
    """eta-weighted combination of curiosity and impact rewards."""
    r_cur = curiosity_reward(module, s, a, s_next)
    r_imp = impact_reward(module, s, s_next)
    return module.eta * r_cur + (1.0 - module.eta) * r_imp
