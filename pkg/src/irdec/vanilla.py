"""Vanilla entropy-regularized actor-critic with a fixed behaviour-cloning
weight.

This is the plain backbone with no intrinsic rewards, no classifier and no
adaptive regularization. It exists as an independently-invokable reference:
with all three ablation flags engaged, the full training loop must reproduce
this one's parameter trajectory bit for bit under a shared seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import agent, demos as demos_mod, envs, rng as rng_mod


@dataclass
class VanillaComponents:
    spec: envs.EnvSpec
    policy: agent.ActorPolicy
    value_head: agent.ValueHead
    buffer: agent.ReplayBuffer
    demo_set: object
    demo_transitions: tuple
    streams: dict
    env_steps: int = 0
    updates: int = 0


def build_vanilla(config, demo_set) -> VanillaComponents:
    spec = envs.make_spec(config.env)
    streams = rng_mod.make_streams(config.seed)
    policy = agent.init_policy(
        spec.state_dim, spec.action_dim, spec.action_bound,
        streams["init_actor"], hidden=config.hidden,
        learning_rate=config.actor_lr, init_alpha=config.init_alpha,
        auto_entropy=config.auto_entropy, use_entropy=config.use_entropy)
    value_head = agent.init_value_head(
        spec.state_dim, spec.action_dim, streams["init_value"],
        hidden=config.hidden, learning_rate=config.critic_lr, tau=config.tau,
        twin=config.twin_critics)
    demo_transitions = None
    if config.demo_batch_fraction > 0.0:
        demo_transitions = demos_mod.transition_arrays(demo_set, spec)
    return VanillaComponents(spec, policy, value_head,
                             agent.ReplayBuffer(config.buffer_capacity),
                             demo_set, demo_transitions, streams)


def train_vanilla(config, demo_set, bc_weight: float = 0.0,
                  after_update=None) -> VanillaComponents:
    """Run the plain backbone for the configured env-step budget."""
    comp = build_vanilla(config, demo_set)
    cfg = config
    while comp.env_steps < cfg.total_steps:
        state = envs.reset(comp.spec, comp.streams["env"])
        steps = 0
        for _ in range(min(comp.spec.horizon, cfg.total_steps - comp.env_steps)):
            if comp.env_steps < cfg.start_steps:
                bound = np.asarray(comp.spec.action_bound)
                action = comp.streams["action"].uniform(-bound, bound)
            else:
                action = comp.policy.act(state, "stochastic",
                                         comp.streams["action"])
            result = envs.step(comp.spec, state, action)
            comp.buffer.push(state, action, result.extrinsic_reward,
                             result.next_state, result.done)
            state = result.next_state
            comp.env_steps += 1
            steps += 1
            if result.done:
                break
        for _ in range(steps * cfg.updates_per_step):
            if len(comp.buffer) < cfg.batch_size:
                break
            # Same online-plus-demo batch composition as the full harness:
            # the ablation equivalence is per-update bitwise.
            k_demo = 0
            if comp.demo_transitions is not None:
                k_demo = int(round(cfg.batch_size * cfg.demo_batch_fraction))
            s, a, r, s2, done = comp.buffer.sample(cfg.batch_size - k_demo,
                                                   comp.streams["replay"])
            if k_demo:
                demo = demos_mod.sample_transitions(
                    comp.demo_transitions, k_demo, comp.streams["replay"])
                s, a, r, s2, done = (np.concatenate([b, d]) for b, d in
                                     zip((s, a, r, s2, done), demo))
            agent.critic_update(comp.value_head, s, a, r, s2, done,
                                comp.policy, cfg.gamma, comp.streams["action"])
            demo_s = demo_a = None
            if bc_weight != 0.0:
                demo_s, demo_a = demos_mod.sample_pairs(
                    comp.demo_set, cfg.batch_size, comp.streams["demo"])
            agent.actor_update(comp.policy, comp.value_head, None, s, demo_s,
                               demo_a, bc_weight, comp.streams["action"])
            agent.soft_update(comp.value_head)
            comp.updates += 1
            if after_update is not None and after_update(comp) is False:
                return comp
    return comp
