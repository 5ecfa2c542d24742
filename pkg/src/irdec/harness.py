"""Training loop, periodic evaluation, metrics emission and checkpoints.

The loop body runs once per collected trajectory and matches the update
ordering of the method: intrinsic-module update, intrinsic rewards, reward
replacement, value head, classifier, policy. Ablation flags zero one
component's contribution (and skip that component's own updates) without
touching any other module's update path. A run's random streams are a pure
function of the seed, so identical configs give bitwise-identical metrics.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import agent, classifier as clf_mod, config as config_mod, demos as demos_mod
from . import envs, intrinsic as icm_mod, netcore, regularizer as reg_mod, rng as rng_mod

METRICS_HEADER = ("step,episode_return,eval_success,mean_intrinsic,"
                  "classifier_loss,icm_loss,critic_loss,lambda_reg,d_m")


@dataclass
class Components:
    """Everything the training loop mutates, bundled for hooks and tests."""

    spec: envs.EnvSpec
    policy: agent.ActorPolicy
    value_head: agent.ValueHead
    icm: object  # IntrinsicModule or None (ablated)
    classifier: object  # ExampleClassifier or None (ablated)
    schedule: object  # RegSchedule or None (ablated)
    kde: object
    buffer: agent.ReplayBuffer
    demo_set: object
    demo_transitions: tuple  # (s, a, r, s2, done) arrays or None
    streams: dict
    config: config_mod.RunConfig
    env_steps: int = 0
    updates: int = 0
    episodes: int = 0


@dataclass
class TrainResult:
    out_dir: str
    metrics_path: str
    checkpoint_dir: str
    final_eval_success: float
    env_steps: int


def build_components(config, demo_set=None, call_log=None) -> Components:
    spec = envs.make_spec(config.env)
    if demo_set is None:
        if not config.demo_path:
            raise config_mod.ConfigError("no demo set: set run.demo_path")
        demo_set = demos_mod.load_demos(config.demo_path)
    if demo_set.env_id != spec.id:
        raise config_mod.ConfigError(
            f"demo set is for {demo_set.env_id}, run env is {spec.id}")
    streams = rng_mod.make_streams(config.seed)
    state_dim, action_dim = spec.state_dim, spec.action_dim

    policy = agent.init_policy(
        state_dim, action_dim, spec.action_bound, streams["init_actor"],
        hidden=config.hidden, learning_rate=config.actor_lr,
        init_alpha=config.init_alpha, auto_entropy=config.auto_entropy,
        use_entropy=config.use_entropy)
    value_head = agent.init_value_head(
        state_dim, action_dim, streams["init_value"], hidden=config.hidden,
        learning_rate=config.critic_lr, tau=config.tau,
        twin=config.twin_critics)
    icm = None
    if not config.disable_intrinsic:
        icm = icm_mod.init_intrinsic_module(
            state_dim, action_dim, streams["init_phi"],
            embed_dim=config.embed_dim, action_embed_dim=config.action_embed_dim,
            hidden=config.hidden, eta=config.eta,
            learning_rate=config.intrinsic_lr,
            impact_variant=config.impact_variant)
    clf = None
    if not config.disable_classifier:
        clf = clf_mod.init_classifier(
            state_dim, action_dim, streams["init_classifier"],
            gamma=config.classifier_gamma, hidden=config.hidden,
            learning_rate=config.classifier_lr)
    schedule = None
    kde = None
    if not config.disable_regularizer:
        schedule = reg_mod.init_schedule(config.lambda_0, config.lambda_min,
                                         config.lambda_max, config.reg_rate)
        kde = reg_mod.fit_kde(_kde_reference(demo_set, config.kde_max_ref))
    buffer = agent.ReplayBuffer(config.buffer_capacity)
    demo_transitions = None
    if config.demo_batch_fraction > 0.0:
        demo_transitions = demos_mod.transition_arrays(demo_set, spec)
    return Components(spec=spec, policy=policy, value_head=value_head, icm=icm,
                      classifier=clf, schedule=schedule, kde=kde, buffer=buffer,
                      demo_set=demo_set, demo_transitions=demo_transitions,
                      streams=streams, config=config)


def _kde_reference(demo_set, max_ref):
    """Demo states thinned deterministically to bound the per-update cost."""
    states = demo_set.all_states()
    if states.shape[0] <= max_ref:
        return states
    idx = np.linspace(0, states.shape[0] - 1, max_ref).round().astype(int)
    return states[idx]


def collect_trajectory(comp: Components, remaining_budget: int):
    """Run one episode with the current policy, pushing transitions.

    Extrinsic rewards are stored pristine; intrinsic rewards are recomputed
    at sampling time from the current intrinsic module. The done flag marks
    goal termination only; horizon timeouts end the episode without marking
    the transition terminal.
    """
    cfg = comp.config
    spec = comp.spec
    state = envs.reset(spec, comp.streams["env"])
    ep_return = 0.0
    steps = 0
    for _ in range(min(spec.horizon, remaining_budget)):
        if comp.env_steps < cfg.start_steps:
            bound = np.asarray(spec.action_bound)
            action = comp.streams["action"].uniform(-bound, bound)
        else:
            action = comp.policy.act(state, "stochastic", comp.streams["action"])
        result = envs.step(spec, state, action)
        comp.buffer.push(state, action, result.extrinsic_reward,
                         result.next_state, result.done)
        ep_return += result.extrinsic_reward
        state = result.next_state
        comp.env_steps += 1
        steps += 1
        if result.done:
            break
    comp.episodes += 1
    return steps, ep_return


def sample_mixed_batch(comp):
    """One update batch: online transitions plus a fixed demo fraction."""
    cfg = comp.config
    k_demo = 0
    if comp.demo_transitions is not None:
        k_demo = int(round(cfg.batch_size * cfg.demo_batch_fraction))
    batch = comp.buffer.sample(cfg.batch_size - k_demo, comp.streams["replay"])
    if k_demo == 0:
        return batch
    demo = demos_mod.sample_transitions(comp.demo_transitions, k_demo,
                                        comp.streams["replay"])
    return tuple(np.concatenate([b, d]) for b, d in zip(batch, demo))


def run_updates(comp: Components, n_updates: int, call_log=None,
                after_update=None):
    """The Algorithm-style loop body: one gradient pass per collected step."""
    cfg = comp.config
    stats = {"intrinsic": [], "classifier": [], "icm": [], "critic": []}
    log = call_log.append if call_log is not None else (lambda _name: None)
    for _ in range(n_updates):
        if len(comp.buffer) < cfg.batch_size:
            break
        s, a, r_e, s2, done = sample_mixed_batch(comp)
        log("sample_batch")
        rewards = r_e
        if comp.icm is not None:
            stats["icm"].append(icm_mod.icm_update(comp.icm, s, a, s2))
            log("intrinsic_module_update")
            r_i = icm_mod.intrinsic_reward(comp.icm, s, a, s2)
            log("intrinsic_rewards")
            scale = cfg.intrinsic_scale
            if cfg.intrinsic_anneal > 0.0:
                horizon = cfg.intrinsic_anneal * cfg.total_steps
                scale *= max(0.0, 1.0 - comp.env_steps / horizon)
            rewards = r_e + scale * r_i
            log("reward_replacement")
            stats["intrinsic"].append(float(np.mean(r_i)))
        stats["critic"].append(agent.critic_update(
            comp.value_head, s, a, rewards, s2, done, comp.policy, cfg.gamma,
            comp.streams["action"]))
        log("value_head_update")

        demo_s = demo_a = None
        if comp.demo_set is not None:
            demo_s, demo_a = demos_mod.sample_pairs(
                comp.demo_set, cfg.batch_size, comp.streams["demo"])
            log("sample_demo_pairs")
        if comp.classifier is not None:
            stats["classifier"].append(clf_mod.classifier_update(
                comp.classifier, demo_s, (s, a, s2), comp.policy,
                comp.streams["classifier"]))
            log("classifier_update")

        # Behaviour cloning on demo pairs is part of every variant; the
        # regularizer module only adapts its weight. With the module disabled
        # the weight stays fixed at lambda_0.
        lam = cfg.lambda_0
        if comp.schedule is not None:
            score = reg_mod.batch_score(comp.kde, s)
            lam = reg_mod.update_lambda(comp.schedule, score)
        agent.actor_update(
            comp.policy, comp.value_head, comp.classifier, s, demo_s, demo_a,
            lam, comp.streams["action"],
            classifier_weight=cfg.classifier_weight)
        log("policy_update")
        agent.soft_update(comp.value_head)
        comp.updates += 1
        if after_update is not None and after_update(comp) is False:
            return stats, False
    return stats, True


def evaluate(policy, spec, n_episodes, rng):
    """Deterministic-mode rollouts; success means reaching the goal in time."""
    successes = 0
    returns = []
    for _ in range(n_episodes):
        state = envs.reset(spec, rng)
        ep_return = 0.0
        for _ in range(spec.horizon):
            action = policy.act(state, "deterministic")
            result = envs.step(spec, state, action)
            ep_return += result.extrinsic_reward
            state = result.next_state
            if result.done:
                successes += 1
                break
        returns.append(ep_return)
    return successes / n_episodes, float(np.mean(returns))


def sample_explored_area(buffer_states, k, rng):
    """Uniform with-replacement sample of stored states, projected to (x, y)."""
    buffer_states = np.asarray(buffer_states, dtype=np.float64)
    if buffer_states.shape[0] == 0:
        raise ValueError("empty buffer")
    idx = rng.integers(0, buffer_states.shape[0], size=k)
    return buffer_states[idx][:, :2]


def _fmt(value) -> str:
    return repr(float(value))


def _mean_or_blank(values) -> str:
    return _fmt(np.mean(values)) if values else ""


def train(config, demo_set=None, call_log=None, after_update=None) -> TrainResult:
    """Run a full training session and write metrics plus a checkpoint."""
    comp = build_components(config, demo_set)
    os.makedirs(config.out_dir, exist_ok=True)
    metrics_path = os.path.join(config.out_dir, "metrics.csv")
    timing_path = os.path.join(config.out_dir, "timing.log")
    started = time.monotonic()

    demo_hash = _demo_hash(config, comp.demo_set)
    rows = []
    next_eval = config.eval_period
    last_eval = float("nan")
    stop = False
    try:
        while comp.env_steps < config.total_steps and not stop:
            steps, ep_return = collect_trajectory(
                comp, config.total_steps - comp.env_steps)
            stats, keep_going = run_updates(
                comp, steps * config.updates_per_step, call_log=call_log,
                after_update=after_update)
            eval_cell = ""
            if config.eval_period > 0 and comp.env_steps >= next_eval:
                success, _ = evaluate(comp.policy, comp.spec,
                                      config.eval_episodes,
                                      comp.streams["eval"])
                last_eval = success
                eval_cell = _fmt(success)
                next_eval += config.eval_period
                if config.explored_dump:
                    _write_explored(comp, comp.env_steps)
                if config.stop_at_success > 0 and success >= config.stop_at_success:
                    stop = True
            rows.append(",".join([
                str(comp.env_steps),
                _fmt(ep_return),
                eval_cell,
                _mean_or_blank(stats["intrinsic"]),
                _mean_or_blank(stats["classifier"]),
                _mean_or_blank(stats["icm"]),
                _mean_or_blank(stats["critic"]),
                _fmt(comp.schedule.lambda_reg) if comp.schedule else _fmt(0.0),
                _fmt(comp.icm.d_m) if comp.icm else _fmt(0.0),
            ]))
            if not keep_going:
                break
    finally:
        _write_metrics(metrics_path, config, demo_hash, rows)
        with open(timing_path, "w") as fh:
            fh.write(f"wall_clock_seconds {time.monotonic() - started:.3f}\n")

    checkpoint_dir = os.path.join(config.out_dir, "checkpoint")
    save_checkpoint(checkpoint_dir, comp)
    return TrainResult(config.out_dir, metrics_path, checkpoint_dir,
                       last_eval, comp.env_steps)


def _demo_hash(config, demo_set) -> str:
    if config.demo_path and os.path.exists(config.demo_path):
        with open(config.demo_path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    payload = demo_set.all_states().tobytes() + demo_set.all_actions().tobytes()
    return hashlib.sha256(payload).hexdigest()


def _write_metrics(path, config, demo_hash, rows):
    with open(path, "w") as fh:
        fh.write("# irdec-metrics v1\n")
        for line in config_mod.config_lines(config):
            fh.write(f"# config {line}\n")
        fh.write(f"# demo_sha256 {demo_hash}\n")
        fh.write(f"# ablation {config.ablation_name()}\n")
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")


def _write_explored(comp: Components, step: int):
    points = sample_explored_area(comp.buffer.states(),
                                  comp.config.explored_points,
                                  comp.streams["explored"])
    path = os.path.join(comp.config.out_dir, f"explored_{step}.txt")
    write_explored_points(points, path)


def write_explored_points(points, path):
    with open(path, "w") as fh:
        for x, y in points:
            fh.write(f"{x!r} {y!r}\n")


# ---------------------------------------------------------------------------
# Checkpoints: a directory of parameter snapshots plus a manifest.

_NET_FILES = {
    "actor": lambda c: c.policy.net,
    "q1": lambda c: c.value_head.q1,
    "q2": lambda c: c.value_head.q2,
    "q1_target": lambda c: c.value_head.q1_target,
    "q2_target": lambda c: c.value_head.q2_target,
    "phi_s": lambda c: c.icm.phi_s if c.icm else None,
    "phi_a": lambda c: c.icm.phi_a if c.icm else None,
    "f_fw": lambda c: c.icm.f_fw if c.icm else None,
    "g_inv": lambda c: c.icm.g_inv if c.icm else None,
    "classifier": lambda c: c.classifier.net if c.classifier else None,
    "classifier_target": lambda c: c.classifier.target_net if c.classifier else None,
}


def save_checkpoint(out_dir, comp: Components):
    os.makedirs(out_dir, exist_ok=True)
    for name, getter in _NET_FILES.items():
        net = getter(comp)
        if net is not None:
            netcore.save_net(net, os.path.join(out_dir, name + ".net"))
    manifest = {
        "env": comp.spec.id,
        "env_steps": comp.env_steps,
        "updates": comp.updates,
        "episodes": comp.episodes,
        "log_alpha": float(comp.policy.log_alpha[0]),
        "lambda_reg": comp.schedule.lambda_reg if comp.schedule else 0.0,
        "prev_score": comp.schedule.prev_score if comp.schedule else None,
        "max_score": comp.schedule.max_score if comp.schedule else 0.0,
        "d_m": comp.icm.d_m if comp.icm else 0.0,
        "d_m_count": comp.icm.d_m_count if comp.icm else 0,
        "rng": {name: rng_mod.stream_state(gen)
                for name, gen in comp.streams.items()},
        "config": dict(line.split("=", 1)
                       for line in config_mod.config_lines(comp.config)),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)
    if comp.config.save_buffer and len(comp.buffer) > 0:
        s, a, r, s2, done = comp.buffer.contents()
        np.savez_compressed(os.path.join(out_dir, "replay.npz"),
                            s=s, a=a, r=r, s2=s2, done=done)


@dataclass
class Checkpoint:
    manifest: dict
    policy: agent.ActorPolicy
    spec: envs.EnvSpec
    buffer_states: np.ndarray = None


def load_checkpoint(path) -> Checkpoint:
    """Load enough of a checkpoint for evaluation and explored-area dumps."""
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    spec = envs.make_spec(manifest["env"])
    net = netcore.load_net(os.path.join(path, "actor.net"))
    policy = agent.ActorPolicy(
        net=net,
        action_bound=np.asarray(spec.action_bound, dtype=np.float64),
        opt=netcore.OptimizerState.fresh(net.params.size, 3e-4),
        log_alpha=np.array([manifest["log_alpha"]]),
        alpha_opt=netcore.OptimizerState.fresh(1, 3e-4),
        target_entropy=-float(spec.action_dim),
    )
    buffer_states = None
    replay = os.path.join(path, "replay.npz")
    if os.path.exists(replay):
        with np.load(replay) as data:
            buffer_states = data["s"]
    return Checkpoint(manifest, policy, spec, buffer_states)
