"""Run configuration: a nested key-value text file plus command-line overrides.

The on-disk format is INI-style sections; every field can be overridden with
``--set section.key=value``. The seed resolution order is: explicit override,
config file, the ``IRDEC_SEED`` environment variable, then 0.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

SEED_ENV_VAR = "IRDEC_SEED"


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_int_tuple(text) -> tuple:
    if isinstance(text, tuple):
        return text
    return tuple(int(v) for v in str(text).replace(",", " ").split())


@dataclass
class RunConfig:
    # [run]
    env: str = "point_maze"
    demo_path: str = ""
    total_steps: int = 150_000  # environment-step budget
    eval_period: int = 10_000
    eval_episodes: int = 10
    seed: int = 0
    out_dir: str = "runs/latest"
    updates_per_step: int = 1
    start_steps: int = 1_000  # uniform-random warmup actions
    stop_at_success: float = 0.0  # early stop once eval success reaches this
    disable_intrinsic: bool = False
    disable_classifier: bool = False
    disable_regularizer: bool = False
    save_buffer: bool = True
    explored_dump: bool = False
    explored_points: int = 1_000
    # [agent]
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple = (64, 64)
    init_alpha: float = 0.1
    auto_entropy: bool = True
    use_entropy: bool = True
    twin_critics: bool = True
    # Fraction of every update batch drawn from demo transitions instead of
    # the online buffer. The online data alone contains almost no terminal
    # rewards early on; a fixed demo fraction keeps the value of the demo
    # region pinned instead of being diluted as the buffer grows.
    demo_batch_fraction: float = 0.1
    # [intrinsic]
    eta: float = 0.5
    embed_dim: int = 16
    action_embed_dim: int = 8
    intrinsic_lr: float = 1e-3
    # Weight of the intrinsic bonus added to the extrinsic reward. Kept well
    # below the sparse terminal reward: the impact term is normalized to a
    # near-constant mean, and a large constant per-step bonus makes episode
    # termination at the goal strictly unattractive.
    intrinsic_scale: float = 0.005
    # Fraction of the step budget over which the intrinsic weight decays
    # linearly to zero (0 disables the decay). Without it the normalized
    # impact term acts as a permanent living bonus and late training
    # optimizes against ever terminating at the goal.
    intrinsic_anneal: float = 0.0
    impact_variant: str = "eq8"
    # [classifier]
    classifier_lr: float = 3e-4
    classifier_weight: float = 3.0
    # Discount of the recursive classifier. Kept separate from the RL gamma:
    # it sets the per-step decay of the guidance field, and with the ratio
    # clipped the field is near-flat unless this decays noticeably faster
    # than episode horizons.
    classifier_gamma: float = 0.95
    # [regularizer]
    lambda_0: float = 0.01
    lambda_min: float = 0.001
    lambda_max: float = 1.0
    reg_rate: float = 0.05
    kde_max_ref: int = 1_000

    def ablation_name(self) -> str:
        flags = (self.disable_intrinsic, self.disable_classifier,
                 self.disable_regularizer)
        if all(flags):
            return "sac_bc"
        parts = []
        if self.disable_intrinsic:
            parts.append("no_intrinsic")
        if self.disable_classifier:
            parts.append("no_classifier")
        if self.disable_regularizer:
            parts.append("no_regularizer")
        return "+".join(parts) if parts else "irdec"


_SECTIONS = {
    "run": ("env", "demo_path", "total_steps", "eval_period", "eval_episodes",
            "seed", "out_dir", "updates_per_step", "start_steps",
            "stop_at_success", "disable_intrinsic", "disable_classifier",
            "disable_regularizer", "save_buffer", "explored_dump",
            "explored_points"),
    "agent": ("gamma", "tau", "batch_size", "buffer_capacity", "actor_lr",
              "critic_lr", "hidden", "init_alpha", "auto_entropy",
              "use_entropy", "twin_critics", "demo_batch_fraction"),
    "intrinsic": ("eta", "embed_dim", "action_embed_dim", "intrinsic_lr",
                  "intrinsic_scale", "intrinsic_anneal", "impact_variant"),
    "classifier": ("classifier_lr", "classifier_weight", "classifier_gamma"),
    "regularizer": ("lambda_0", "lambda_min", "lambda_max", "reg_rate",
                    "kde_max_ref"),
}

_FIELD_SECTION = {name: section for section, names in _SECTIONS.items()
                  for name in names}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "bool":
            return _parse_bool(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return _parse_int_tuple(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path=None, overrides=(), seed_explicit=None) -> RunConfig:
    """Build a RunConfig from an optional file plus override strings."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                values[key] = _coerce(key, raw)
    seed_from_file = "seed" in values
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key must be section.key: {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        values[key] = _coerce(key, raw)
        if key == "seed":
            seed_explicit = values[key]
    if seed_explicit is not None:
        values["seed"] = int(seed_explicit)
    elif not seed_from_file and SEED_ENV_VAR in os.environ:
        values["seed"] = int(os.environ[SEED_ENV_VAR])
    return RunConfig(**values)


def config_lines(config: RunConfig):
    """Flatten to deterministic section.key=value lines (metrics header)."""
    lines = []
    for section, names in _SECTIONS.items():
        for name in names:
            value = getattr(config, name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{name}={value}")
    return lines


def save_config(config: RunConfig, path):
    parser = configparser.ConfigParser()
    for section, names in _SECTIONS.items():
        parser[section] = {}
        for name in names:
            value = getattr(config, name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            parser[section][name] = str(value)
    with open(path, "w") as fh:
        parser.write(fh)
