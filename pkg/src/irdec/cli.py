"""Command-line interface.

Subcommands: ``gen-demos`` (scripted demonstration generation), ``train``
(full training run from a config file plus overrides), ``eval`` (evaluate a
checkpoint), ``explored`` (sample explored-area points from a checkpoint's
buffer dump). Exit codes: 0 success, 2 configuration/usage error, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as config_mod, demos as demos_mod, envs, harness

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irdec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-demos", help="generate a demonstration set")
    gen.add_argument("env", choices=envs.ENV_IDS)
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--noise", type=float, default=demos_mod.DEMO_NOISE_FRACTION)

    train = sub.add_parser("train", help="run a training session")
    train.add_argument("--config", default=None, help="config file path")
    train.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--disable-intrinsic", action="store_true")
    train.add_argument("--disable-classifier", action="store_true")
    train.add_argument("--disable-regularizer", action="store_true")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("explored", help="dump explored-area points")
    exp.add_argument("checkpoint")
    exp.add_argument("--points", "-k", type=int, default=1000)
    exp.add_argument("--out", required=True)
    exp.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_gen_demos(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get(config_mod.SEED_ENV_VAR, "0"))
    spec = envs.make_spec(args.env)
    rng = np.random.default_rng(seed)
    demo_set = demos_mod.generate_demos(spec, args.count, rng,
                                        noise_sigma=args.noise)
    demos_mod.save_demos(demo_set, args.out)
    print(f"wrote {len(demo_set)} trajectories "
          f"({demo_set.n_pairs} pairs) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    overrides = list(args.overrides)
    if args.disable_intrinsic:
        overrides.append("run.disable_intrinsic=true")
    if args.disable_classifier:
        overrides.append("run.disable_classifier=true")
    if args.disable_regularizer:
        overrides.append("run.disable_regularizer=true")
    cfg = config_mod.load_config(args.config, overrides, seed_explicit=args.seed)
    result = harness.train(cfg)
    print(f"finished after {result.env_steps} env steps; "
          f"metrics at {result.metrics_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    ckpt = harness.load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    success, mean_return = harness.evaluate(ckpt.policy, ckpt.spec,
                                            args.episodes, rng)
    print(f"success_rate {success!r}")
    print(f"mean_return {mean_return!r}")
    return EXIT_OK


def _cmd_explored(args) -> int:
    ckpt = harness.load_checkpoint(args.checkpoint)
    if ckpt.buffer_states is None:
        print("checkpoint has no buffer dump (run.save_buffer was off)",
              file=sys.stderr)
        return EXIT_RUNTIME
    rng = np.random.default_rng(args.seed)
    points = harness.sample_explored_area(ckpt.buffer_states, args.points, rng)
    harness.write_explored_points(points, args.out)
    print(f"wrote {args.points} points to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-demos": _cmd_gen_demos,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explored": _cmd_explored,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (demos_mod.DemoFormatError, demos_mod.DemoGenerationError,
            FileNotFoundError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
