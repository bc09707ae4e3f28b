"""Command line entry point: ``selfgrasp <subcommand> [flags]``.

Exit codes: 0 success, 1 usage, 2 transport failure, 3 data error.
"""

import argparse
import logging
from pathlib import Path
import sys
import tempfile

import numpy as np

from . import harness
from .config import KEYS, ConfigError, load_config, session_config
from .dataset import DatasetError, scan_dataset, stats
from .learner import (ArchitectureError, ModelFormatError, TrainingError, gradient_check, init_network,
                      save_model, train)
from .perception import crop_patch, detect
from .transport import TransportError
from .world import PRESETS, World

EXIT_OK, EXIT_USAGE, EXIT_TRANSPORT, EXIT_DATA = 0, 1, 2, 3

COMMAND_DEFAULTS = {
    "cycle": {"world": "elongated", "model": Path("model.gfn")},
    "evaluate": {"world": "elongated", "attempts": 500},
    "demo": {"world": "elongated", "collect_attempts": 300, "eval_attempts": 100, "epochs": 8},
    "train": {"model": Path("model.gfn")},
    "gradcheck": {"attempts": 5},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="key=value file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--attempts", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--transport", choices=harness.TRANSPORTS)
    common.add_argument("--dir", type=Path, help="dataset directory")
    common.add_argument("--model", type=Path, help="model file")
    common.add_argument("--port", type=int)
    common.add_argument("--host")
    common.add_argument("--poll-interval", dest="poll_interval", type=float)
    common.add_argument("--timeout", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--momentum", type=float)
    common.add_argument("--batch", type=int)
    common.add_argument("--world", choices=sorted(PRESETS))
    common.add_argument("--tolerance", type=float)
    common.add_argument("--flip-prob", dest="flip_prob", type=float)
    common.add_argument("--noise", type=float)
    common.add_argument("--exchange-dir", dest="exchange_dir", type=Path)
    common.add_argument("--collect-attempts", dest="collect_attempts", type=int)
    common.add_argument("--eval-attempts", dest="eval_attempts", type=int)
    common.add_argument("--report", type=Path, help="write key=value report here")
    common.add_argument("--quiet", action="store_true", default=False)

    parser = _Parser(prog="selfgrasp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "session": "collect self-labelled grasp attempts",
        "train": "train the network on a dataset directory",
        "evaluate": "greedy success rate of a model on fresh objects",
        "cycle": "evaluate, collect, train, evaluate again",
        "stats": "success counts of a dataset directory",
        "serve-robot": "run the simulated robot endpoint",
        "serve-brain": "run the brain endpoint",
        "gradcheck": "finite-difference check of backpropagation",
        "demo": "small cycle in a temporary directory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text, argument_default=argparse.SUPPRESS)
        if name == "evaluate":
            p.add_argument("--policy", choices=["network", "random", "oracle", "fixed"], default="network")
            p.add_argument("--fixed-class", dest="fixed_class", type=int, default=0)
    return parser


def merge_options(args):
    opts = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if getattr(args, "config", None):
        opts.update(load_config(args.config))
    opts.update({k: v for k, v in vars(args).items() if k in KEYS})
    return opts


def _emit_report(opts, lines):
    if opts.get("report"):
        Path(opts["report"]).write_text("\n".join(lines) + "\n")


def _print_session(report, out):
    print(report.stats.table("Session Results"), file=out)
    if report.error:
        print(f"aborted: {report.error}", file=out)


def cmd_session(opts, args, out):
    cfg = session_config(opts)
    status = None if args.quiet else (lambda s: print(s, file=out))
    report = harness.run_session(cfg, status=status)
    _print_session(report, out)
    _emit_report(opts, report.kv())
    return EXIT_TRANSPORT if report.error else EXIT_OK


def cmd_train(opts, args, out):
    cfg = session_config(opts)
    points, issues = scan_dataset(cfg.dataset_dir, cfg.ext)
    for msg in issues:
        print(f"warning: {msg}", file=sys.stderr)
    if not points:
        raise DatasetError(f"no labelled points in {cfg.dataset_dir}")
    net = harness.load_or_init(cfg.model_path, cfg.seed)
    net, history = train(net, harness.training_points(points), cfg.train,
                         log=None if args.quiet else (lambda s: print(s, file=out)))
    save_model(net, cfg.model_path)
    print(f"trained on {len(points)} points, saved {cfg.model_path}", file=out)
    _emit_report(opts, [f"points={len(points)}"] + [f"epoch_{i + 1}_loss={v:.6f}" for i, v in enumerate(history)])
    return EXIT_OK


def cmd_evaluate(opts, args, out):
    cfg = session_config(opts)
    if args.policy == "network":
        if cfg.model_path is None:
            raise UsageError("evaluate needs --model")
        policy = harness.NetworkPolicy(harness.load_model(cfg.model_path))
    elif args.policy == "fixed":
        policy = harness.ConstantPolicy(args.fixed_class)
    elif args.policy == "oracle":
        policy = harness.OraclePolicy()
    else:
        rng = np.random.default_rng(cfg.seed)
        policy = lambda patch, obj: int(rng.integers(18))  # noqa: E731
    report = harness.evaluate_policy(policy, cfg.attempts, cfg.seed, cfg.world, cfg.oracle,
                                     detector=lambda s: detect(s, cfg.detect_threshold))
    print(report.stats.table("Evaluation"), file=out)
    _emit_report(opts, report.stats.kv() + [f"skipped={report.skipped}"])
    return EXIT_OK


def cmd_cycle(opts, args, out):
    cfg = session_config(opts)
    status = None if args.quiet else (lambda s: print(s, file=out))
    report = harness.run_training_cycle(cfg, status=status, train_log=status)
    print(report.text(), file=out)
    _emit_report(opts, report.kv())
    return EXIT_OK


def cmd_stats(opts, args, out):
    cfg = session_config(opts)
    points, issues = scan_dataset(cfg.dataset_dir, cfg.ext)
    for msg in issues:
        print(f"warning: {msg}", file=sys.stderr)
    s = stats(points)
    print(s.table(), file=out)
    for line in s.kv():
        print(line, file=out)
    _emit_report(opts, s.kv())
    return EXIT_OK


def cmd_serve_robot(opts, args, out):
    cfg = session_config(opts)
    robot = harness.serve_robot(cfg)
    print(f"robot finished {robot.attempt} cycles", file=out)
    return EXIT_OK


def cmd_serve_brain(opts, args, out):
    cfg = session_config(opts)
    status = None if args.quiet else (lambda s: print(s, file=out))
    report = harness.serve_brain(cfg, status=status)
    _print_session(report, out)
    _emit_report(opts, report.kv())
    return EXIT_TRANSPORT if report.error else EXIT_OK


def cmd_gradcheck(opts, args, out):
    seed = opts.get("seed", 0)
    worst = 0.0
    for s in range(seed, seed + opts["attempts"]):
        net = init_network(s)
        err = gradient_check(net, gradcheck_sample(s))
        worst = max(worst, err)
        print(f"seed={s} max_rel_error={err:.3e}", file=out)
    ok = worst < 1e-4
    print(f"gradcheck {'passed' if ok else 'FAILED'}: worst {worst:.3e} (limit 1e-04)", file=out)
    _emit_report(opts, [f"max_rel_error={worst:.6e}", f"passed={int(ok)}"])
    return EXIT_OK if ok else EXIT_DATA


def gradcheck_sample(seed):
    """A rendered object with light uniform noise, so no unit sits exactly on a ReLU kink."""
    _, scene = World(PRESETS["elongated"], (seed, 7)).scene_for(0)
    rng = np.random.default_rng(seed)
    patch = np.clip(crop_patch(scene, detect(scene)[0]) + rng.uniform(0, 0.1, (32, 32)), 0, 1)
    return patch, int(rng.integers(18)), int(rng.integers(2))


def cmd_demo(opts, args, out):
    with tempfile.TemporaryDirectory() as tmp:
        opts.setdefault("dir", Path(tmp) / "dataset")
        opts["model"] = opts.get("model") or Path(tmp) / "model.gfn"
        return cmd_cycle(opts, args, out)


COMMANDS = {
    "session": cmd_session, "train": cmd_train, "evaluate": cmd_evaluate, "cycle": cmd_cycle,
    "stats": cmd_stats, "serve-robot": cmd_serve_robot, "serve-brain": cmd_serve_brain,
    "gradcheck": cmd_gradcheck, "demo": cmd_demo,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = merge_options(args)
        return COMMANDS[args.command](opts, args, out)
    except (UsageError, ConfigError) as e:
        print(f"selfgrasp: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as e:
        print(f"selfgrasp: transport error: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DatasetError, ModelFormatError, ArchitectureError, TrainingError, FileNotFoundError) as e:
        print(f"selfgrasp: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
