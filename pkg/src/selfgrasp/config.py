"""Line-based ``key = value`` configuration files and their merge with CLI flags."""

from dataclasses import replace
from pathlib import Path

from .harness import SessionConfig
from .learner import TrainConfig
from .world import PRESETS, OracleConfig

# key -> parser; keys use the long flag spelling with underscores
KEYS = {
    "seed": int, "attempts": int, "epsilon": float, "transport": str, "dir": Path,
    "model": Path, "port": int, "host": str, "poll_interval": float, "timeout": float,
    "epochs": int, "lr": float, "momentum": float, "batch": int, "world": str,
    "tolerance": float, "round_aspect": float, "flip_prob": float, "noise": float,
    "exchange_dir": Path, "collect_attempts": int, "eval_attempts": int, "report": Path,
    "threshold": float, "ext": str, "full_frame": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
}


class ConfigError(ValueError):
    pass


def parse_config_text(text, source="<config>"):
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw!r}")
        if key not in KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        try:
            out[key] = KEYS[key](value.strip())
        except ValueError as e:
            raise ConfigError(f"{source}:{n}: bad value for {key}: {e}") from None
    return out


def load_config(path):
    return parse_config_text(Path(path).read_text(), str(path))


def session_config(opts):
    """Build a SessionConfig from a flat option mapping."""
    world_name = opts.get("world", "default")
    if world_name not in PRESETS:
        raise ConfigError(f"unknown world {world_name!r}; choose from {sorted(PRESETS)}")
    world = PRESETS[world_name]
    if opts.get("noise"):
        world = replace(world, noise=opts["noise"])
    oracle = OracleConfig(
        tolerance=opts.get("tolerance", 15.0),
        round_aspect=opts.get("round_aspect", 1.2),
        flip_prob=opts.get("flip_prob", 0.0),
        seed=opts.get("seed", 0),
    )
    train = TrainConfig(
        lr=opts.get("lr", 0.01),
        momentum=opts.get("momentum", 0.9),
        batch_size=opts.get("batch", 32),
        epochs=opts.get("epochs", 30),
        seed=opts.get("seed", 0),
    )
    fields = dict(
        attempts=opts.get("attempts", 72),
        epsilon=opts.get("epsilon", 0.2),
        world=world, oracle=oracle, train=train,
        seed=opts.get("seed", 0),
        transport=opts.get("transport", "inprocess"),
        dataset_dir=opts.get("dir", Path("dataset")),
        model_path=opts.get("model"),
        exchange_dir=opts.get("exchange_dir"),
        host=opts.get("host", "127.0.0.1"),
        port=opts.get("port", 7461),
        poll_interval=opts.get("poll_interval", 3.0),
        timeout=opts.get("timeout", 30.0),
        detect_threshold=opts.get("threshold", 0.1),
        ext=opts.get("ext", "pgm"),
        full_frame=opts.get("full_frame", False),
        collect_attempts=opts.get("collect_attempts", 2000),
        eval_attempts=opts.get("eval_attempts", 500),
    )
    try:
        return SessionConfig(**fields)
    except ValueError as e:
        raise ConfigError(str(e)) from None
