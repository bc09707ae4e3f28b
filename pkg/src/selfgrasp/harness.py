"""End-to-end sessions, evaluation and the collect/train/re-evaluate cycle."""

from dataclasses import dataclass, field, replace
import logging
from pathlib import Path
import threading
import time

import numpy as np

from . import geometry
from .dataset import DatasetStats, DatasetStore, load_dataset
from .endpoints import BrainNode, RobotNode, run_brain, run_inprocess, run_robot
from .learner import TrainConfig, forward, init_network, load_model, save_model, train
from .perception import BlobDetector, crop_patch, detect
from .transport import (DEFAULT_PORT, BrainFileLink, RobotFileLink, TransportError, WireLink, accept,
                        listen)
from .world import (ELONGATED, STREAM_ORACLE, OracleConfig, World, WorldConfig, grasp_oracle,
                    optimal_grasp_angle, stream)

log = logging.getLogger(__name__)

TRANSPORTS = ("inprocess", "wire", "files")
EVAL_NAMESPACE = 1  # evaluation objects never overlap the collection stream


@dataclass
class SessionConfig:
    attempts: int = 72
    epsilon: float = 0.2
    world: WorldConfig = field(default_factory=WorldConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    transport: str = "inprocess"
    dataset_dir: Path = Path("dataset")
    model_path: Path = None
    exchange_dir: Path = None
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    poll_interval: float = 3.0
    timeout: float = 30.0
    detect_threshold: float = 0.1
    ext: str = "pgm"
    full_frame: bool = False
    collect_attempts: int = 2000
    eval_attempts: int = 500

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"transport must be one of {TRANSPORTS}")
        self.dataset_dir = Path(self.dataset_dir)
        if self.model_path is not None:
            self.model_path = Path(self.model_path)

    @property
    def exchange(self):
        if self.exchange_dir is not None:
            return Path(self.exchange_dir)
        return self.dataset_dir.with_name(self.dataset_dir.name + "_exchange")


# -- policies ---------------------------------------------------------------------

class NetworkPolicy:
    def __init__(self, net):
        self.net = net

    def __call__(self, patch, obj=None):
        return forward(self.net, patch).chosen


class ConstantPolicy:
    def __init__(self, cls):
        self.cls = geometry.check_class(cls)

    def __call__(self, patch, obj=None):
        return self.cls


class OraclePolicy:
    """Cheats by reading the object: the nearest class to the optimal grasp angle."""

    def __call__(self, patch, obj):
        return geometry.nearest_class(optimal_grasp_angle(obj))


def load_or_init(model_path, seed):
    if model_path is not None and Path(model_path).exists():
        return load_model(model_path)
    return init_network(seed)


# -- reports -----------------------------------------------------------------------

@dataclass
class SessionReport:
    stats: DatasetStats
    attempts: list
    skipped: list
    duration: float
    error: str = None

    @property
    def success_rate(self):
        return self.stats.rate

    def kv(self):
        lines = self.stats.kv()
        lines += [f"skipped={len(self.skipped)}", f"duration={self.duration:.3f}"]
        if self.error:
            lines.append(f"error={self.error}")
        return lines


@dataclass
class EvalReport:
    stats: DatasetStats
    skipped: int

    @property
    def success_rate(self):
        return self.stats.rate


@dataclass
class CycleReport:
    before: EvalReport
    after: EvalReport
    collection: SessionReport
    history: list

    @property
    def delta(self):
        return self.after.success_rate - self.before.success_rate

    def text(self):
        parts = [self.before.stats.table("Session 1: Before CNN Training"), "",
                 self.after.stats.table("Session 2: After CNN Training"), "",
                 f"Change in success rate: {100 * self.delta:+.2f} points"]
        return "\n".join(parts)

    def kv(self):
        return (self.before.stats.kv("before_") + self.after.stats.kv("after_")
                + [f"delta={self.delta:.6f}", f"collected={self.collection.stats.total}",
                   f"final_loss={self.history[-1] if self.history else float('nan'):.6f}"])


# -- evaluation --------------------------------------------------------------------

def evaluate_policy(policy, attempts, seed=0, world_cfg=ELONGATED, oracle_cfg=OracleConfig(),
                    detector=detect, namespace=EVAL_NAMESPACE):
    """Greedy success rate of ``policy`` on fresh seeded objects; writes nothing."""
    world = World(world_cfg, (seed, namespace))
    ok = fail = skipped = 0
    for k in range(attempts):
        obj, scene = world.scene_for(k)
        dets = detector(scene)
        if not dets:
            skipped += 1
            continue
        cls = policy(crop_patch(scene, dets[0]), obj)
        s = grasp_oracle(obj, geometry.class_to_degrees(cls), oracle_cfg,
                         stream((seed, namespace), STREAM_ORACLE, k))
        ok += s
        fail += 1 - s
    return EvalReport(DatasetStats(ok, fail), skipped)


def evaluate(model_path, attempts, seed=0, world_cfg=ELONGATED, oracle_cfg=OracleConfig()):
    return evaluate_policy(NetworkPolicy(load_model(model_path)), attempts, seed, world_cfg, oracle_cfg)


# -- sessions ----------------------------------------------------------------------

def _nodes(cfg, policy, status):
    world = World(cfg.world, cfg.seed)
    if policy is None:
        policy = NetworkPolicy(load_or_init(cfg.model_path, cfg.seed))
    store = DatasetStore(cfg.dataset_dir, cfg.ext)
    detector = BlobDetector(cfg.detect_threshold)
    brain = BrainNode(world, policy, store, cfg.epsilon, cfg.seed, detector, status,
                      full_frame=cfg.full_frame)
    robot = RobotNode(world, cfg.oracle, cfg.seed)
    return brain, robot


def run_session(cfg, policy=None, status=None):
    """Collect ``cfg.attempts`` self-labelled grasps over the configured transport.

    A transport failure ends the session early; the partial report carries
    the error text.
    """
    cfg.dataset_dir.mkdir(parents=True, exist_ok=True)
    brain, robot = _nodes(cfg, policy, status)
    t0 = time.monotonic()
    error = None
    try:
        if cfg.transport == "inprocess":
            run_inprocess(brain, robot, cfg.attempts)
        else:
            _run_threaded(cfg, brain, robot)
    except TransportError as e:
        error = str(e)
        log.error("session aborted: %s", e)
    s = DatasetStats(sum(a.success for a in brain.log), sum(1 - a.success for a in brain.log))
    return SessionReport(s, brain.log, brain.skipped, time.monotonic() - t0, error)


def _robot_link(cfg, srv=None):
    if cfg.transport == "wire":
        return accept(srv, cfg.timeout)
    return RobotFileLink(cfg.exchange, cfg.poll_interval)


def _brain_link(cfg, brain, port=None):
    if cfg.transport == "wire":
        return WireLink.connect(cfg.host, port or cfg.port, cfg.timeout)
    return BrainFileLink(cfg.exchange, cfg.poll_interval, gc_source=lambda: brain.gc)


def _run_threaded(cfg, brain, robot):
    srv = listen(cfg.host, cfg.port) if cfg.transport == "wire" else None
    port = srv.getsockname()[1] if srv else None
    errors = []

    def robot_main():
        try:
            run_robot(robot, _robot_link(cfg, srv), cfg.attempts, cfg.timeout)
        except Exception as e:  # surfaced to the caller below
            errors.append(e)

    t = threading.Thread(target=robot_main, name="robot", daemon=True)
    t.start()
    try:
        run_brain(brain, _brain_link(cfg, brain, port), cfg.attempts, cfg.timeout)
    finally:
        t.join(cfg.timeout)
        if srv:
            srv.close()
    if errors:
        raise errors[0] if isinstance(errors[0], TransportError) else TransportError(str(errors[0]))


def serve_robot(cfg):
    """Robot endpoint only: owns the simulated world and the grasp oracle."""
    robot = RobotNode(World(cfg.world, cfg.seed), cfg.oracle, cfg.seed)
    if cfg.transport == "wire":
        srv = listen(cfg.host, cfg.port)
        try:
            link = accept(srv, cfg.timeout)
        finally:
            srv.close()
    elif cfg.transport == "files":
        link = RobotFileLink(cfg.exchange, cfg.poll_interval)
    else:
        raise ValueError("serve-robot needs the wire or files transport")
    run_robot(robot, link, cfg.attempts, cfg.timeout)
    return robot


def serve_brain(cfg, policy=None, status=None):
    """Brain endpoint only: perception, the network and the dataset."""
    if cfg.transport == "inprocess":
        raise ValueError("serve-brain needs the wire or files transport")
    cfg.dataset_dir.mkdir(parents=True, exist_ok=True)
    brain, _ = _nodes(cfg, policy, status)
    t0 = time.monotonic()
    error = None
    try:
        run_brain(brain, _brain_link(cfg, brain), cfg.attempts, cfg.timeout)
    except TransportError as e:
        error = str(e)
    s = DatasetStats(sum(a.success for a in brain.log), sum(1 - a.success for a in brain.log))
    return SessionReport(s, brain.log, brain.skipped, time.monotonic() - t0, error)


# -- the improvement cycle ------------------------------------------------------

def training_points(points, side=32):
    """Points ready for the network; full-frame images are cropped around their main blob."""
    out = []
    for p in points:
        if p.patch.shape != (side, side):
            dets = detect(p.patch)
            if not dets:
                continue
            p = replace(p, patch=crop_patch(p.patch, dets[0], side))
        out.append(p)
    return out


def run_training_cycle(cfg, status=None, train_log=None):
    """Evaluate greedily, collect with exploration, retrain, evaluate again on the same fresh objects."""
    net0 = load_or_init(cfg.model_path, cfg.seed)
    before = evaluate_policy(NetworkPolicy(net0), cfg.eval_attempts, cfg.seed, cfg.world, cfg.oracle)
    collect_cfg = replace(cfg, attempts=cfg.collect_attempts, transport="inprocess")
    collection = run_session(collect_cfg, NetworkPolicy(net0), status)
    points = training_points(load_dataset(cfg.dataset_dir, cfg.ext))
    net1, history = train(net0, points, cfg.train, log=train_log)
    if cfg.model_path is not None:
        save_model(net1, cfg.model_path)
    after = evaluate_policy(NetworkPolicy(net1), cfg.eval_attempts, cfg.seed, cfg.world, cfg.oracle)
    return CycleReport(before, after, collection, history)


def class_coverage(report):
    return np.bincount([a.cls for a in report.attempts], minlength=geometry.N_CLASSES)
