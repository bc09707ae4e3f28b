"""The two endpoints and the loops that drive them over a link.

A node wraps a pure state machine and carries out its actions: the brain
captures, predicts, commands and records; the robot reports objects and
executes grasps against the simulation oracle. ``handle`` takes one incoming
event and returns the messages to send.
"""

from collections import deque
from dataclasses import dataclass
import logging


from . import geometry, protocol as P
from .perception import crop_patch, detect
from .transport import TransportError
from .world import STREAM_ORACLE, STREAM_POLICY, grasp_oracle, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Attempt:
    attempt: int
    gc: int
    cls: int
    degrees: float
    rotation: float
    success: int
    explored: bool

    def kv(self):
        return (f"attempt={self.attempt} gc={self.gc} class={self.cls} degrees={self.degrees:g} "
                f"rotation={self.rotation!r} success={self.success} explored={int(self.explored)}")


class BrainNode:
    def __init__(self, world, policy, store, epsilon=0.0, seed=0, detector=detect, status=None,
                 start_gc=None, full_frame=False):
        self.world = world
        self.policy = policy
        self.store = store
        self.epsilon = epsilon
        self.seed = seed
        self.detector = detector
        self.status = status
        self.full_frame = full_frame
        self.state = P.BrainState.WaitDetect
        self.attempt = 0
        self.gc = store.next_gc() if start_gc is None else start_gc
        self.log = []
        self.skipped = []
        self.closed = False
        self._pending = None

    def handle(self, event):
        out = []
        events = deque([event])
        while events:
            ev = events.popleft()
            before = self.state
            self.state, actions = P.brain_step(self.state, ev)
            for act in actions:
                if isinstance(act, P.Send):
                    out.append(act.message)
                elif isinstance(act, P.CaptureAndPredict):
                    events.append(self._capture_and_predict())
                elif isinstance(act, P.Record):
                    self._record(act.success)
                    events.append(P.RecordDone())
                elif isinstance(act, P.Abandon):
                    self._abandon()
                elif isinstance(act, P.Close):
                    self.closed = True
            if before is not P.BrainState.WaitDetect and self.state is P.BrainState.WaitDetect:
                self.attempt += 1
        return out

    def _capture_and_predict(self):
        k = self.attempt
        obj, scene = self.world.scene_for(k)
        dets = self.detector(scene)
        if not dets:
            self.skipped.append(k)
            log.warning("attempt %d: no object detected, skipping", k)
            return P.NoDetection()
        det = dets[0]
        patch = crop_patch(scene, det)
        rng = stream(self.seed, STREAM_POLICY, k)
        explored = bool(rng.random() < self.epsilon)
        cls = int(rng.integers(geometry.N_CLASSES)) if explored else int(self.policy(patch, obj))
        degrees = geometry.class_to_degrees(cls)
        rotation = geometry.degrees_to_motor(degrees)
        self.store.write_point(scene if self.full_frame else patch, self.gc)
        self._pending = (cls, degrees, rotation, explored)
        if self.status:
            self.status(f"attempt={k} gc={self.gc} {det.status()} class={cls} "
                        f"degrees={degrees:g} mapped={rotation!r} explored={int(explored)}")
        return P.PredictionReady(P.GraspCommand(rotation))

    def _record(self, success):
        cls, degrees, rotation, explored = self._pending
        self.store.finalize_point(self.gc, cls, success)
        self.store.record_gc(self.gc)
        self.log.append(Attempt(self.attempt, self.gc, cls, degrees, rotation, success, explored))
        self.gc += 1
        self._pending = None

    def _abandon(self):
        if self._pending is not None:
            self.store.discard_point(self.gc)
            self._pending = None


class RobotNode:
    def __init__(self, world, oracle_cfg, seed=0):
        self.world = world
        self.oracle_cfg = oracle_cfg
        self.seed = seed
        self.state = P.RobotState.Idle
        self.attempt = 0
        self.closed = False
        self.executed = []

    def trigger(self):
        return self.handle(P.SensorTrigger())

    def handle(self, event):
        out = []
        events = deque([event])
        while events:
            ev = events.popleft()
            before = self.state
            self.state, actions = P.robot_step(self.state, ev)
            for act in actions:
                if isinstance(act, P.Send):
                    out.append(act.message)
                    if isinstance(act.message, P.GraspResult):
                        events.append(P.FeedbackAcked())
                elif isinstance(act, P.Execute):
                    events.append(P.GraspDone(self._execute(act.rotation)))
                elif isinstance(act, P.Close):
                    self.closed = True
            if before is not P.RobotState.Idle and self.state is P.RobotState.Idle:
                self.attempt += 1
        return out

    def _execute(self, rotation):
        k = self.attempt
        obj = self.world.object_for(k)
        degrees = geometry.motor_to_degrees(rotation)
        success = grasp_oracle(obj, degrees, self.oracle_cfg, stream(self.seed, STREAM_ORACLE, k))
        self.executed.append((k, degrees, success))
        return success


# -- drivers --------------------------------------------------------------------------

def run_inprocess(brain, robot, attempts):
    """Compose both machines in one thread, delivering messages in FIFO order."""
    for _ in range(attempts):
        queue = deque(("brain", m) for m in robot.trigger())
        while queue:
            dest, msg = queue.popleft()
            if dest == "brain":
                queue.extend(("robot", m) for m in brain.handle(msg))
            else:
                queue.extend(("brain", m) for m in robot.handle(msg))
        if brain.state is not P.BrainState.WaitDetect or robot.state is not P.RobotState.Idle:
            raise RuntimeError(f"cycle did not complete: brain {brain.state}, robot {robot.state}")


def _send_all(link, msgs):
    for m in msgs:
        link.send(m)


def run_brain(brain, link, attempts, timeout=30.0):
    """Serve the brain until ``attempts`` cycles finish.

    A silent peer makes the brain reset the cycle and raise TransportError.
    """
    if link.has_handshake:
        link.send(P.Hello())
    try:
        while brain.attempt < attempts:
            msg = link.recv(timeout)
            if msg is None:
                waiting = brain.state
                _send_all(link, brain.handle(P.Timeout()) if waiting is P.BrainState.AwaitFeedback
                          else brain.handle(P.Reset()))
                raise TransportError(f"no message from the robot within {timeout} s (state {waiting.name})")
            _send_all(link, brain.handle(msg))
        if link.has_handshake:
            link.send(P.Bye())
    finally:
        link.close()


def run_robot(robot, link, attempts, timeout=30.0):
    try:
        if link.has_handshake:
            msg = link.recv(timeout)
            if msg is None:
                raise TransportError("brain never said hello")
            _send_all(link, robot.handle(msg))
        while robot.attempt < attempts:
            _send_all(link, robot.trigger())
            while robot.state is not P.RobotState.Idle:
                msg = link.recv(timeout)
                _send_all(link, robot.handle(P.Timeout() if msg is None else msg))
        if link.has_handshake:
            msg = link.recv(timeout)
            if msg is not None:
                robot.handle(msg)
    finally:
        link.close()
