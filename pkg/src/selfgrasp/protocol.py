"""Robot/brain handshake: message vocabulary, line framing, and both state machines.

The step functions are pure: ``(state, event) -> (state, actions)``. Anything
not listed in a machine's transition table is a :class:`ProtocolViolation`,
and the caller keeps the old state.
"""

from dataclasses import dataclass
import enum
import re

from .geometry import GRIP, MOTOR_LIMIT

PROTOCOL_VERSION = 1


class ProtocolViolation(Exception):
    def __init__(self, state, event):
        super().__init__(f"{type(event).__name__} is not allowed in state {state.name}")
        self.state = state
        self.event = event


class DecodeError(ValueError):
    def __init__(self, data, reason):
        super().__init__(f"cannot decode {data!r}: {reason}")
        self.data = data


# -- wire messages ------------------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class ObjectDetected:
    pass


@dataclass(frozen=True)
class GraspCommand:
    rotation: float
    grip: float = GRIP

    def __post_init__(self):
        if self.grip != GRIP:
            raise ValueError(f"grip is always {GRIP}")
        if not -MOTOR_LIMIT <= self.rotation <= MOTOR_LIMIT:
            raise ValueError(f"rotation {self.rotation} outside [-{MOTOR_LIMIT}, {MOTOR_LIMIT}]")


@dataclass(frozen=True)
class GraspResult:
    success: int

    def __post_init__(self):
        if self.success not in (0, 1):
            raise ValueError("success is 0 or 1")


@dataclass(frozen=True)
class Reset:
    pass


@dataclass(frozen=True)
class Bye:
    pass


MESSAGES = (Hello, ObjectDetected, GraspCommand, GraspResult, Reset, Bye)


# -- local events (never on the wire) ------------------------------------------

@dataclass(frozen=True)
class PredictionReady:
    command: GraspCommand


@dataclass(frozen=True)
class NoDetection:
    pass


@dataclass(frozen=True)
class RecordDone:
    pass


@dataclass(frozen=True)
class SensorTrigger:
    pass


@dataclass(frozen=True)
class GraspDone:
    success: int


@dataclass(frozen=True)
class FeedbackAcked:
    pass


@dataclass(frozen=True)
class Timeout:
    pass


# -- actions ------------------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    message: object


@dataclass(frozen=True)
class CaptureAndPredict:
    pass


@dataclass(frozen=True)
class Record:
    success: int


@dataclass(frozen=True)
class Abandon:
    """Drop the unfinished attempt of an interrupted cycle."""


@dataclass(frozen=True)
class Execute:
    rotation: float


@dataclass(frozen=True)
class Close:
    pass


# -- framing --------------------------------------------------------------------------

_NUMBER = r"[+-]?[0-9]+(?:\.[0-9]+)?"
_CMD = re.compile(rf"CMD ({_NUMBER}) ({_NUMBER})")


def encode_frame(msg):
    if isinstance(msg, Hello):
        line = f"HELLO {msg.version}"
    elif isinstance(msg, ObjectDetected):
        line = "DETECT"
    elif isinstance(msg, GraspCommand):
        line = f"CMD {msg.grip} {msg.rotation:.6f}"
    elif isinstance(msg, GraspResult):
        line = f"RESULT {msg.success}"
    elif isinstance(msg, Reset):
        line = "RESET"
    elif isinstance(msg, Bye):
        line = "BYE"
    else:
        raise TypeError(f"not a wire message: {msg!r}")
    return (line + "\n").encode("ascii")


def decode_frame(data):
    if not data.endswith(b"\n"):
        raise DecodeError(data, "missing newline terminator")
    try:
        line = data[:-1].decode("ascii")
    except UnicodeDecodeError:
        raise DecodeError(data, "not ASCII") from None
    if "\n" in line or "\r" in line:
        raise DecodeError(data, "embedded line break")
    if line == "DETECT":
        return ObjectDetected()
    if line == "RESET":
        return Reset()
    if line == "BYE":
        return Bye()
    m = re.fullmatch(r"HELLO ([0-9]+)", line)
    if m:
        return Hello(int(m.group(1)))
    m = re.fullmatch(r"RESULT ([01])", line)
    if m:
        return GraspResult(int(m.group(1)))
    m = _CMD.fullmatch(line)
    if m:
        grip, rotation = float(m.group(1)), float(m.group(2))
        try:
            return GraspCommand(rotation, grip)
        except ValueError as e:
            raise DecodeError(data, str(e)) from None
    verb = line.split(" ", 1)[0]
    if verb in ("HELLO", "RESULT", "CMD", "DETECT", "RESET", "BYE"):
        raise DecodeError(data, f"malformed {verb} arguments")
    raise DecodeError(data, f"unknown verb {verb!r}")


# -- brain machine ------------------------------------------------------------------

class BrainState(enum.Enum):
    WaitDetect = "WaitDetect"
    Predicting = "Predicting"
    AwaitFeedback = "AwaitFeedback"
    Recording = "Recording"


BRAIN_EVENTS = (Hello, ObjectDetected, GraspCommand, GraspResult, Reset, Bye,
                PredictionReady, NoDetection, RecordDone, Timeout)


def brain_step(state, event):
    S = BrainState
    if isinstance(event, Reset):
        return S.WaitDetect, ([Abandon()] if state in (S.Predicting, S.AwaitFeedback) else [])
    if state is S.WaitDetect:
        if isinstance(event, Hello) and event.version == PROTOCOL_VERSION:
            return state, []
        if isinstance(event, ObjectDetected):
            return S.Predicting, [CaptureAndPredict()]
        if isinstance(event, Bye):
            return state, [Close()]
    elif state is S.Predicting:
        if isinstance(event, PredictionReady):
            return S.AwaitFeedback, [Send(event.command)]
        if isinstance(event, NoDetection):
            return S.WaitDetect, [Send(Reset())]
    elif state is S.AwaitFeedback:
        if isinstance(event, GraspResult):
            return S.Recording, [Record(event.success)]
        if isinstance(event, Timeout):
            return S.WaitDetect, [Abandon(), Send(Reset())]
    elif state is S.Recording:
        if isinstance(event, RecordDone):
            return S.WaitDetect, []
    raise ProtocolViolation(state, event)


# -- robot machine ------------------------------------------------------------------

class RobotState(enum.Enum):
    Idle = "Idle"
    Reported = "Reported"
    Executing = "Executing"
    FeedbackSent = "FeedbackSent"


ROBOT_EVENTS = (Hello, ObjectDetected, GraspCommand, GraspResult, Reset, Bye,
                SensorTrigger, GraspDone, FeedbackAcked, Timeout)


def robot_step(state, event):
    S = RobotState
    if isinstance(event, Reset):
        return S.Idle, []
    if state is S.Idle:
        if isinstance(event, Hello) and event.version == PROTOCOL_VERSION:
            return state, [Send(Hello())]
        if isinstance(event, SensorTrigger):
            return S.Reported, [Send(ObjectDetected())]
        if isinstance(event, Bye):
            return state, [Close()]
    elif state is S.Reported:
        if isinstance(event, GraspCommand):
            return S.Executing, [Execute(event.rotation)]
        if isinstance(event, Timeout):
            return S.Idle, [Send(Reset())]
    elif state is S.Executing:
        if isinstance(event, GraspDone):
            return S.FeedbackSent, [Send(GraspResult(event.success))]
        if isinstance(event, Timeout):
            return S.Idle, [Send(Reset())]
    elif state is S.FeedbackSent:
        if isinstance(event, FeedbackAcked):
            return S.Idle, []
    raise ProtocolViolation(state, event)
