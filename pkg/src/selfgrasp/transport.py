"""Links that carry handshake messages between the two endpoints.

``WireLink`` speaks newline-delimited frames over a TCP stream. The file
links reproduce the polled text-file exchange of the original rig:

    objectstatus.txt   "1" object present, "0" grasp cycle complete   (robot writes)
    cnnoutput.txt      "0.5\\n<rotation>"                              (brain writes)
    graspfeedback.txt  "1" or "0"                                      (robot writes)
    gc_file.txt        decimal attempt counter                         (brain writes)

``recv`` returns ``None`` on timeout and raises :class:`TransportError` when
the peer is gone or a file is unreadable.
"""

import os
from pathlib import Path
import socket
import tempfile
import time

from .geometry import GRIP
from .protocol import (DecodeError, GraspCommand, GraspResult, ObjectDetected, Reset, decode_frame,
                       encode_frame)

DEFAULT_PORT = 7461
OBJECT_STATUS = "objectstatus.txt"
CNN_OUTPUT = "cnnoutput.txt"
GRASP_FEEDBACK = "graspfeedback.txt"
GC_FILE = "gc_file.txt"


class TransportError(Exception):
    pass


class WireLink:
    has_handshake = True

    def __init__(self, sock):
        self.sock = sock
        self.reader = sock.makefile("rb")

    @classmethod
    def connect(cls, host, port, timeout=30.0, retry=0.05):
        deadline = time.monotonic() + timeout
        while True:
            try:
                return cls(socket.create_connection((host, port), timeout=timeout))
            except OSError as e:
                if time.monotonic() >= deadline:
                    raise TransportError(f"peer at {host}:{port} unreachable: {e}") from None
                time.sleep(retry)

    def send(self, msg):
        try:
            self.sock.sendall(encode_frame(msg))
        except OSError as e:
            raise TransportError(f"send failed: {e}") from None

    def recv(self, timeout):
        self.sock.settimeout(timeout)
        try:
            line = self.reader.readline()
        except socket.timeout:
            return None
        except OSError as e:
            raise TransportError(f"receive failed: {e}") from None
        if not line:
            raise TransportError("peer closed the connection")
        try:
            return decode_frame(line)
        except DecodeError as e:
            raise TransportError(str(e)) from None

    def close(self):
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


def listen(host="127.0.0.1", port=DEFAULT_PORT):
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        srv.bind((host, port))
        srv.listen(1)
    except OSError as e:
        srv.close()
        raise TransportError(f"cannot listen on {host}:{port}: {e}") from None
    return srv


def accept(srv, timeout=30.0):
    srv.settimeout(timeout)
    try:
        conn, _ = srv.accept()
    except socket.timeout:
        raise TransportError(f"no peer connected within {timeout} s") from None
    conn.settimeout(None)
    return WireLink(conn)


# -- polled files -----------------------------------------------------------------------

def write_text(path, text):
    """Replace ``path`` atomically so a polling peer never sees a half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def read_text(path, required=True):
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        if required:
            raise TransportError(f"{path} is missing") from None
        return None
    except OSError as e:
        raise TransportError(f"cannot read {path}: {e}") from None


def _flag(text, path):
    if text is None:
        return None
    if text.strip() not in ("0", "1"):
        raise TransportError(f"{path} holds {text!r}, expected '0' or '1'")
    return text.strip()


def format_command(rotation):
    return str(GRIP) + "\n" + str(rotation)


def parse_command(text, path=CNN_OUTPUT):
    lines = text.split("\n")
    if len(lines) != 2 or lines[0] != str(GRIP):
        raise TransportError(f"{path} holds {text!r}, expected '0.5' and a rotation")
    try:
        return GraspCommand(float(lines[1]))
    except ValueError as e:
        raise TransportError(f"{path}: {e}") from None


class _Poller:
    def __init__(self, directory, poll_interval):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.poll_interval = poll_interval

    def _poll(self, check, timeout):
        deadline = time.monotonic() + timeout
        while True:
            got = check()
            if got is not None:
                return got
            if time.monotonic() >= deadline:
                return None
            time.sleep(self.poll_interval)


class BrainFileLink(_Poller):
    """The brain side: watches objectstatus.txt for edges, writes the command files.

    A rising edge of objectstatus is a detection; a falling edge means the
    grasp is done and graspfeedback.txt is current. The file exchange has no
    way to send Reset or Bye, so those are swallowed; after a Reset the next
    falling edge is ignored because it carries no fresh feedback.
    """

    has_handshake = False

    def __init__(self, directory, poll_interval=3.0, gc_source=lambda: 0):
        super().__init__(directory, poll_interval)
        self.gc_source = gc_source
        self.last = "0"
        self.discard_next_fall = False

    def _check(self):
        status = _flag(read_text(self.dir / OBJECT_STATUS, required=False), OBJECT_STATUS)
        if status is None or status == self.last:
            return None
        self.last = status
        if status == "1":
            return ObjectDetected()
        if self.discard_next_fall:
            self.discard_next_fall = False
            return None
        fb = _flag(read_text(self.dir / GRASP_FEEDBACK), GRASP_FEEDBACK)
        return GraspResult(int(fb))

    def recv(self, timeout):
        return self._poll(self._check, timeout)

    def send(self, msg):
        if isinstance(msg, GraspCommand):
            write_text(self.dir / CNN_OUTPUT, format_command(msg.rotation))
            write_text(self.dir / GC_FILE, str(self.gc_source()))
        elif isinstance(msg, Reset):
            self.discard_next_fall = self.last == "1"

    def close(self):
        pass


class RobotFileLink(_Poller):
    """The robot side: raises and lowers objectstatus.txt, watches gc_file.txt for new commands.

    After lowering objectstatus the robot holds it low for ``settle``
    seconds before the next object arrives, so a brain polling every
    ``poll_interval`` sees the falling edge.
    """

    has_handshake = False

    def __init__(self, directory, poll_interval=3.0, settle=None):
        super().__init__(directory, poll_interval)
        self.settle = 2 * poll_interval + 0.05 if settle is None else settle
        self.lowered_at = None
        self.baseline = None

    def send(self, msg):
        if isinstance(msg, ObjectDetected):
            if self.lowered_at is not None:
                wait = self.lowered_at + self.settle - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
            self.baseline = read_text(self.dir / GC_FILE, required=False)
            write_text(self.dir / OBJECT_STATUS, "1")
        elif isinstance(msg, GraspResult):
            write_text(self.dir / GRASP_FEEDBACK, str(msg.success))
            self._lower()
        elif isinstance(msg, Reset):
            self._lower()

    def _lower(self):
        write_text(self.dir / OBJECT_STATUS, "0")
        self.lowered_at = time.monotonic()

    def _check(self):
        gc = read_text(self.dir / GC_FILE, required=False)
        if gc is None or gc == self.baseline:
            return None
        self.baseline = gc
        return parse_command(read_text(self.dir / CNN_OUTPUT))

    def recv(self, timeout):
        return self._poll(self._check, timeout)

    def close(self):
        pass

