"""Self-labelled grasp attempts stored as images whose filenames carry the labels.

An attempt is first written as ``train_img_<gc>.pgm``. Once the robot
reports back, the file is renamed to ``<success>_<class>_train_img_<gc>.pgm``.
The filename is the only place the labels live.
"""

from dataclasses import dataclass
import os
from pathlib import Path
import re
import tempfile
import warnings

import numpy as np

from .geometry import N_CLASSES

DEFAULT_EXT = "pgm"
GC_FILE = "gc_file.txt"


class DatasetError(Exception):
    pass


class FilenameError(DatasetError):
    def __init__(self, filename, component, message):
        super().__init__(f"{filename!r}: bad {component}: {message}")
        self.filename = filename
        self.component = component


class PGMError(DatasetError):
    pass


class DatasetWarning(UserWarning):
    pass


# -- portable graymap ------------------------------------------------------------

def quantize(img):
    """Gray levels in [0, 1] to 8-bit."""
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_pgm(img):
    data = quantize(img)
    if data.ndim != 2:
        raise PGMError(f"expected a 2-D image, got shape {data.shape}")
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def _header_tokens(data, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError("truncated header")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PGMError("header must end in a single whitespace byte")
    return tokens, pos + 1


def decode_pgm(data):
    """Binary (P5) 8-bit graymap to a uint8 array."""
    if data[:2] != b"P5":
        raise PGMError(f"not a binary graymap (magic {bytes(data[:2])!r})")
    tokens, pos = _header_tokens(data, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMError(f"non-numeric header field in {tokens[1:]!r}") from None
    if not 0 < maxval < 256:
        raise PGMError(f"only 8-bit graymaps are supported, maxval={maxval}")
    if w <= 0 or h <= 0:
        raise PGMError(f"bad dimensions {w}x{h}")
    body = data[pos:]
    if len(body) != w * h:
        raise PGMError(f"expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, img):
    Path(path).write_bytes(encode_pgm(img))


def read_pgm(path):
    return decode_pgm(Path(path).read_bytes())


# -- filenames --------------------------------------------------------------------

@dataclass(frozen=True)
class ParsedName:
    gc: int
    attempted: int = None
    success: int = None

    @property
    def provisional(self):
        return self.success is None


def provisional_name(gc, ext=DEFAULT_EXT):
    if gc < 0:
        raise ValueError("gc must be >= 0")
    return f"train_img_{int(gc)}.{ext}"


def finalize_name(gc, attempted, success, ext=DEFAULT_EXT):
    if success not in (0, 1) or not 0 <= attempted < N_CLASSES:
        raise ValueError(f"bad labels success={success!r} attempted={attempted!r}")
    return f"{int(success)}_{int(attempted)}_" + provisional_name(gc, ext)


def _patterns(ext):
    e = re.escape(ext)
    return (re.compile(rf"^([01])_([0-9]|1[0-7])_train_img_([0-9]+)\.{e}$"),
            re.compile(rf"^train_img_([0-9]+)\.{e}$"))


def parse_name(filename, ext=DEFAULT_EXT):
    final, prov = _patterns(ext)
    m = final.match(filename)
    if m:
        return ParsedName(int(m.group(3)), int(m.group(2)), int(m.group(1)))
    m = prov.match(filename)
    if m:
        return ParsedName(int(m.group(1)))
    raise FilenameError(filename, *_diagnose(filename, ext))


def _diagnose(filename, ext):
    suffix = "." + ext
    if not filename.endswith(suffix):
        return "extension", f"expected {suffix!r}"
    stem = filename[:-len(suffix)]
    head, sep, gc = stem.rpartition("train_img_")
    if not sep:
        return "template", "missing 'train_img_'"
    if not re.fullmatch(r"[0-9]+", gc):
        return "counter", f"{gc!r} is not a decimal counter"
    if head == "":
        return "template", "unexpected text"
    parts = head.split("_")
    if len(parts) != 3 or parts[2] != "":
        return "prefix", "expected '<success>_<class>_'"
    if parts[0] not in ("0", "1"):
        return "success", f"{parts[0]!r} must be 0 or 1"
    return "class", f"{parts[1]!r} must be an integer in 0..{N_CLASSES - 1}"


# -- the store ----------------------------------------------------------------------

@dataclass
class DataPoint:
    patch: np.ndarray
    attempted: int
    success: int
    gc: int

    def __eq__(self, other):
        return (isinstance(other, DataPoint)
                and (self.attempted, self.success, self.gc) == (other.attempted, other.success, other.gc)
                and np.array_equal(self.patch, other.patch))


class DatasetStore:
    """Single-writer view of one dataset directory."""

    def __init__(self, directory, ext=DEFAULT_EXT):
        self.dir = Path(directory)
        self.ext = ext

    def _files_for(self, gc):
        tail = f"train_img_{gc}.{self.ext}"
        return [p for p in self.dir.iterdir() if p.name == tail or p.name.endswith("_" + tail)]

    def write_point(self, patch, gc):
        self.dir.mkdir(parents=True, exist_ok=True)
        clash = self._files_for(gc)
        if clash:
            raise DatasetError(f"gc {gc} already used by {clash[0].name}")
        _atomic_write(self.dir / provisional_name(gc, self.ext), encode_pgm(patch))

    def finalize_point(self, gc, attempted, success):
        src = self.dir / provisional_name(gc, self.ext)
        if not src.exists():
            raise DatasetError(f"no provisional image {src.name} to finalize")
        os.rename(src, self.dir / finalize_name(gc, attempted, success, self.ext))

    def discard_point(self, gc):
        src = self.dir / provisional_name(gc, self.ext)
        if src.exists():
            src.unlink()

    def next_gc(self):
        """First unused counter, from gc_file.txt and the files on disk."""
        nxt = 0
        f = self.dir / GC_FILE
        if f.exists():
            text = f.read_text().strip()
            if not text.isdigit():
                raise DatasetError(f"{f} holds {text!r}, not a counter")
            nxt = int(text) + 1
        if self.dir.exists():
            for p in self.dir.iterdir():
                try:
                    nxt = max(nxt, parse_name(p.name, self.ext).gc + 1)
                except FilenameError:
                    pass
        return nxt

    def record_gc(self, gc):
        self.dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.dir / GC_FILE, str(gc).encode("ascii"))

    def provisional_leftovers(self):
        out = []
        for p in sorted(self.dir.iterdir()):
            try:
                if parse_name(p.name, self.ext).provisional:
                    out.append(p)
            except FilenameError:
                pass
        return out


def _atomic_write(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def scan_dataset(directory, ext=DEFAULT_EXT):
    """Load every finalized point; returns (points sorted by gc, list of issue strings)."""
    points, issues = [], []
    for p in sorted(Path(directory).iterdir()):
        if not p.is_file() or not p.name.endswith("." + ext):
            continue
        try:
            parsed = parse_name(p.name, ext)
        except FilenameError as e:
            issues.append(str(e))
            continue
        if parsed.provisional:
            issues.append(f"{p.name!r}: unlabelled attempt left by an interrupted cycle")
            continue
        try:
            img = read_pgm(p)
        except (PGMError, OSError) as e:
            issues.append(f"{p.name!r}: {e}")
            continue
        points.append(DataPoint(img.astype(np.float64) / 255.0, parsed.attempted, parsed.success, parsed.gc))
    points.sort(key=lambda d: d.gc)
    seen = set()
    for d in points:
        if d.gc in seen:
            raise DatasetError(f"duplicate gc {d.gc} in {directory}")
        seen.add(d.gc)
    return points, issues


def load_dataset(directory, ext=DEFAULT_EXT):
    points, issues = scan_dataset(directory, ext)
    for msg in issues:
        warnings.warn(msg, DatasetWarning, stacklevel=2)
    return points


@dataclass(frozen=True)
class DatasetStats:
    successful: int
    unsuccessful: int

    @property
    def total(self):
        return self.successful + self.unsuccessful

    @property
    def rate(self):
        return self.successful / self.total if self.total else 0.0

    def table(self, title="Overall Statistics"):
        rows = [("Successful Grasps", self.successful),
                ("Unsuccessful Grasps", self.unsuccessful),
                ("Total Grasps", self.total)]
        width = max(len(title), *(len(r[0]) for r in rows)) + 2
        lines = [title, "-" * (width + 8)]
        lines += [f"{name:<{width}}{value:>8}" for name, value in rows]
        lines.append(f"{'Success Rate':<{width}}{100 * self.rate:>7.2f}%")
        return "\n".join(lines)

    def kv(self, prefix=""):
        return [f"{prefix}successful={self.successful}",
                f"{prefix}unsuccessful={self.unsuccessful}",
                f"{prefix}total={self.total}",
                f"{prefix}rate={self.rate:.6f}"]


def stats(points):
    s = sum(int(p.success) for p in points)
    return DatasetStats(s, len(points) - s)
