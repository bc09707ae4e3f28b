"""Simulated objects, their rasterization, and the grasp-success oracle."""

from dataclasses import dataclass, field
import math

import numpy as np

from .geometry import angular_distance_180

SHAPES = ("ellipse", "rectangle", "disc")

# independent per-attempt random streams, keyed by purpose
STREAM_OBJECT = 0
STREAM_ORACLE = 1
STREAM_POLICY = 2
STREAM_NOISE = 3


def stream(seed, purpose, index):
    """Random generator for one purpose of one attempt.

    Every consumer gets its own stream so the result of attempt ``index``
    does not depend on how many draws other attempts or other endpoints made.
    """
    key = [int(x) for x in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.default_rng(key + [int(purpose), int(index)])


class WorldConfigError(ValueError):
    pass


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class SimObject:
    shape: str
    orientation: float  # degrees in [0, 180), major axis from +x towards +y
    aspect: float  # major / minor
    scale: float  # minor semi-axis, pixels
    centroid: tuple
    intensity: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise WorldConfigError(f"unknown shape {self.shape!r}")
        if self.aspect < 1:
            raise WorldConfigError("aspect must be >= 1")
        if self.shape == "disc" and self.aspect != 1:
            raise WorldConfigError("a disc has aspect 1")
        if not 0 < self.intensity <= 1:
            raise WorldConfigError("intensity must lie in (0, 1]")

    @property
    def major(self):
        return self.scale * self.aspect

    def half_extents(self):
        """Half width and half height of the axis-aligned box around the shape."""
        a, b = self.major, self.scale
        t = math.radians(self.orientation)
        c, s = abs(math.cos(t)), abs(math.sin(t))
        if self.shape == "disc":
            return b, b
        if self.shape == "rectangle":
            return a * c + b * s, a * s + b * c
        return math.hypot(a * c, b * s), math.hypot(a * s, b * c)


@dataclass(frozen=True)
class WorldConfig:
    shapes: tuple = SHAPES
    aspect_range: tuple = (1.0, 5.0)
    scale_range: tuple = (2.0, 4.0)
    intensity_range: tuple = (0.6, 1.0)
    width: int = 64
    height: int = 64
    margin: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise WorldConfigError(f"shapes must be a non-empty subset of {SHAPES}")
        for name in ("aspect_range", "scale_range", "intensity_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise WorldConfigError(f"{name} is empty: {lo} > {hi}")
        if self.aspect_range[0] < 1:
            raise WorldConfigError("aspect_range must start at >= 1")
        if self.scale_range[0] <= 0:
            raise WorldConfigError("scale_range must be positive")
        if not (0 < self.intensity_range[0] and self.intensity_range[1] <= 1):
            raise WorldConfigError("intensity_range must lie in (0, 1]")
        b = self.scale_range[1]
        worst = math.hypot(b * self.aspect_range[1], b) + self.margin
        if 2 * worst >= min(self.width, self.height):
            raise WorldConfigError("largest object does not fit in the scene")
        if self.noise < 0:
            raise WorldConfigError("noise must be >= 0")


ELONGATED = WorldConfig(shapes=("ellipse", "rectangle"), aspect_range=(2.0, 5.0))
DISCS = WorldConfig(shapes=("disc",))
PRESETS = {"default": WorldConfig(), "elongated": ELONGATED, "discs": DISCS}


@dataclass(frozen=True)
class OracleConfig:
    tolerance: float = 15.0
    round_aspect: float = 1.2
    flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tolerance <= 90:
            raise WorldConfigError("tolerance must lie in (0, 90]")
        if not 0 <= self.flip_prob < 0.5:
            raise WorldConfigError("flip_prob must lie in [0, 0.5)")


def spawn_object(rng, cfg=WorldConfig()):
    shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
    orientation = float(rng.uniform(0.0, 180.0))
    aspect = 1.0 if shape == "disc" else float(rng.uniform(*cfg.aspect_range))
    scale = float(rng.uniform(*cfg.scale_range))
    intensity = float(rng.uniform(*cfg.intensity_range))
    probe = SimObject(shape, orientation, aspect, scale, (0.0, 0.0), intensity)
    hx, hy = probe.half_extents()
    x = float(rng.uniform(hx + cfg.margin, cfg.width - hx - cfg.margin))
    y = float(rng.uniform(hy + cfg.margin, cfg.height - hy - cfg.margin))
    return SimObject(shape, orientation, aspect, scale, (x, y), intensity)


def shape_mask(obj, width, height):
    """Boolean mask of pixels whose centers fall inside ``obj``.

    Pixel (row i, column j) covers [j, j+1) x [i, i+1); its center is
    (j + 0.5, i + 0.5).
    """
    cx, cy = obj.centroid
    dx = np.arange(width) + 0.5 - cx
    dy = (np.arange(height) + 0.5 - cy)[:, None]
    if obj.shape == "disc":
        return dx * dx + dy * dy <= obj.scale * obj.scale
    t = math.radians(obj.orientation)
    c, s = math.cos(t), math.sin(t)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    a, b = obj.major, obj.scale
    if obj.shape == "rectangle":
        return (np.abs(u) <= a) & (np.abs(v) <= b)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def render(obj, width=64, height=64, noise=0.0, rng=None):
    hx, hy = obj.half_extents()
    cx, cy = obj.centroid
    if cx - hx < 0 or cy - hy < 0 or cx + hx > width or cy + hy > height:
        raise RenderError(f"object at {obj.centroid} does not fit in a {width}x{height} scene")
    img = np.where(shape_mask(obj, width, height), obj.intensity, 0.0)
    if noise > 0:
        if rng is None:
            raise RenderError("noisy rendering needs an rng")
        img = np.clip(img + rng.normal(0.0, noise, img.shape), 0.0, 1.0)
    return img


def optimal_grasp_angle(obj):
    # jaws close across the minor axis
    return (obj.orientation + 90.0) % 180.0


def is_round(obj, cfg=OracleConfig()):
    return obj.aspect <= cfg.round_aspect


def grasp_oracle(obj, gripper, cfg=OracleConfig(), rng=None):
    if not 0 <= gripper <= 180:
        raise ValueError(f"gripper angle must lie in [0, 180], got {gripper!r}")
    if is_round(obj, cfg):
        ok = True
    else:
        ok = angular_distance_180(gripper, optimal_grasp_angle(obj)) <= cfg.tolerance
    if cfg.flip_prob > 0:
        if rng is None:
            raise ValueError("label noise needs an rng")
        ok ^= bool(rng.random() < cfg.flip_prob)
    return int(ok)


@dataclass
class World:
    """A seeded stream of objects; attempt ``k`` always sees the same object."""

    cfg: WorldConfig = field(default_factory=WorldConfig)
    seed: object = 0  # int, or a tuple of ints to namespace the streams

    def object_for(self, k):
        return spawn_object(stream(self.seed, STREAM_OBJECT, k), self.cfg)

    def scene_for(self, k):
        obj = self.object_for(k)
        rng = stream(self.seed, STREAM_NOISE, k) if self.cfg.noise > 0 else None
        return obj, render(obj, self.cfg.width, self.cfg.height, self.cfg.noise, rng)
