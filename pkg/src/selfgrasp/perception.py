"""Blob detection and patch cropping.

Coordinates are continuous pixel coordinates: pixel (i, j) spans
[j, j+1) x [i, i+1), so its center sits at (j + 0.5, i + 0.5).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage

MIN_AREA = 4
PATCH_SIDE = 32
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    centroid: tuple  # (x, y)
    bbox: tuple  # (x_min, y_min, x_max, y_max), pixel edges
    area: int

    def status(self):
        x, y = self.centroid
        return f"label={self.label} confidence={self.confidence:.2f} x={x:.1f} y={y:.1f}"


class BlobDetector:
    """Thresholded 4-connected components; the default detector."""

    def __init__(self, threshold=0.1, min_area=MIN_AREA):
        if not 0 < threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        self.threshold = threshold
        self.min_area = min_area

    def __call__(self, scene):
        return detect(scene, self.threshold, self.min_area)


def detect(scene, threshold=0.1, min_area=MIN_AREA):
    scene = np.asarray(scene, dtype=float)
    labels, _ = ndimage.label(scene > threshold, structure=FOUR_CONNECTED)
    found = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        sub = labels[sl] == k
        area = int(sub.sum())
        if area < min_area:
            continue
        w = np.where(sub, scene[sl], 0.0)
        total = w.sum()
        cx = float(w.sum(axis=0) @ (np.arange(sl[1].start, sl[1].stop) + 0.5) / total)
        cy = float(w.sum(axis=1) @ (np.arange(sl[0].start, sl[0].stop) + 0.5) / total)
        bbox = (sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        found.append(Detection("object", float(total / area), (cx, cy), bbox, area))
    found.sort(key=lambda d: (-d.area, d.bbox[1], d.bbox[0]))
    return found


def crop_patch(scene, det, side=PATCH_SIDE):
    """Square ``side`` x ``side`` window centered on the detection, zero-padded at the borders."""
    if side <= 0:
        raise ValueError("side must be positive")
    scene = np.asarray(scene, dtype=float)
    h, w = scene.shape
    cx, cy = det.centroid if isinstance(det, Detection) else det
    x0 = math.floor(cx - side / 2 + 0.5)
    y0 = math.floor(cy - side / 2 + 0.5)
    out = np.zeros((side, side))
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + side, w), min(y0 + side, h)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = scene[sy0:sy1, sx0:sx1]
    return out


def moment_orientation(img):
    """Major-axis angle in [0, 180) degrees from second-order central moments."""
    img = np.asarray(img, dtype=float)
    ys, xs = np.indices(img.shape)
    m = img.sum()
    cx = (img * xs).sum() / m
    cy = (img * ys).sum() / m
    mu20 = (img * (xs - cx) ** 2).sum()
    mu02 = (img * (ys - cy) ** 2).sum()
    mu11 = (img * (xs - cx) * (ys - cy)).sum()
    return math.degrees(0.5 * math.atan2(2 * mu11, mu20 - mu02)) % 180.0
