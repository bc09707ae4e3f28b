"""The 18-output convolutional grasp-angle classifier, written from scratch in numpy.

Each output is an independent "graspable at this angle" logit. Training only
ever sees the logit of the angle that was actually attempted, scored with
binary cross-entropy against the observed success bit.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import N_CLASSES

INPUT_SHAPE = (1, 32, 32)
MAGIC = b"GFN1"
FORMAT_VERSION = 1
KIND_CODES = {"conv": 1, "relu": 2, "maxpool": 3, "flatten": 4, "dense": 5}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


class ArchitectureError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    """Raised by :func:`load_model`; ``field`` names the part of the file that failed."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Layer:
    kind: str
    dims: tuple = (0, 0, 0, 0)


def default_architecture():
    none = (0, 0, 0, 0)
    return (
        Layer("conv", (1, 8, 3, 3)),
        Layer("relu", none),
        Layer("maxpool", (2, 0, 0, 0)),
        Layer("conv", (8, 16, 3, 3)),
        Layer("relu", none),
        Layer("maxpool", (2, 0, 0, 0)),
        Layer("flatten", (16 * 8 * 8, 0, 0, 0)),
        Layer("dense", (1024, 64, 0, 0)),
        Layer("relu", none),
        Layer("dense", (64, N_CLASSES, 0, 0)),
    )


def check_architecture(layers, input_shape=INPUT_SHAPE):
    """Walk the layer list and return the output shape, raising on any inconsistency."""
    shape = tuple(input_shape)
    for i, layer in enumerate(layers):
        d = layer.dims
        if layer.kind == "conv":
            if len(shape) != 3 or d[0] != shape[0]:
                raise ArchitectureError(f"layer {i}: conv expects {d[0]} input channels, got shape {shape}")
            if d[2] != d[3] or d[2] % 2 == 0:
                raise ArchitectureError(f"layer {i}: conv kernel must be square and odd, got {d[2]}x{d[3]}")
            shape = (d[1], shape[1], shape[2])
        elif layer.kind == "relu":
            pass
        elif layer.kind == "maxpool":
            k = d[0]
            if len(shape) != 3 or k < 1 or shape[1] % k or shape[2] % k:
                raise ArchitectureError(f"layer {i}: pool size {k} does not divide {shape}")
            shape = (shape[0], shape[1] // k, shape[2] // k)
        elif layer.kind == "flatten":
            n = int(np.prod(shape))
            if d[0] != n:
                raise ArchitectureError(f"layer {i}: flatten declares {d[0]} features, input has {n}")
            shape = (n,)
        elif layer.kind == "dense":
            if len(shape) != 1 or d[0] != shape[0]:
                raise ArchitectureError(f"layer {i}: dense expects {d[0]} inputs, got shape {shape}")
            shape = (d[1],)
        else:
            raise ArchitectureError(f"layer {i}: unknown kind {layer.kind!r}")
    if shape != (N_CLASSES,):
        raise ArchitectureError(f"network must end in {N_CLASSES} outputs, ends in {shape}")
    return shape


def param_shapes(layer):
    d = layer.dims
    if layer.kind == "conv":
        return [(d[1], d[0], d[2], d[3]), (d[1],)]
    if layer.kind == "dense":
        return [(d[0], d[1]), (d[1],)]
    return []


def fan_in(layer):
    d = layer.dims
    return d[0] * d[2] * d[3] if layer.kind == "conv" else d[0]


@dataclass
class Network:
    layers: tuple
    params: list  # one list of arrays per layer, empty for parameter-free layers
    seed: int = 0

    def flat_params(self):
        return [p for ps in self.params for p in ps]

    def copy(self):
        return Network(self.layers, [[p.copy() for p in ps] for ps in self.params], self.seed)

    def n_params(self):
        return sum(p.size for p in self.flat_params())


def init_network(seed=0, layers=None):
    layers = tuple(layers or default_architecture())
    check_architecture(layers)
    rng = np.random.default_rng(seed)
    params = []
    for layer in layers:
        shapes = param_shapes(layer)
        if not shapes:
            params.append([])
            continue
        bound = math.sqrt(6.0 / fan_in(layer))
        params.append([rng.uniform(-bound, bound, shapes[0]), np.zeros(shapes[1])])
    return Network(layers, params, seed)


# -- layer kernels -------------------------------------------------------------

def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(n, h, wd, -1).transpose(0, 3, 1, 2), cols


def _conv_backward(g, x_shape, cols, w, need_dx):
    n, c, h, wd = x_shape
    o, _, k, _ = w.shape
    gf = g.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (gf.T @ cols).reshape(w.shape)
    db = gf.sum(axis=0)
    if not need_dx:
        return None, dw, db
    p = k // 2
    dcols = (gf @ w.reshape(o, -1)).reshape(n, h, wd, c, k, k)
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p:p + h, p:p + wd], dw, db


def _pool_forward(x, k):
    n, c, h, w = x.shape
    r = x.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // k, w // k, k * k)
    idx = r.argmax(axis=-1)  # ties route to the first position
    return np.take_along_axis(r, idx[..., None], axis=-1)[..., 0], idx


def _pool_backward(g, idx, x_shape, k):
    n, c, h, w = x_shape
    r = np.zeros((n, c, h // k, w // k, k * k))
    np.put_along_axis(r, idx[..., None], g[..., None], axis=-1)
    return r.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)


def _as_batch(patches):
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != INPUT_SHAPE[1:]:
        raise ValueError(f"patches must be {INPUT_SHAPE[1]}x{INPUT_SHAPE[2]}, got shape {x.shape}")
    return x[:, None]


def _forward(net, x):
    caches = []
    for layer, ps in zip(net.layers, net.params):
        if layer.kind == "conv":
            out, cols = _conv_forward(x, *ps)
            caches.append((x.shape, cols))
        elif layer.kind == "relu":
            out = np.maximum(x, 0.0)
            caches.append(x > 0)
        elif layer.kind == "maxpool":
            out, idx = _pool_forward(x, layer.dims[0])
            caches.append((x.shape, idx))
        elif layer.kind == "flatten":
            out = x.reshape(x.shape[0], -1)
            caches.append(x.shape)
        else:
            out = x @ ps[0] + ps[1]
            caches.append(x)
        x = out
    return x, caches


def _backward(net, g, caches):
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer, ps, cache = net.layers[i], net.params[i], caches[i]
        if layer.kind == "conv":
            g, dw, db = _conv_backward(g, cache[0], cache[1], ps[0], need_dx=i > 0)
            grads[i] = [dw, db]
        elif layer.kind == "relu":
            g = g * cache
        elif layer.kind == "maxpool":
            g = _pool_backward(g, cache[1], cache[0], layer.dims[0])
        elif layer.kind == "flatten":
            g = g.reshape(cache)
        else:
            grads[i] = [cache.T @ g, g.sum(axis=0)]
            g = g @ ps[0].T
        if grads[i] is None:
            grads[i] = []
    return grads


# -- inference and loss ---------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    chosen: int

    def likelihoods(self):
        return sigmoid(self.logits)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logits(net, patches):
    out, _ = _forward(net, _as_batch(patches))
    return out


def forward(net, patch):
    z = logits(net, patch)
    if z.shape[0] != 1:
        raise ValueError("forward takes a single patch; use logits() for batches")
    z = z[0]
    return Prediction(z, int(np.argmax(z)))  # argmax returns the lowest index on ties


def bce_with_logits(z, s):
    """-[s log sigmoid(z) + (1 - s) log(1 - sigmoid(z))] without overflow."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) - z * s + np.log1p(np.exp(-np.abs(z)))


def loss(net, patch, attempted, success):
    z = forward(net, patch).logits[attempted]
    return float(bce_with_logits(z, success))


def loss_and_grads(net, patches, attempted, success):
    """Mean per-attempted-class loss over a batch and its gradient for every parameter."""
    x = _as_batch(patches)
    attempted = np.asarray(attempted, dtype=int)
    success = np.asarray(success, dtype=float)
    z, caches = _forward(net, x)
    n = x.shape[0]
    rows = np.arange(n)
    zc = z[rows, attempted]
    value = float(bce_with_logits(zc, success).mean())
    g = np.zeros_like(z)
    g[rows, attempted] = (sigmoid(zc) - success) / n
    return value, _backward(net, g, caches)


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def stack_points(points):
    patches = np.stack([np.asarray(p.patch, dtype=float) for p in points])
    attempted = np.array([p.attempted for p in points], dtype=int)
    success = np.array([p.success for p in points], dtype=float)
    return patches, attempted, success


def train(net, dataset, cfg=TrainConfig(), log=None):
    """Minibatch SGD with momentum. Returns the trained copy and per-epoch mean losses."""
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    patches, attempted, success = stack_points(dataset)
    net = net.copy()
    velocity = [[np.zeros_like(p) for p in ps] for ps in net.params]
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads = loss_and_grads(net, patches[idx], attempted[idx], success[idx])
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch starting at {start}")
            total += value * len(idx)
            for ps, gs, vs in zip(net.params, grads, velocity):
                for p, g, v in zip(ps, gs, vs):
                    v *= cfg.momentum
                    v -= cfg.lr * g
                    p += v
        history.append(total / n)
        if not all(np.isfinite(p).all() for p in net.flat_params()):
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss={history[-1]:.6f}")
    return net, history


# -- finite-difference check ---------------------------------------------------

def gradient_check(net, sample, h=1e-5, n_params=256, n_directions=8, seed=0):
    """Compare analytic and central-difference directional derivatives of the loss.

    Each direction is a random Gaussian vector supported on ``n_params``
    randomly chosen parameters. Returns the largest relative error, with the
    denominator floored at 1e-8.
    """
    patch, attempted, success = sample
    _, grads = loss_and_grads(net, patch, [attempted], [success])
    flat_p = net.flat_params()
    flat_g = [g for gs in grads for g in gs]
    sizes = np.array([p.size for p in flat_p])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    g_all = np.concatenate([g.ravel() for g in flat_g])
    worst = 0.0
    for _ in range(n_directions):
        chosen = rng.choice(total, size=min(n_params, total), replace=False)
        d = np.zeros(total)
        d[chosen] = rng.normal(size=chosen.size)
        analytic = float(g_all @ d)
        numeric = (_loss_shifted(net, flat_p, offsets, d, h, sample)
                   - _loss_shifted(net, flat_p, offsets, d, -h, sample)) / (2 * h)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def _loss_shifted(net, flat_p, offsets, d, h, sample):
    saved = [p.copy() for p in flat_p]
    try:
        for i, p in enumerate(flat_p):
            p += h * d[offsets[i]:offsets[i + 1]].reshape(p.shape)
        return loss(net, *sample)
    finally:
        for p, s in zip(flat_p, saved):
            p[...] = s


# -- model file -------------------------------------------------------------------

def to_bytes(net):
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        out.append(struct.pack("<5I", KIND_CODES[layer.kind], *layer.dims))
    for p in net.flat_params():
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


def from_bytes(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise ModelFormatError("magic", f"expected {MAGIC!r}, got {bytes(data[:4])!r}")
    pos = 4
    if len(data) < pos + 8:
        raise ModelFormatError("header", "file ends inside the header")
    version, count = struct.unpack_from("<2I", data, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise ModelFormatError("version", f"unsupported format version {version}")
    if len(data) < pos + 20 * count:
        raise ModelFormatError("architecture", "file ends inside the layer table")
    layers = []
    for i in range(count):
        code, *dims = struct.unpack_from("<5I", data, pos)
        pos += 20
        if code not in KIND_NAMES:
            raise ModelFormatError("architecture", f"layer {i} has unknown kind code {code}")
        layers.append(Layer(KIND_NAMES[code], tuple(dims)))
    try:
        check_architecture(layers)
    except ArchitectureError as e:
        raise ModelFormatError("dimensions", str(e)) from None
    params = []
    for layer in layers:
        ps = []
        for shape in param_shapes(layer):
            nbytes = 8 * int(np.prod(shape))
            if len(data) < pos + nbytes:
                raise ModelFormatError("parameters", f"truncated: need {pos + nbytes} bytes, file has {len(data)}")
            ps.append(np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64))
            pos += nbytes
        params.append(ps)
    if pos != len(data):
        raise ModelFormatError("parameters", f"{len(data) - pos} trailing bytes after the parameter block")
    return Network(tuple(layers), params)


def save_model(net, path):
    with open(path, "wb") as f:
        f.write(to_bytes(net))


def load_model(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())
