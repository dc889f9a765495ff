"""Dense tensor layers with hand-written forward/backward passes.

Tensors are plain numpy arrays (shape + row-major buffer). Layers operate on
batches [B, ...]; every backward is the exact gradient of its forward and is
checked against central finite differences in the test suite. Training runs
in single precision by default; the same code paths run in double precision
for the gradient checks.

The reference classifier is three 3x3 conv blocks (16, 32, 64 channels, each
followed by relu and 2x2 max-pooling), then flatten, dropout, a 500-unit
hidden layer with relu and dropout, and the class logits. On a 1x300x300
input the flatten width is 87,616.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

CHECKPOINT_MAGIC = b"WVDN"
CHECKPOINT_VERSION = 1


# -- layer implementations ---------------------------------------------------


class Conv2d:
    """2D cross-correlation with zero padding, via im2col + matmul."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, dtype=np.float32, rng=None):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kh, self.kw = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * self.kh * self.kw
        bound = np.sqrt(6.0 / fan_in)  # kaiming-uniform, relu gain
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = rng.uniform(-bound, bound, size=(out_ch, in_ch, self.kh, self.kw)).astype(dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)
        self._cache = None

    def _im2col(self, x):
        b, c, h, w = x.shape
        p, s = self.padding, self.stride
        if c != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {c}")
        hout, rem_h = divmod(h + 2 * p - self.kh, s)
        wout, rem_w = divmod(w + 2 * p - self.kw, s)
        hout += 1
        wout += 1
        if rem_h or rem_w or hout < 1 or wout < 1:
            raise ValueError(
                f"conv geometry mismatch: input {h}x{w}, kernel {self.kh}x{self.kw}, "
                f"stride {s}, padding {p}"
            )
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        sb, sc, sh, sw = xp.strides
        view = as_strided(
            xp,
            shape=(b, c, self.kh, self.kw, hout, wout),
            strides=(sb, sc, sh, sw, sh * s, sw * s),
        )
        cols = np.ascontiguousarray(view).reshape(b, c * self.kh * self.kw, hout * wout)
        return cols, hout, wout

    def forward(self, x, train=False):
        cols, hout, wout = self._im2col(x)
        w2 = self.weight.reshape(self.out_ch, -1)
        out = np.matmul(w2[None], cols) + self.bias[None, :, None]
        self._cache = (x.shape, cols)
        return out.reshape(x.shape[0], self.out_ch, hout, wout)

    def backward(self, grad_out):
        x_shape, cols = self._cache
        b, c, h, w = x_shape
        p, s = self.padding, self.stride
        _, _, hout, wout = grad_out.shape
        g2 = grad_out.reshape(b, self.out_ch, hout * wout)
        self.grad_bias = grad_out.sum(axis=(0, 2, 3))
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
        self.grad_weight = gw.reshape(self.weight.shape)
        w2 = self.weight.reshape(self.out_ch, -1)
        gcols = np.matmul(w2.T[None], g2).reshape(b, c, self.kh, self.kw, hout, wout)
        gx = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                gx[:, :, i : i + s * hout : s, j : j + s * wout : s] += gcols[:, :, i, j]
        return gx[:, :, p : p + h, p : p + w] if p else gx

    def parameters(self):
        return [("weight", self), ("bias", self)]


class MaxPool2d:
    """Per-window max with floor-mode output size; ties go to the first
    element in the window's row-major scan."""

    def __init__(self, kernel=2, stride=2):
        self.kernel = kernel
        self.stride = stride
        self._cache = None

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        k, s = self.kernel, self.stride
        if h < k or w < k:
            raise ValueError(f"input {h}x{w} smaller than pooling window {k}x{k}")
        hout = (h - k) // s + 1
        wout = (w - k) // s + 1
        sb, sc, sh, sw = x.strides
        view = as_strided(
            x, shape=(b, c, hout, wout, k, k), strides=(sb, sc, sh * s, sw * s, sh, sw)
        )
        windows = np.ascontiguousarray(view).reshape(b, c, hout, wout, k * k)
        self.argmax = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, self.argmax[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, hout, wout)
        return out

    def backward(self, grad_out):
        (b, c, h, w), hout, wout = self._cache
        k, s = self.kernel, self.stride
        rows = self.argmax // k
        cols = self.argmax % k
        oh = np.arange(hout)[None, None, :, None]
        ow = np.arange(wout)[None, None, None, :]
        hpos = oh * s + rows
        wpos = ow * s + cols
        bidx = np.arange(b)[:, None, None, None]
        cidx = np.arange(c)[None, :, None, None]
        flat = ((bidx * c + cidx) * h + hpos) * w + wpos
        gx = np.zeros(b * c * h * w, dtype=grad_out.dtype)
        if s >= k:  # windows disjoint -> indices unique
            gx[flat.ravel()] += grad_out.ravel()
        else:
            np.add.at(gx, flat.ravel(), grad_out.ravel())
        return gx.reshape(b, c, h, w)

    def parameters(self):
        return []


class ReLU:
    def forward(self, x, train=False):
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad_out):
        return grad_out * self.mask

    def parameters(self):
        return []


class Dropout:
    """Inverted dropout: each activation is zeroed with probability p at train
    time and survivors scale by 1/(1-p); eval mode is the identity."""

    def __init__(self, p, rng=None):
        if not 0 <= p < 1:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.mask = None

    def forward(self, x, train=False, mask_override=None):
        if mask_override is not None:
            self.mask = mask_override
        elif train and self.p > 0:
            self.mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype)
        else:
            self.mask = None
            return x
        return x * self.mask / (1.0 - self.p)

    def backward(self, grad_out):
        if self.mask is None:
            return grad_out
        return grad_out * self.mask / (1.0 - self.p)

    def parameters(self):
        return []


class Flatten:
    def forward(self, x, train=False):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self.in_shape)

    def parameters(self):
        return []


class Linear:
    def __init__(self, in_features, out_features, dtype=np.float32, rng=None):
        self.in_features = in_features
        self.out_features = out_features
        bound = np.sqrt(6.0 / in_features)
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = rng.uniform(-bound, bound, size=(out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"linear layer expects [batch, {self.in_features}], got {x.shape}"
            )
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, grad_out):
        self.grad_weight = grad_out.T @ self._x
        self.grad_bias = grad_out.sum(axis=0)
        return grad_out @ self.weight

    def parameters(self):
        return [("weight", self), ("bias", self)]


def softmax_cross_entropy(logits, label):
    """Loss and logit gradient for one sample; grad = softmax - onehot."""
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    shifted = logits - logits.max()
    logsumexp = np.log(np.exp(shifted).sum())
    loss = float(logsumexp - shifted[label])
    grad = np.exp(shifted - logsumexp)
    grad[label] -= 1.0
    return loss, grad


def _batch_softmax_cross_entropy(logits, labels):
    """Mean loss over a batch and the gradient of that mean."""
    z = logits.astype(np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    losses = logsumexp[:, 0] - shifted[np.arange(len(labels)), labels]
    grad = np.exp(shifted - logsumexp)
    grad[np.arange(len(labels)), labels] -= 1.0
    return float(losses.mean()), (grad / len(labels)).astype(logits.dtype)


# -- network assembly --------------------------------------------------------


@dataclass(frozen=True)
class NetworkConfig:
    """Ordered layer specs plus the input geometry and the seed that fixes
    weight init, shuffling, and dropout masks."""

    layers: tuple
    input_shape: tuple
    num_classes: int
    seed: int = 0

    def to_dict(self):
        return {
            "layers": [dict(spec) for spec in self.layers],
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d):
        return NetworkConfig(
            layers=tuple(dict(spec) for spec in d["layers"]),
            input_shape=tuple(d["input_shape"]),
            num_classes=int(d["num_classes"]),
            seed=int(d["seed"]),
        )


def reference_config(input_shape=(1, 300, 300), num_classes=10, seed=0) -> NetworkConfig:
    """The standard classifier for single-channel time-frequency images."""
    c, h, w = input_shape
    rows, cols = h, w
    for _ in range(3):
        rows, cols = rows // 2, cols // 2  # conv is size-preserving; pool floors
    flat = 64 * rows * cols
    layers = (
        {"type": "conv2d", "in_ch": c, "out_ch": 16, "kernel": 3, "stride": 1, "padding": 1},
        {"type": "relu"},
        {"type": "maxpool2d", "kernel": 2, "stride": 2},
        {"type": "conv2d", "in_ch": 16, "out_ch": 32, "kernel": 3, "stride": 1, "padding": 1},
        {"type": "relu"},
        {"type": "maxpool2d", "kernel": 2, "stride": 2},
        {"type": "conv2d", "in_ch": 32, "out_ch": 64, "kernel": 3, "stride": 1, "padding": 1},
        {"type": "relu"},
        {"type": "maxpool2d", "kernel": 2, "stride": 2},
        {"type": "flatten"},
        {"type": "dropout", "p": 0.25},
        {"type": "linear", "in_features": flat, "out_features": 500},
        {"type": "relu"},
        {"type": "dropout", "p": 0.25},
        {"type": "linear", "in_features": 500, "out_features": num_classes},
    )
    return NetworkConfig(layers=layers, input_shape=tuple(input_shape), num_classes=num_classes, seed=seed)


def infer_shapes(config: NetworkConfig):
    """Walk the layer specs, checking that shapes chain from the input to the
    class logits; returns the per-layer output shapes."""
    shape = tuple(config.input_shape)
    shapes = []
    for i, spec in enumerate(config.layers):
        kind = spec["type"]
        if kind == "conv2d":
            c, h, w = shape
            if c != spec["in_ch"]:
                raise ValueError(f"layer {i}: conv expects {spec['in_ch']} channels, got {c}")
            k, s, p = spec["kernel"], spec["stride"], spec["padding"]
            h2, rh = divmod(h + 2 * p - k, s)
            w2, rw = divmod(w + 2 * p - k, s)
            if rh or rw or h2 < 0 or w2 < 0:
                raise ValueError(f"layer {i}: conv geometry mismatch on {shape}")
            shape = (spec["out_ch"], h2 + 1, w2 + 1)
        elif kind == "maxpool2d":
            c, h, w = shape
            k, s = spec["kernel"], spec["stride"]
            if h < k or w < k:
                raise ValueError(f"layer {i}: pool window {k} exceeds input {shape}")
            shape = (c, (h - k) // s + 1, (w - k) // s + 1)
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind == "linear":
            if len(shape) != 1 or shape[0] != spec["in_features"]:
                raise ValueError(
                    f"layer {i}: linear expects width {spec['in_features']}, got {shape}"
                )
            shape = (spec["out_features"],)
        elif kind in ("relu", "dropout"):
            pass
        else:
            raise ValueError(f"layer {i}: unknown layer type {kind!r}")
        shapes.append(shape)
    if shapes[-1] != (config.num_classes,):
        raise ValueError(
            f"final layer produces {shapes[-1]}, expected ({config.num_classes},)"
        )
    return shapes


class Network:
    """Instantiated layers plus the RNG stream that owns dropout masks."""

    def __init__(self, config: NetworkConfig, dtype=np.float32):
        infer_shapes(config)
        self.config = config
        self.dtype = dtype
        self.rng = np.random.default_rng(config.seed)
        self.layers = []
        for spec in config.layers:
            kind = spec["type"]
            if kind == "conv2d":
                self.layers.append(
                    Conv2d(
                        spec["in_ch"], spec["out_ch"], spec["kernel"],
                        spec["stride"], spec["padding"], dtype=dtype, rng=self.rng,
                    )
                )
            elif kind == "maxpool2d":
                self.layers.append(MaxPool2d(spec["kernel"], spec["stride"]))
            elif kind == "relu":
                self.layers.append(ReLU())
            elif kind == "dropout":
                self.layers.append(Dropout(spec["p"], rng=self.rng))
            elif kind == "flatten":
                self.layers.append(Flatten())
            elif kind == "linear":
                self.layers.append(
                    Linear(spec["in_features"], spec["out_features"], dtype=dtype, rng=self.rng)
                )

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != tuple(self.config.input_shape):
            raise ValueError(
                f"input shape {x.shape[1:]} does not match network input "
                f"{tuple(self.config.input_shape)}"
            )
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad_logits):
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def param_arrays(self):
        out = []
        for layer in self.layers:
            for name, owner in layer.parameters():
                out.append((owner, name))
        return out

    def snapshot(self):
        return [getattr(owner, name).copy() for owner, name in self.param_arrays()]

    def load_snapshot(self, arrays):
        params = self.param_arrays()
        if len(arrays) != len(params):
            raise ValueError("snapshot parameter count mismatch")
        for (owner, name), arr in zip(params, arrays):
            if getattr(owner, name).shape != arr.shape:
                raise ValueError("snapshot parameter shape mismatch")
            setattr(owner, name, arr.copy())


def predict(net: Network, image):
    """Eval-mode class index and probability vector for a single image."""
    image = np.asarray(image)
    if image.shape != tuple(net.config.input_shape):
        raise ValueError(
            f"image shape {image.shape} does not match network input "
            f"{tuple(net.config.input_shape)}"
        )
    logits = net.forward(image[None], train=False)[0].astype(np.float64)
    shifted = logits - logits.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    return int(np.argmax(logits)), probs


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    holdout_fraction: float | None = 0.8  # train share of a stratified holdout
    test_folds: tuple | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.holdout_fraction is not None and not 0 < self.holdout_fraction < 1:
            raise ValueError(
                f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}"
            )


def accuracy(net: Network, images, labels, batch_size=32) -> float:
    if len(images) == 0:
        raise ValueError("cannot score an empty evaluation set")
    hits = 0
    for start in range(0, len(images), batch_size):
        logits = net.forward(images[start : start + batch_size], train=False)
        hits += int((logits.argmax(axis=1) == labels[start : start + batch_size]).sum())
    return hits / len(images)


def train(
    config: NetworkConfig,
    train_images,
    train_labels,
    cfg: TrainConfig,
    eval_images=None,
    eval_labels=None,
):
    """Mini-batch SGD with momentum; fully deterministic given the seeds.

    Returns the network restored to its best-eval-accuracy snapshot (ties go
    to the later epoch; the final state when there is no eval set) and the
    per-epoch history of train loss and eval accuracy.
    """
    train_images = np.asarray(train_images, dtype=np.float32)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_images) == 0:
        raise ValueError("training set is empty")
    if len(train_images) != len(train_labels):
        raise ValueError("image/label count mismatch")
    if train_images.shape[1:] != tuple(config.input_shape):
        raise ValueError(
            f"dataset images are {train_images.shape[1:]}, network expects "
            f"{tuple(config.input_shape)}"
        )
    if train_labels.min() < 0 or train_labels.max() >= config.num_classes:
        raise ValueError("labels out of range for the configured class count")

    net = Network(config, dtype=np.float32)
    shuffle_rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(getattr(owner, name)) for owner, name in net.param_arrays()]
    history = []
    best = (None, -1.0)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_images))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            logits = net.forward(train_images[batch], train=True)
            loss, grad = _batch_softmax_cross_entropy(logits, train_labels[batch])
            net.backward(grad)
            losses.append(loss)
            for vel, (owner, name) in zip(velocity, net.param_arrays()):
                grad_arr = getattr(owner, "grad_" + name)
                vel *= cfg.momentum
                vel -= cfg.learning_rate * grad_arr
                setattr(owner, name, getattr(owner, name) + vel)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "eval_accuracy": None}
        if eval_images is not None and len(eval_images):
            row["eval_accuracy"] = accuracy(net, eval_images, eval_labels)
            if row["eval_accuracy"] >= best[1]:
                best = (net.snapshot(), row["eval_accuracy"])
        history.append(row)

    if best[0] is not None:
        net.load_snapshot(best[0])
    return net, history


# -- checkpoint format -------------------------------------------------------


def save_checkpoint(net: Network, class_names=None) -> bytes:
    """Versioned binary: magic, version, JSON header, float32 LE tensors."""
    header = {"network": net.config.to_dict(), "class_names": list(class_names or [])}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(header_bytes)))
    buf.write(header_bytes)
    params = net.param_arrays()
    buf.write(struct.pack("<I", len(params)))
    for owner, name in params:
        arr = np.asarray(getattr(owner, name), dtype="<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def load_checkpoint(blob: bytes):
    """Rebuild a Network from checkpoint bytes; returns (net, class_names)."""
    buf = io.BytesIO(blob)

    def read(n, what):
        data = buf.read(n)
        if len(data) != n:
            raise ValueError(f"truncated checkpoint while reading {what}")
        return data

    if read(4, "magic") != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic bytes)")
    (version,) = struct.unpack("<I", read(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<I", read(4, "header length"))
    header = json.loads(read(hlen, "header"))
    config = NetworkConfig.from_dict(header["network"])
    net = Network(config, dtype=np.float32)
    params = net.param_arrays()
    (count,) = struct.unpack("<I", read(4, "parameter count"))
    if count != len(params):
        raise ValueError(f"checkpoint has {count} tensors, network needs {len(params)}")
    for owner, name in params:
        (ndim,) = struct.unpack("<I", read(4, "tensor rank"))
        shape = struct.unpack(f"<{ndim}I", read(4 * ndim, "tensor shape"))
        expected = getattr(owner, name).shape
        if shape != expected:
            raise ValueError(f"checkpoint tensor shape {shape} does not match {expected}")
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(read(4 * n, "tensor data"), dtype="<f4").reshape(shape)
        setattr(owner, name, arr.astype(np.float32))
    if buf.read(1):
        raise ValueError("trailing bytes after checkpoint payload")
    return net, list(header.get("class_names", []))
