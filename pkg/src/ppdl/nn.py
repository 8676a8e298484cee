"""Small convolutional classifier written directly in numpy (float64, NCHW).

Layers are plain objects with ``forward``/``backward``; parameterised
layers expose ``params`` and, after a backward pass, ``grads`` in the same
order.  Softmax is the terminal layer and its backward pass is folded into
the cross-entropy gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDivergence, ShapeError, WeightsFormatError

WEIGHTS_MAGIC = b"PPDLNET\x00"
WEIGHTS_VERSION = 1


class Conv2D:
    """3x3 (by default) convolution, stride 1, zero padding that keeps H and W."""

    tag = 1

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.params = [np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64)]
        f, c, kh, kw = self.params[0].shape
        if kh != kw or kh % 2 == 0:
            raise ShapeError("conv kernels must be square with odd size")
        if self.params[1].shape != (f,):
            raise ShapeError("conv bias must have one entry per filter")
        self.grads = [np.zeros_like(p) for p in self.params]

    def out_shape(self, shape):
        f, c, _, _ = self.params[0].shape
        if shape[0] != c:
            raise ShapeError(f"conv expects {c} input channels, got {shape[0]}")
        return (f,) + tuple(shape[1:])

    def forward(self, x):
        w, b = self.params
        f, c, k, _ = w.shape
        p = k // 2
        n, _, h, wd = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        # (n, c, h, w, k, k) -> (n*h*w, c*k*k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
        self._cache = (x.shape, cols)
        out = cols @ w.reshape(f, -1).T + b
        return out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)

    def backward(self, dout):
        w, _ = self.params
        f, c, k, _ = w.shape
        p = k // 2
        (n, _, h, wd), cols = self._cache
        dmat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
        self.grads[0] = (dmat.T @ cols).reshape(w.shape)
        self.grads[1] = dmat.sum(axis=0)
        dcols = (dmat @ w.reshape(f, -1)).reshape(n, h, wd, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + wd]


class Dense:
    tag = 2

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.params = [np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64)]
        if self.params[0].ndim != 2 or self.params[1].shape != (self.params[0].shape[1],):
            raise ShapeError("dense layer needs a (in, out) weight and (out,) bias")
        self.grads = [np.zeros_like(p) for p in self.params]

    def out_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.params[0].shape[0]:
            raise ShapeError(f"dense expects ({self.params[0].shape[0]},), got {shape}")
        return (self.params[0].shape[1],)

    def forward(self, x):
        self._x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, dout):
        self.grads[0] = self._x.T @ dout
        self.grads[1] = dout.sum(axis=0)
        return dout @ self.params[0].T


class ReLU:
    tag = 3
    params: list = []

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class MaxPool2x2:
    tag = 4
    params: list = []

    def out_shape(self, shape):
        c, h, w = shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        n, c, h, w = x.shape
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
        # the first maximum of each window receives the gradient
        idx = blocks.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (n, c, h, w), idx = self._cache
        dblocks = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
        dblocks = dblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dblocks.reshape(n, c, h, w)


class Flatten:
    tag = 5
    params: list = []

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Softmax:
    tag = 6
    params: list = []

    def out_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError("softmax expects flat input")
        return shape

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


_LAYER_TYPES = {cls.tag: cls for cls in (Conv2D, Dense, ReLU, MaxPool2x2, Flatten, Softmax)}


class Network:
    """Layer stack validated against ``input_shape`` (channels, height, width)."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeError("network must end with a softmax layer")
        if any(isinstance(l, Softmax) for l in self.layers[:-1]):
            raise ShapeError("softmax may only appear as the last layer")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.num_classes = shape[0]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers if layer.params for g in layer.grads]

    def get_weights(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_weights(self, weights) -> None:
        for p, w in zip(self.params, weights, strict=True):
            if p.shape != w.shape:
                raise ShapeError("weight snapshot does not match network")
            p[...] = w

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected input (N, {self.input_shape}), got {x.shape}")
        return x

    def logits(self, x):
        x = self._check_input(x)
        for layer in self.layers[:-1]:
            x = layer.forward(x)
        return x

    def forward(self, x, batch_size: int = 256):
        """Class probabilities, one row per input."""
        x = self._check_input(x)
        soft = self.layers[-1]
        return np.concatenate(
            [soft.forward(self.logits(x[i : i + batch_size])) for i in range(0, len(x), batch_size)]
        ) if len(x) else np.zeros((0, self.num_classes))

    def loss_and_grads(self, x, labels):
        """Mean cross-entropy; leaves analytic gradients in each layer's ``grads``."""
        labels = np.asarray(labels)
        z = self.logits(x)
        if labels.shape != (len(z),) or labels.min() < 0 or labels.max() >= self.num_classes:
            raise ShapeError("labels must be class indices, one per input")
        zs = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(zs).sum(axis=1))
        rows = np.arange(len(z))
        loss = float(np.mean(logsum - zs[rows, labels]))
        d = np.exp(zs - logsum[:, None])
        d[rows, labels] -= 1.0
        d /= len(z)
        for layer in reversed(self.layers[:-1]):
            d = layer.backward(d)
        return loss


def build_default_net(input_size: int = 64, channels: int = 1, num_classes: int = 4, seed: int = 0) -> Network:
    """conv3x3x8, relu, pool, conv3x3x16, relu, pool, flatten, dense64, relu, dense, softmax.

    Weights are He-normal, biases zero.
    """
    if input_size < 4 or input_size % 4:
        raise ShapeError("input_size must be a positive multiple of 4")
    rng = np.random.Generator(np.random.PCG64(seed))

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    flat = 16 * (input_size // 4) ** 2
    layers = [
        Conv2D(he((8, channels, 3, 3), channels * 9), np.zeros(8)),
        ReLU(),
        MaxPool2x2(),
        Conv2D(he((16, 8, 3, 3), 8 * 9), np.zeros(16)),
        ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(he((flat, 64), flat), np.zeros(64)),
        ReLU(),
        Dense(he((64, num_classes), 64), np.zeros(num_classes)),
        Softmax(),
    ]
    return Network(layers, (channels, input_size, input_size))


# -- optimisation ------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    input_size: int = 64
    channels: int = 1
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Optimizer:
    def __init__(self, config: TrainConfig):
        self.config = config
        self.t = 0
        self.state: list | None = None

    def step(self, params, grads) -> None:
        cfg = self.config
        lr = cfg.learning_rate
        if self.state is None:
            self.state = [(np.zeros_like(p), np.zeros_like(p)) for p in params]
        self.t += 1
        for p, g, (m, v) in zip(params, grads, self.state):
            if cfg.optimizer == "sgd":
                p -= lr * g
            elif cfg.optimizer == "sgd_momentum":
                m *= cfg.momentum
                m -= lr * g
                p += m
            else:
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                mhat = m / (1 - cfg.beta1**self.t)
                vhat = v / (1 - cfg.beta2**self.t)
                p -= lr * mhat / (np.sqrt(vhat) + cfg.eps)


def train_step(net: Network, x, labels, optimizer: Optimizer) -> float:
    """One optimizer update on a batch; updates ``net`` in place, returns the loss."""
    loss = net.loss_and_grads(x, labels)
    grads = net.grads
    if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
        raise NumericalDivergence(f"non-finite loss or gradient (loss={loss})")
    optimizer.step(net.params, grads)
    return loss


def predict(net: Network, x) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels (ties go to the lowest index) and the probability matrix."""
    probs = net.forward(x)
    return probs.argmax(axis=1), probs


def accuracy(net: Network, x, labels) -> float:
    pred, _ = predict(net, x)
    return float(np.mean(pred == np.asarray(labels))) if len(pred) else float("nan")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    best_weights: list[np.ndarray] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "format": "ppdl-train-report",
            "version": 1,
            "best_epoch": self.best_epoch,
            "epochs": [
                {
                    "epoch": i + 1,
                    "train_loss": self.train_loss[i],
                    "train_accuracy": self.train_accuracy[i],
                    "val_accuracy": self.val_accuracy[i],
                    "steps": self.steps[i],
                }
                for i in range(len(self.train_loss))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        rows = d["epochs"]
        return cls(
            [r["train_loss"] for r in rows],
            [r["train_accuracy"] for r in rows],
            [r["val_accuracy"] for r in rows],
            [r["steps"] for r in rows],
            d["best_epoch"],
        )


def fit(net: Network, x_train, y_train, x_val, y_val, config: TrainConfig, log=None) -> TrainReport:
    """Minibatch training; keeps and finally restores the best-validation weights."""
    from .rng import SplitMix64

    y_train = np.asarray(y_train)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = SplitMix64(config.seed)
    opt = Optimizer(config)
    report = TrainReport()
    order = list(range(len(x_train)))
    best = -1.0
    for epoch in range(config.epochs):
        if config.shuffle_each_epoch:
            rng.shuffle(order)
        idx = np.asarray(order)
        losses, correct, steps = [], 0, 0
        for s in range(0, len(idx), config.batch_size):
            b = idx[s : s + config.batch_size]
            losses.append(train_step(net, x_train[b], y_train[b], opt) * len(b))
            steps += 1
        train_acc = accuracy(net, x_train, y_train)
        val_acc = accuracy(net, x_val, y_val)
        report.train_loss.append(float(np.sum(losses) / len(idx)))
        report.train_accuracy.append(train_acc)
        report.val_accuracy.append(val_acc)
        report.steps.append(steps)
        if val_acc > best:
            best = val_acc
            report.best_epoch = epoch + 1
            report.best_weights = net.get_weights()
        if log is not None:
            log(
                f"epoch {epoch + 1}/{config.epochs} loss={report.train_loss[-1]:.4f} "
                f"train_acc={train_acc:.4f} val_acc={val_acc:.4f}"
            )
    net.set_weights(report.best_weights)
    return report


# -- weights file ------------------------------------------------------------
#
# magic "PPDLNET\0", u32 version, u32 layer count, u32 x3 input shape (C, H, W);
# then per layer: u8 type tag, u8 array count, and for each array
# u8 ndim, u32 x ndim dims, float64 values; all little-endian.


def serialize_weights(net: Network) -> bytes:
    out = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(net.layers))]
    out.append(struct.pack("<3I", *net.input_shape))
    for layer in net.layers:
        out.append(struct.pack("<BB", layer.tag, len(layer.params)))
        for p in layer.params:
            out.append(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
            out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


def deserialize_weights(data: bytes) -> Network:
    try:
        if data[:8] != WEIGHTS_MAGIC:
            raise WeightsFormatError("bad magic")
        version, count = struct.unpack_from("<II", data, 8)
        if version != WEIGHTS_VERSION:
            raise WeightsFormatError(f"unsupported weights version {version}")
        input_shape = struct.unpack_from("<3I", data, 16)
        pos = 28
        layers = []
        for _ in range(count):
            tag, narr = struct.unpack_from("<BB", data, pos)
            pos += 2
            arrays = []
            for _ in range(narr):
                (ndim,) = struct.unpack_from("<B", data, pos)
                shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
                pos += 1 + 4 * ndim
                size = int(np.prod(shape)) * 8
                if pos + size > len(data):
                    raise WeightsFormatError("truncated weights file")
                arrays.append(np.frombuffer(data, "<f8", int(np.prod(shape)), pos).reshape(shape).astype(np.float64))
                pos += size
            cls = _LAYER_TYPES.get(tag)
            if cls is None:
                raise WeightsFormatError(f"unknown layer tag {tag}")
            layers.append(cls(*arrays))
        if pos != len(data):
            raise WeightsFormatError("trailing bytes after last layer")
        return Network(layers, input_shape)
    except (struct.error, TypeError, ShapeError) as e:
        raise WeightsFormatError(f"malformed weights file ({e})") from e
