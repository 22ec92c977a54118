"""Minimal tensor autograd engine and the 28x28 victim CNN.

Implements just enough reverse-mode differentiation over numpy arrays to
train and evaluate the small convolutional classifier used throughout the
lab (conv 5x5 -> pool -> conv 5x5 -> pool -> fc 512 -> fc 10), to run
finite-difference gradient checks, and to optimize input-space variables
for trigger reverse-engineering.

Everything is CPU numpy and fully deterministic given a seed. Training
defaults to float32; gradient checking switches to float64.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "relu",
    "sigmoid",
    "conv2d",
    "maxpool2",
    "linear",
    "softmax_cross_entropy",
    "softmax_np",
    "CnnModel",
    "TrainConfig",
    "EpochStats",
    "DivergedError",
    "CheckpointError",
    "SGD",
    "Adam",
    "train",
    "evaluate",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A numpy array plus an optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    # -- elementwise arithmetic (supports numpy broadcasting) --

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-_as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return _as_tensor(other, self.dtype) + (-self)

    def sum(self):
        out = _make(np.asarray(self.data.sum()), (self,))
        if out._parents:
            def backward(g):
                self._accumulate(np.broadcast_to(g, self.data.shape).astype(self.dtype))
            out._backward = backward
        return out

    def reshape(self, *shape):
        out = _make(self.data.reshape(*shape), (self,))
        if out._parents:
            def backward(g):
                self._accumulate(g.reshape(self.data.shape))
            out._backward = backward
        return out


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def relu(x):
    out = _make(np.maximum(x.data, 0), (x,))
    if out._parents:
        mask = x.data > 0
        def backward(g):
            x._accumulate(g * mask)
        out._backward = backward
    return out


def sigmoid(x):
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = _make(s, (x,))
    if out._parents:
        def backward(g):
            x._accumulate(g * s * (1.0 - s))
        out._backward = backward
    return out


def _im2col(x, kh, kw, pad):
    # (N, C, H, W) -> (N, H*W, C*kh*kw), stride 1, zero padding
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, h * w, c * kh * kw)


def _col2im(dcols, x_shape, kh, kw, pad):
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d = dcols.reshape(n, h, w, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + h, j:j + w] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, pad:pad + h, pad:pad + w]


def conv2d(x, w, b, pad):
    """Stride-1 'same' convolution; w is (F, C, kh, kw), b is (F,)."""
    n, c, h, width = x.data.shape
    f, wc, kh, kw = w.data.shape
    if wc != c:
        raise ValueError(f"conv2d: input has {c} channels, filters expect {wc}")
    cols = _im2col(x.data, kh, kw, pad)                    # (N, H*W, C*kh*kw)
    wmat = w.data.reshape(f, -1)                           # (F, C*kh*kw)
    out_data = cols @ wmat.T + b.data                      # (N, H*W, F)
    out_data = out_data.transpose(0, 2, 1).reshape(n, f, h, width)
    out = _make(out_data, (x, w, b))
    if out._parents:
        def backward(g):
            gmat = g.reshape(n, f, h * width).transpose(0, 2, 1)   # (N, H*W, F)
            if x.requires_grad:
                dcols = gmat @ wmat
                x._accumulate(_col2im(dcols, x.data.shape, kh, kw, pad))
            if w.requires_grad:
                dw = np.tensordot(gmat, cols, axes=([0, 1], [0, 1]))
                w._accumulate(dw.reshape(w.data.shape))
            if b.requires_grad:
                b._accumulate(gmat.sum(axis=(0, 1)))
        out._backward = backward
    return out


def _pool_argmax(data):
    # which element of each 2x2 window wins, in row-major window order
    n, c, h, w = data.shape
    win = data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, h // 2, w // 2, 4).argmax(axis=-1)


def maxpool2(x):
    """2x2 stride-2 max pool; ties go to the first element in row-major window order."""
    n, c, h, w = x.data.shape
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    out = _make(out_data, (x,))
    if out._parents:
        def backward(g):
            dflat = np.zeros_like(flat)
            np.put_along_axis(dflat, idx[..., None], g[..., None], axis=-1)
            dx = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            x._accumulate(dx.reshape(n, c, h, w))
        out._backward = backward
    return out


def linear(x, w, b):
    """Affine map; x is (N, D), w is (M, D), b is (M,)."""
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(f"linear: input width {x.data.shape[1]} != weight width {w.data.shape[1]}")
    out = _make(x.data @ w.data.T + b.data, (x, w, b))
    if out._parents:
        def backward(g):
            if x.requires_grad:
                x._accumulate(g @ w.data)
            if w.requires_grad:
                w._accumulate(g.T @ x.data)
            if b.requires_grad:
                b._accumulate(g.sum(axis=0))
        out._backward = backward
    return out


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels."""
    z = logits.data
    n = z.shape[0]
    m = z.max(axis=1, keepdims=True)
    exps = np.exp(z - m)
    sums = exps.sum(axis=1, keepdims=True)
    logp = (z - m) - np.log(sums)
    loss = -logp[np.arange(n), labels].mean()
    out = _make(np.asarray(loss, dtype=z.dtype), (logits,))
    if out._parents:
        probs = exps / sums
        def backward(g):
            d = probs.copy()
            d[np.arange(n), labels] -= 1.0
            logits._accumulate(g * d / n)
        out._backward = backward
    return out


def softmax_np(logits):
    """Plain-numpy softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# The victim CNN
# ---------------------------------------------------------------------------

LAYER_SHAPES = {
    "conv1_w": (16, 1, 5, 5),
    "conv1_b": (16,),
    "conv2_w": (32, 16, 5, 5),
    "conv2_b": (32,),
    "fc1_w": (512, 1568),
    "fc1_b": (512,),
    "fc2_w": (10, 512),
    "fc2_b": (10,),
}

NUM_CLASSES = 10
INPUT_SHAPE = (1, 28, 28)


class CnnModel:
    """conv(16,5x5,pad2) -> pool -> conv(32,5x5,pad2) -> pool -> fc512 -> fc10.

    After every forward pass ``last_penultimate`` holds the post-ReLU
    activations of the 512-wide hidden layer for the most recent batch.
    """

    PARAM_NAMES = tuple(LAYER_SHAPES)

    def __init__(self, params):
        for name in self.PARAM_NAMES:
            t = params[name]
            if t.data.shape != LAYER_SHAPES[name]:
                raise ValueError(
                    f"{name}: expected shape {LAYER_SHAPES[name]}, got {t.data.shape}")
            setattr(self, name, t)
        self.last_penultimate = None

    @classmethod
    def init(cls, seed, dtype=np.float32):
        """Deterministic uniform init in +-sqrt(6 / (fan_in + fan_out)); zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in LAYER_SHAPES.items():
            if name.endswith("_b"):
                params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
                continue
            if len(shape) == 4:
                fan_in = shape[1] * shape[2] * shape[3]
                fan_out = shape[0] * shape[2] * shape[3]
            else:
                fan_in, fan_out = shape[1], shape[0]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=shape)
            params[name] = Tensor(w.astype(dtype), requires_grad=True)
        return cls(params)

    def parameters(self):
        return [getattr(self, name) for name in self.PARAM_NAMES]

    def named_parameters(self):
        return [(name, getattr(self, name)) for name in self.PARAM_NAMES]

    @property
    def dtype(self):
        return self.conv1_w.data.dtype

    def astype(self, dtype):
        params = {name: Tensor(getattr(self, name).data.astype(dtype), requires_grad=True)
                  for name in self.PARAM_NAMES}
        return CnnModel(params)

    def copy(self):
        params = {name: Tensor(getattr(self, name).data.copy(), requires_grad=True)
                  for name in self.PARAM_NAMES}
        return CnnModel(params)

    def forward(self, x, capture_patterns=False):
        """Logits for a batch; x is a Tensor of shape (N, 1, 28, 28) in [0, 1].

        With capture_patterns set, ``last_patterns`` records the ReLU masks
        and pool argmax choices of this pass (used by the gradient check to
        detect kink crossings).
        """
        if x.data.ndim != 4 or x.data.shape[1:] != INPUT_SHAPE:
            raise ValueError(
                f"conv1: expected input (N, 1, 28, 28), got {tuple(x.data.shape)}")
        patterns = [] if capture_patterns else None
        h = relu(conv2d(x, self.conv1_w, self.conv1_b, pad=2))
        if capture_patterns:
            patterns.append(h.data > 0)
            patterns.append(_pool_argmax(h.data))
        h = maxpool2(h)
        h = relu(conv2d(h, self.conv2_w, self.conv2_b, pad=2))
        if capture_patterns:
            patterns.append(h.data > 0)
            patterns.append(_pool_argmax(h.data))
        h = maxpool2(h)
        h = h.reshape(h.data.shape[0], 1568)
        h = relu(linear(h, self.fc1_w, self.fc1_b))
        if capture_patterns:
            patterns.append(h.data > 0)
        self.last_penultimate = h.data
        self.last_patterns = patterns
        logits = linear(h, self.fc2_w, self.fc2_b)
        if not np.isfinite(logits.data).all():
            raise FloatingPointError("forward produced non-finite logits")
        return logits

    def logits_np(self, images, batch_size=512):
        """Inference-only logits for (N, 1, 28, 28) float images."""
        outs = []
        with no_grad():
            for i in range(0, images.shape[0], batch_size):
                x = Tensor(images[i:i + batch_size].astype(self.dtype))
                outs.append(self.forward(x).data)
        return np.concatenate(outs, axis=0)

    def penultimate_np(self, images, batch_size=512):
        """Post-ReLU hidden activations (N, 512) for (N, 1, 28, 28) images."""
        outs = []
        with no_grad():
            for i in range(0, images.shape[0], batch_size):
                self.forward(Tensor(images[i:i + batch_size].astype(self.dtype)))
                outs.append(self.last_penultimate)
        return np.concatenate(outs, axis=0)

    def predict(self, images, batch_size=512):
        """Argmax class labels; ties resolve to the lowest class index."""
        return self.logits_np(images, batch_size).argmax(axis=1)


# ---------------------------------------------------------------------------
# Optimizers and training
# ---------------------------------------------------------------------------


class SGD:
    def __init__(self, params, lr, momentum=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class Adam:
    def __init__(self, params, lr=0.1, betas=(0.5, 0.9), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self):
        self._t += 1
        b1, b2 = self.betas
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            mhat = m / (1 - b1 ** self._t)
            vhat = v / (1 - b2 ** self._t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


@dataclass
class TrainConfig:
    epochs: int = 2
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class EpochStats:
    loss: float
    accuracy: float


class DivergedError(RuntimeError):
    """Training hit a non-finite loss; carries the offending epoch index."""

    def __init__(self, epoch):
        super().__init__(f"diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


def _to_nchw(images, dtype):
    # datasets store (N, H, W, C); the net wants (N, C, H, W)
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=dtype)


def train(model, dataset, cfg, on_epoch=None):
    """SGD-with-momentum training on softmax cross-entropy.

    Returns (model, history) where history is a list of per-epoch
    EpochStats(mean loss, training accuracy). ``on_epoch(epoch, model, stats)``
    runs after each epoch, for callers tracking extra trajectories.
    """
    if len(dataset.labels) == 0:
        raise ValueError("train: dataset is empty")
    if dataset.labels.min() < 0 or dataset.labels.max() >= NUM_CLASSES:
        raise ValueError("train: labels must lie in [0, 10)")
    images = _to_nchw(dataset.images, model.dtype)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    n = images.shape[0]
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = Tensor(images[idx])
            y = labels[idx]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    logits = model.forward(x)
                    loss = softmax_cross_entropy(logits, y)
            except FloatingPointError:
                raise DivergedError(epoch) from None
            if not np.isfinite(loss.data):
                raise DivergedError(epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * len(idx)
            total_correct += int((logits.data.argmax(axis=1) == y).sum())
        for p in model.parameters():
            if not np.isfinite(p.data).all():
                raise DivergedError(epoch)
        stats = EpochStats(loss=total_loss / n, accuracy=total_correct / n)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(epoch, model, stats)
    return model, history


def evaluate(model, dataset):
    """Fraction of argmax-correct predictions on a labeled dataset."""
    if len(dataset.labels) == 0:
        raise ValueError("evaluate: dataset is empty")
    preds = model.predict(_to_nchw(dataset.images, model.dtype))
    return float((preds == np.asarray(dataset.labels)).mean())


def mean_loss(model, dataset, batch_size=512):
    """Mean softmax cross-entropy over a labeled dataset (no gradients)."""
    images = _to_nchw(dataset.images, model.dtype)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    total = 0.0
    with no_grad():
        for i in range(0, len(labels), batch_size):
            logits = model.forward(Tensor(images[i:i + batch_size]))
            loss = softmax_cross_entropy(logits, labels[i:i + batch_size])
            total += float(loss.data) * len(labels[i:i + batch_size])
    return total / len(labels)


def grad_check(model, sample, epsilon=1e-4, n_per_layer=15, min_total=100, seed=0):
    """Max relative error between analytic and central finite-difference gradients.

    Runs in float64 regardless of the model dtype, on up to n_per_layer
    randomly chosen parameters from every layer, at least min_total overall.

    Central differences are only meaningful where the loss is smooth, so a
    parameter whose +-epsilon band straddles a ReLU or pool-argmax kink is
    discarded and redrawn. Kinks are detected exactly by comparing the
    activation patterns (ReLU masks, pool winners) of the two perturbed
    passes; a wrong analytic gradient cannot hide behind this filter because
    it never changes what the two numeric passes see.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    image, label = sample
    m64 = model.astype(np.float64)
    x = _to_nchw(image[None], np.float64)
    y = np.asarray([label], dtype=np.int64)

    def loss_and_pattern():
        with no_grad():
            logits = m64.forward(Tensor(x), capture_patterns=True)
            return (float(softmax_cross_entropy(logits, y).data),
                    m64.last_patterns)

    loss = softmax_cross_entropy(m64.forward(Tensor(x)), y)
    loss.backward()
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    total = 0
    for name, p in m64.named_parameters():
        flat_grad = p.grad.reshape(-1)
        flat_data = p.data.reshape(-1)
        wanted = min(n_per_layer, flat_data.size)
        candidates = rng.permutation(flat_data.size)
        checked = 0
        for i in candidates:
            if checked >= wanted:
                break
            orig = flat_data[i]
            flat_data[i] = orig + epsilon
            up, up_pattern = loss_and_pattern()
            flat_data[i] = orig - epsilon
            down, down_pattern = loss_and_pattern()
            flat_data[i] = orig
            if any(not np.array_equal(a, b)
                   for a, b in zip(up_pattern, down_pattern)):
                continue  # kink inside the difference band
            numeric = (up - down) / (2 * epsilon)
            analytic = flat_grad[i]
            # floor the denominator at the finite-difference noise level
            max_rel = max(max_rel,
                          abs(analytic - numeric)
                          / max(abs(analytic), abs(numeric), 1e-7))
            checked += 1
        if checked == 0:
            raise RuntimeError(
                f"{name}: no parameter admits a smooth finite-difference estimate")
        total += checked
    if total < min_total:
        raise RuntimeError(
            f"only {total} parameters admit a smooth finite-difference estimate, "
            f"need {min_total}")
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TITIM-CKPT"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model, path):
    """Versioned binary checkpoint; round-trips bit-exactly."""
    itemsize = model.dtype.itemsize
    if itemsize not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported dtype {model.dtype}")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IB", CHECKPOINT_VERSION, itemsize))
        f.write(struct.pack("<I", len(model.PARAM_NAMES)))
        for name, p in model.named_parameters():
            encoded = name.encode("ascii")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype=_DTYPE_CODES[itemsize]).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}: not a model checkpoint")
        version, itemsize = struct.unpack("<IB", f.read(5))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version}, this build supports "
                f"version {CHECKPOINT_VERSION}")
        if itemsize not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported float width {itemsize}")
        dtype = _DTYPE_CODES[itemsize]
        (count,) = struct.unpack("<I", f.read(4))
        params = {}
        for _ in range(count):
            (namelen,) = struct.unpack("<H", f.read(2))
            name = f.read(namelen).decode("ascii")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            if name not in LAYER_SHAPES:
                raise CheckpointError(f"unknown layer {name!r} in checkpoint")
            if shape != LAYER_SHAPES[name]:
                raise CheckpointError(
                    f"{name}: checkpoint shape {shape} != expected {LAYER_SHAPES[name]}")
            nbytes = int(np.prod(shape)) * itemsize
            raw = f.read(nbytes)
            if len(raw) != nbytes:
                raise CheckpointError(f"{name}: truncated payload")
            arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
            params[name] = Tensor(arr, requires_grad=True)
        if set(params) != set(LAYER_SHAPES):
            raise CheckpointError("checkpoint is missing layers")
    return CnnModel(params)
