"""Reverse-mode automatic differentiation over dense float64 tensors.

Deliberately small: 2-D matmul, elementwise arithmetic, four activations,
valid convolution, max pooling, and a stabilized cross-entropy. Storage is
row-major float64 throughout; broadcasting is limited to the bias-add case
(matrix + row vector). Each operation records a backward closure on its
output; ``Tensor.backward()`` walks the graph once in reverse topological
order and rejects a second walk without a fresh forward pass.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionError, GraphStateError

ACTIVATIONS = ("tanh", "sigmoid", "relu", "linear")


class Tensor:
    """A dense float64 array with an optional gradient and graph linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn",
                 "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._backward_done = False

    # -- shape helpers -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other, like=self))

    def __sub__(self, other):
        return sub(self, _lift(other, like=self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- gradient machinery ---------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        Must be called on a scalar (size-1) tensor. A second call on the same
        output without rebuilding the graph raises ``GraphStateError``.
        """
        if self.size != 1:
            raise DimensionError(
                f"backward requires a scalar output, got shape {self.shape}")
        if self._backward_done:
            raise GraphStateError(
                "backward already ran on this graph; run a new forward pass")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
        self._backward_done = True


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full_like(like.data, float(value)))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts matrix + row-vector for the bias case."""
    bias_case = a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]
    if not bias_case and a.shape != b.shape:
        raise DimensionError(f"add shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if bias_case else g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul takes 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose takes a 2-D tensor, got {a.shape}")

    def backward(g):
        _accumulate(a, np.ascontiguousarray(g.T))

    return _make(np.ascontiguousarray(a.data.T), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def tsum(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    return _make(np.asarray(a.data.sum()), (a,), backward)


def tmean(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.full_like(a.data, float(g) / a.size))

    return _make(np.asarray(a.data.mean()), (a,), backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), backward)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0))

    return _make(y, (a,), backward)


def activation(a: Tensor, kind: str) -> Tensor:
    """Apply one of tanh / sigmoid / relu / linear elementwise."""
    if kind == "tanh":
        return tanh(a)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "relu":
        return relu(a)
    if kind == "linear":
        return _make(a.data.copy(), (a,), lambda g: _accumulate(a, g))
    from .errors import ConfigurationError
    raise ConfigurationError(
        f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# convolution and pooling
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Valid (un-padded) 2-D convolution.

    ``x`` is (c_in, h, w) for one sample or (b, c_in, h, w) for a batch;
    ``kernels`` is (c_out, c_in, kh, kw).
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    kd = kernels.data
    if xd.ndim != 4 or kd.ndim != 4:
        raise DimensionError(
            f"conv2d expects (b,c,h,w) input and (o,c,kh,kw) kernels, "
            f"got {x.shape} and {kernels.shape}")
    b, c_in, h, w = xd.shape
    c_out, kc, kh, kw = kd.shape
    if kc != c_in:
        raise DimensionError(
            f"kernel channels {kc} do not match input channels {c_in}")
    if kh > h or kw > w:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than input {h}x{w}")
    if stride < 1:
        raise DimensionError(f"stride must be positive, got {stride}")
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1

    out = np.zeros((b, c_out, ho, wo))
    for di in range(kh):
        for dj in range(kw):
            patch = xd[:, :, di:di + (ho - 1) * stride + 1:stride,
                       dj:dj + (wo - 1) * stride + 1:stride]
            out += np.einsum("bcij,oc->boij", patch, kd[:, :, di, dj])

    def backward(g):
        gq = g[None] if single else g
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for di in range(kh):
                for dj in range(kw):
                    gx[:, :, di:di + (ho - 1) * stride + 1:stride,
                       dj:dj + (wo - 1) * stride + 1:stride] += np.einsum(
                           "boij,oc->bcij", gq, kd[:, :, di, dj])
            _accumulate(x, gx[0] if single else gx)
        if kernels.requires_grad:
            gk = np.zeros_like(kd)
            for di in range(kh):
                for dj in range(kw):
                    patch = xd[:, :, di:di + (ho - 1) * stride + 1:stride,
                               dj:dj + (wo - 1) * stride + 1:stride]
                    gk[:, :, di, dj] = np.einsum("boij,bcij->oc", gq, patch)
            _accumulate(kernels, gk)

    return _make(out[0] if single else out, (x, kernels), backward)


def maxpool2d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping max pooling; gradient routes to the first max per window."""
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise DimensionError(f"maxpool2d expects (b,c,h,w), got {x.shape}")
    b, c, h, w = xd.shape
    if h % window or w % window:
        raise DimensionError(
            f"extents {h}x{w} not divisible by window {window}")
    ho, wo = h // window, w // window
    # flatten each window row-major so argmax gives the first-index tie-break
    tiles = xd.reshape(b, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5)
    tiles = tiles.reshape(b, c, ho, wo, window * window)
    arg = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gq = g[None] if single else g
        gt = np.zeros_like(tiles)
        np.put_along_axis(gt, arg[..., None], gq[..., None], axis=-1)
        gx = gt.reshape(b, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
        gx = gx.reshape(b, c, h, w)
        _accumulate(x, gx[0] if single else gx)

    return _make(out[0] if single else out, (x,), backward)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array (not part of the graph)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over the batch, max-stabilized."""
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (batch, classes), got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionError(
            f"labels shape {labels.shape} does not match batch {b}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise DataError(f"labels must lie in [0, {c}), got range "
                        f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(b), labels]
    loss = np.asarray((lse - picked).mean())

    def backward(g):
        p = softmax(logits.data)
        p[np.arange(b), labels] -= 1.0
        _accumulate(logits, float(g) * p / b)

    return _make(loss, (logits,), backward)
