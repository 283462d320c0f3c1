"""Dense-tensor reverse-mode automatic differentiation on numpy buffers.

Every op records its inputs and a backward closure on the implicit graph;
``backward`` replays the closures in exact reverse execution order (monotone
creation sequence numbers), visiting each node once.  Gradients accumulate
into leaf tensors across calls; intermediate grads are reset per call.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Optional, Sequence

import numpy as np
import scipy.special

from .errors import ShapeError

DEFAULT_DTYPE = np.float32

# Finite-value assertion after every op.  Cheap at desk scale; flip off for
# long synthetic runs if profiling demands it.
_check_finite = True
_seq_counter = 0

# graph recording is toggled per thread so fold-parallel training and
# evaluation cannot disturb each other
_grad_state = threading.local()


def _grads_on() -> bool:
    return getattr(_grad_state, "enabled", True)


def set_finite_checks(enabled: bool) -> None:
    global _check_finite
    _check_finite = enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (eval-mode forwards)."""
    prev = _grads_on()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator; extra ids split independent streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


class Tensor:
    """N-dimensional array node of the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward = None
        self._seq = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __neg__(self):
        return mul(self, _wrap(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Create a graph node; skips recording when grads are off or unneeded."""
    global _seq_counter
    if _check_finite and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    requires = _grads_on() and any(p.requires_grad for p in parents)
    out.requires_grad = requires
    if requires:
        _seq_counter += 1
        out._seq = _seq_counter
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._seq = 0
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach ``grad.shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    # grads are never mutated in place, so sharing buffers here is safe
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Populate dLoss/dLeaf for every requires_grad leaf reachable from loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    # collect reachable recorded nodes
    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._seq and t._seq not in nodes:
            nodes[t._seq] = t
            stack.extend(p for p in t._parents if p._seq and p._seq not in nodes)
    # fresh pass: interior grads reset so repeated backward() calls only
    # accumulate into leaves
    for t in nodes.values():
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for seq in sorted(nodes, reverse=True):
        t = nodes[seq]
        if t.grad is not None and t._backward is not None:
            t._backward(t.grad)


# ---------------------------------------------------------------------------
# elementwise ops

def add(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _node(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _node(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
    return _node(a.data * b.data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return _node(a.data / b.data, (a, b), back)


def pow_(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent

    def back(g):
        _accum(a, g * exponent * a.data ** (exponent - 1.0))
    return _node(data, (a,), back)


def sqrt(a: Tensor) -> Tensor:
    return pow_(a, 0.5)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def back(g):
        _accum(a, g * data)
    return _node(data, (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, g / a.data)
    return _node(np.log(a.data), (a,), back)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def back(g):
        _accum(a, g * (a.data > 0))
    return _node(data, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    data = scipy.special.expit(a.data)

    def back(g):
        _accum(a, g * data * (1.0 - data))
    return _node(data, (a,), back)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def back(g):
        _accum(a, g * (1.0 - data * data))
    return _node(data, (a,), back)


# ---------------------------------------------------------------------------
# reductions / shape ops

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))
    return _node(data, (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape) / count)
    return _node(data, (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    def back(g):
        _accum(a, g.reshape(a.shape))
    return _node(a.data.reshape(shape), (a,), back)


def transpose(a: Tensor, axes=None) -> Tensor:
    axes_ = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = np.argsort(axes_)

    def back(g):
        _accum(a, g.transpose(inverse))
    return _node(a.data.transpose(axes_), (a,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def slice_(a: Tensor, index) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accum(a, full)
    return _node(a.data[index].copy(), (a,), back)


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Row selection by integer index array (embedding lookup)."""
    indices = np.asarray(indices)
    data = np.take(a.data, indices, axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        _accum(a, full)
    return _node(data, (a,), back)


def gather_rows(a: Tensor, cols) -> Tensor:
    """Pick one element per row: out[i] = a[i, cols[i]]."""
    cols = np.asarray(cols)
    rows = np.arange(a.shape[0])

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        _accum(a, full)
    return _node(a.data[rows, cols].copy(), (a,), back)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    data = np.matmul(a.data, b.data)

    def back(g):
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
    return _node(data, (a, b), back)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x: (..., in) times weight (in, out) plus bias (out,)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


# ---------------------------------------------------------------------------
# normalization / activations over rows

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        gx = data * (g - (g * data).sum(axis=axis, keepdims=True))
        _accum(a, gx)
    return _node(data, (a,), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def back(g):
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))
    return _node(data, (a,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with population variance, then affine."""
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = pow_(add(var, _wrap(eps, x.dtype)), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: train scales kept units by 1/(1-p); eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout rate must be in [0,1), got {p}")
    if not train or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return mul(x, Tensor(mask, dtype=x.dtype))


# ---------------------------------------------------------------------------
# convolution / pooling

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """x: (B, C, H, W); weight: (O, C, kh, kw). im2col + matmul."""
    B, C, H, W = x.shape
    O, C2, kh, kw = weight.shape
    if C != C2:
        raise ShapeError(f"conv2d channels mismatch: input {x.shape} vs weight {weight.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    Hp, Wp = xp.shape[2], xp.shape[3]
    if Hp < kh or Wp < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    OH = (Hp - kh) // stride + 1
    OW = (Wp - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                     # B,C,OH,OW,kh,kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * OH * OW, C * kh * kw)
    wmat = weight.data.reshape(O, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    data = out.reshape(B, OH, OW, O).transpose(0, 3, 1, 2)
    cols_saved = cols

    def back(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(B * OH * OW, O)
        _accum(weight, (gflat.T @ cols_saved).reshape(weight.shape))
        if bias is not None:
            _accum(bias, gflat.sum(axis=0))
        if x.requires_grad:
            gcols = (gflat @ wmat).reshape(B, OH, OW, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * OH:stride, j:j + stride * OW:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
            _accum(x, gx)
    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(data, parents, back)


def maxpool2d(x: Tensor, k: int, stride: Optional[int] = None) -> Tensor:
    """k x k max pooling with arbitrary stride (overlapping windows allowed)."""
    s = stride or k
    B, C, H, W = x.shape
    if H < k or W < k:
        raise ShapeError(f"maxpool2d window {k} larger than input {x.shape}")
    OH = (H - k) // s + 1
    OW = (W - k) // s + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, (k, k), axis=(2, 3))
    win = win[:, :, ::s, ::s].reshape(B, C, OH, OW, k * k)
    idx = win.argmax(axis=-1)
    data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def back(g):
        rows = s * np.arange(OH)[:, None] + idx // k      # broadcast to OH,OW per b,c
        cols = s * np.arange(OW)[None, :] + idx % k
        b_idx = np.arange(B)[:, None, None, None]
        c_idx = np.arange(C)[None, :, None, None]
        gx = np.zeros_like(x.data)
        np.add.at(gx, (b_idx, c_idx, rows, cols), g)
        _accum(x, gx)
    return _node(data, (x,), back)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1) -> Tensor:
    """x: (B, C, L); weight: (O, C, k). Routed through conv2d with height 1."""
    x4 = reshape(x, (x.shape[0], x.shape[1], 1, x.shape[2]))
    w4 = reshape(weight, (weight.shape[0], weight.shape[1], 1, weight.shape[2]))
    out = conv2d(x4, w4, None, stride=stride)
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1)))
    return reshape(out, (out.shape[0], out.shape[1], out.shape[3]))


def maxpool1d(x: Tensor, k: int) -> Tensor:
    x4 = reshape(x, (x.shape[0], x.shape[1], 1, x.shape[2]))
    out = _maxpool_width(x4, k)
    return reshape(out, (out.shape[0], out.shape[1], out.shape[3]))


def _maxpool_width(x: Tensor, k: int) -> Tensor:
    """Max pool along the last axis only (height preserved)."""
    B, C, H, W = x.shape
    OW = W // k
    if OW < 1:
        raise ShapeError(f"maxpool window {k} larger than width {W}")
    crop = x.data[:, :, :, :OW * k]
    win = crop.reshape(B, C, H, OW, k)
    idx = win.argmax(axis=-1)
    data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gwin = np.zeros((B, C, H, OW, k), dtype=g.dtype)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, :, :OW * k] = gwin.reshape(B, C, H, OW * k)
        _accum(x, gx)
    return _node(data, (x,), back)


# ---------------------------------------------------------------------------
# losses

def cross_entropy_mean(logits: Tensor, labels) -> Tensor:
    """Mean categorical cross-entropy of integer labels over the batch."""
    picked = gather_rows(log_softmax(logits, axis=-1), labels)
    return -mean(picked)


def bce_with_logits_mean(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy on sigmoid(logit), numerically stable."""
    t = np.asarray(targets, dtype=logits.dtype).reshape(logits.shape)
    x = logits.data
    data = np.mean(np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x))))

    def back(g):
        _accum(logits, g * (1.0 / (1.0 + np.exp(-x)) - t) / x.size)
    return _node(np.asarray(data, dtype=logits.dtype), (logits,), back)
