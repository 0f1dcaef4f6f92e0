"""Dense f64 tensors with recorded-graph reverse-mode differentiation.

Every tensor created by an operation remembers its parents and a closure
that routes the output gradient back to them.  Creation order doubles as
the tape: parents always precede children, so backward() visits nodes in
reverse creation order and touches each node exactly once.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_tape_counter = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_tape_id", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(p for p in _parents if p.requires_grad)
        self._backward = _backward if self.requires_grad else None
        self._tape_id = next(_tape_counter)
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        """Constant copy sharing the same buffer; gradients stop here."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; full-fat functions live at module level
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _check_broadcast(a_shape, b_shape):
    """Allow numpy-style broadcast only where mismatched axes are size 1."""
    for da, db in zip(reversed(a_shape), reversed(b_shape)):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"cannot broadcast {a_shape} with {b_shape}")


def _unbroadcast(g, shape):
    """Sum gradient g back down to `shape` after a broadcast forward."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, bwd_a, bwd_b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    out_data = fwd(a.data, b.data)

    def backward(g, out_data=out_data):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(bwd_a(g, a.data, b.data, out_data), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(bwd_b(g, a.data, b.data, out_data), b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=backward)


def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y, o: g,
                   lambda g, x, y, o: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y, o: g,
                   lambda g, x, y, o: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y, o: g * y,
                   lambda g, x, y, o: g * x)


def div(a, b):
    b_t = _as_tensor(b)
    if np.any(b_t.data == 0.0):
        raise DomainError("division by zero")
    return _binary(a, b_t, lambda x, y: x / y,
                   lambda g, x, y, o: g / y,
                   lambda g, x, y, o: -g * x / (y * y))


def maximum(a, b):
    # ties send the full gradient to the first argument
    return _binary(a, b, np.maximum,
                   lambda g, x, y, o: g * (x >= y),
                   lambda g, x, y, o: g * (x < y))


def absolute(a):
    a = _as_tensor(a)
    out_data = np.abs(a.data)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def square(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g * 2.0 * a.data)

    return Tensor(a.data * a.data, _parents=(a,), _backward=backward)


def sqrt(a):
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of negative value")
    out_data = np.sqrt(a.data)

    def backward(g, out_data=out_data):
        _accumulate(a, g * 0.5 / out_data)

    return Tensor(out_data, _parents=(a,), _backward=backward)


def relu(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return Tensor(np.maximum(a.data, 0.0), _parents=(a,), _backward=backward)


def sigmoid(a):
    a = _as_tensor(a)
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out_data[~pos] = e / (1.0 + e)

    def backward(g, out_data=out_data):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g, out_data=out_data):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def _normalize_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(sorted(a % ndim for a in axes))


def sum_(a, axes=None, keepdims=False):
    a = _as_tensor(a)
    axes = _normalize_axes(axes, a.data.ndim)
    if a.data.size == 0:
        raise DomainError("reduction over empty tensor")
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return Tensor(out_data, _parents=(a,), _backward=backward)


def mean(a, axes=None, keepdims=False):
    a = _as_tensor(a)
    axes = _normalize_axes(axes, a.data.ndim)
    n = int(np.prod([a.data.shape[i] for i in axes])) if axes else 1
    if n == 0 or a.data.size == 0:
        raise DomainError("mean over empty reduction set")
    return mul(sum_(a, axes=axes, keepdims=keepdims), 1.0 / n)


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat mismatch: {t.shape} vs {ref} on axis {axis}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return Tensor(out_data, _parents=tuple(tensors), _backward=backward)


def slice_axis(a, start, stop, axis=1):
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward(g):
        gg = np.zeros_like(a.data)
        gg[idx] = g
        _accumulate(a, gg)

    return Tensor(a.data[idx].copy(), _parents=(a,), _backward=backward)


def _im2col(xp, kh, kw):
    n, c, hp, wp = xp.shape
    h, w = hp - kh + 1, wp - kw + 1
    cols = np.empty((n, c, kh * kw, h, w), dtype=np.float64)
    t = 0
    for i in range(kh):
        for j in range(kw):
            cols[:, :, t] = xp[:, :, i:i + h, j:j + w]
            t += 1
    return cols.reshape(n, c * kh * kw, h * w), h, w


def conv2d(x, weight, bias, padding=None):
    """Same-padded cross-correlation: x[N,Cin,H,W] * weight[Cout,Cin,kh,kw] + bias[Cout]."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    n, cin, h, w = x.shape
    cout, cink, kh, kw = weight.shape
    if cin != cink:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, kernel {cink}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv2d kernels must have odd extent")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias must be ({cout},), got {bias.shape}")
    if padding is None:
        padding = (kh - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols, ho, wo = _im2col(xp, kh, kw)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out_data = (wmat @ cols).reshape(n, cout, ho, wo) + bias.data[None, :, None, None]

    def backward(g):
        gy = g.reshape(n, cout, ho * wo)
        if weight.requires_grad:
            gw = np.einsum("nof,ncf->oc", gy, cols, optimize=True)
            _accumulate(weight, gw.reshape(weight.shape))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.einsum("oc,nof->ncf", wmat, gy, optimize=True)
            gcols = gcols.reshape(n, cin, kh * kw, ho, wo)
            gxp = np.zeros_like(xp)
            t = 0
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + ho, j:j + wo] += gcols[:, :, t]
                    t += 1
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            _accumulate(x, gxp)

    return Tensor(out_data, _parents=(x, weight, bias), _backward=backward)


def pad_edge(x):
    """Replicate-pad a [N,C,H,W] tensor by one pixel on each spatial side."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError("pad_edge expects a 4-d tensor")
    n, c, h, w = x.shape
    out_data = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    iy = np.clip(np.arange(-1, h + 1), 0, h - 1)
    jx = np.clip(np.arange(-1, w + 1), 0, w - 1)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), slice(None), iy[:, None], jx[None, :]), g)
        _accumulate(x, gx)

    return Tensor(out_data, _parents=(x,), _backward=backward)


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T.copy()
_ZERO_BIAS = np.zeros(1)


def sobel(x):
    """Horizontal/vertical Sobel responses of a single-channel image.

    Borders are replicate-padded so constant images respond with exact zero
    everywhere; the learned conv layers keep zero padding.
    """
    x = _as_tensor(x)
    if x.data.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"sobel expects [N,1,H,W], got {x.shape}")
    xp = pad_edge(x)
    gx = conv2d(xp, Tensor(_SOBEL_X[None, None]), Tensor(_ZERO_BIAS), padding=0)
    gy = conv2d(xp, Tensor(_SOBEL_Y[None, None]), Tensor(_ZERO_BIAS), padding=0)
    return gx, gy


def logsumexp(logits):
    """Max-shifted log-sum-exp over the channel axis, keepdims: [N,C,H,W] -> [N,1,H,W]."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 4 or logits.shape[1] < 2:
        raise ShapeError("logsumexp expects [N,C,H,W] with C >= 2")
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    s = e.sum(axis=1, keepdims=True)
    out_data = m + np.log(s)
    p = e / s

    def backward(g, p=p):
        _accumulate(logits, g * p)

    return Tensor(out_data, _parents=(logits,), _backward=backward)


def softmax(logits):
    """Per-pixel channel softmax via max-shifted log-sum-exp."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 4 or logits.shape[1] < 2:
        raise ShapeError("softmax expects [N,C,H,W] with C >= 2")
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g, p=p):
        _accumulate(logits, p * (g - (g * p).sum(axis=1, keepdims=True)))

    return Tensor(p, _parents=(logits,), _backward=backward)


def backward(loss):
    """Reverse-topological gradient accumulation from a scalar loss."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward on non-scalar of shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward on a tensor outside any graph")
    if loss._consumed:
        raise ContractError("backward called twice on the same loss")
    loss._consumed = True

    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        nodes.append(t)
        stack.extend(t._parents)
    # creation order is topological by construction
    nodes.sort(key=lambda t: t._tape_id, reverse=True)

    loss.grad = np.ones_like(loss.data)
    for t in nodes:
        if t._backward is not None and t.grad is not None:
            t._backward(t.grad)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)
