"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 array, the tensors it was computed from and a
closure that pushes its gradient back to them.  Calling :meth:`Tensor.backward`
on a scalar walks the graph in reverse topological order, visiting each node
once and accumulating into ``.grad``.

Layout convention for sequence data is channel-last: ``(batch, frames, channels)``.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "relu",
    "gelu",
    "silu",
    "sigmoid",
    "tanh",
    "conv1d",
    "reshape",
    "split",
    "concat",
    "tensor_sum",
    "mean",
    "mse_loss",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a primitive."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, retain_graph=False):
        """Accumulate d(self)/d(leaf) into every reachable tensor's ``grad``.

        The graph is released as it is traversed unless ``retain_graph`` is set.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            if not retain_graph and node is not self:
                node._parents = ()
                node._backward = None
        if not retain_graph:
            self._parents = ()
            self._backward = None


def _needs_grad(t):
    return t.requires_grad or t._backward is not None


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _needs_grad(p):
                stack.append((p, False))
    return order


_RECORD = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference only)."""
    prev = _RECORD[0]
    _RECORD[0] = False
    try:
        yield
    finally:
        _RECORD[0] = prev


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    parents = tuple(parents)
    if not _RECORD[0] or not any(_needs_grad(p) for p in parents):
        return Tensor(data)
    return Tensor(data, _parents=parents, _backward=backward)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """``a @ b`` where ``b`` is a 2-D matrix and ``a`` has any leading dims.

    Leading dimensions are flattened so the product is a single GEMM.
    """
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    lead = a.shape[:-1]
    a2 = a.data.reshape(-1, a.shape[-1])
    bd = b.data
    out = (a2 @ bd).reshape(*lead, bd.shape[1])

    def backward(g):
        g2 = g.reshape(-1, bd.shape[1])
        return (g2 @ bd.T).reshape(a.shape), a2.T @ g2

    return _make(out, (a, b), backward)


def transpose(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose: need at least 2 dims, got shape {a.shape}")
    return _make(
        np.ascontiguousarray(np.swapaxes(a.data, -1, -2)),
        (a,),
        lambda g: (np.swapaxes(g, -1, -2),),
    )


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),))


def split(a, sections, axis=-1):
    """Split into ``sections`` equal chunks along ``axis``."""
    a = as_tensor(a)
    size = a.shape[axis]
    if size % sections:
        raise ShapeError(f"split: axis of size {size} not divisible by {sections}")
    step = size // sections
    axis = axis % a.ndim
    outs = []
    for i in range(sections):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(i * step, (i + 1) * step)
        idx = tuple(idx)

        def backward(g, idx=idx):
            full = np.zeros_like(a.data)
            full[idx] = g
            return (full,)

        outs.append(_make(a.data[idx], (a,), backward))
    return outs


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        ax = axis % g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return out

    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    return _make(data, tensors, backward)


# ---------------------------------------------------------------------------
# activations


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def gelu(a):
    """Tanh-approximated GELU."""
    a = as_tensor(a)
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def backward(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * dinner),)

    return _make(out, (a,), backward)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a):
    a = as_tensor(a)
    x = a.data
    s = _sigmoid(x)
    return _make(x * s, (a,), lambda g: (g * (s + x * s * (1.0 - s)),))


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


# ---------------------------------------------------------------------------
# convolution


def conv1d(x, weight, bias=None, dilation=1):
    """Dilated 1-D convolution with zero "same" padding.

    ``x`` is ``(batch, frames, c_in)``, ``weight`` is ``(kernel, c_in, c_out)``
    with odd ``kernel``; output is ``(batch, frames, c_out)``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1]:
        raise ShapeError(f"conv1d: incompatible shapes {x.shape} and {weight.shape}")
    k, cin, cout = weight.shape
    if k % 2 == 0:
        raise ShapeError(f"conv1d: kernel size must be odd, got {k}")
    B, n, _ = x.shape
    half = (k - 1) // 2
    # column j holds x shifted by (j - half) * dilation frames, zero outside the sequence
    spans = []
    for j in range(k):
        s = (j - half) * dilation
        lo, hi = max(0, -s), min(n, n - s)
        spans.append((s, lo, hi))
    cols = np.zeros((B, n, k * cin))
    for j, (s, lo, hi) in enumerate(spans):
        if lo < hi:
            cols[:, lo:hi, j * cin : (j + 1) * cin] = x.data[:, lo + s : hi + s]
    cols2 = cols.reshape(B * n, k * cin)
    w2 = weight.data.reshape(k * cin, cout)
    out = (cols2 @ w2).reshape(B, n, cout)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv1d: bias shape {bias.shape} does not match c_out={cout}")
        out += bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(B * n, cout)
        gw = (cols2.T @ g2).reshape(k, cin, cout)
        gcols = (g2 @ w2.T).reshape(B, n, k * cin)
        gx = np.zeros((B, n, cin))
        for j, (s, lo, hi) in enumerate(spans):
            if lo < hi:
                gx[:, lo + s : hi + s] += gcols[:, lo:hi, j * cin : (j + 1) * cin]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# reductions and losses


def tensor_sum(a):
    a = as_tensor(a)
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a):
    a = as_tensor(a)
    shape, size = a.shape, a.data.size
    return _make(
        np.asarray(a.data.mean()),
        (a,),
        lambda g: (np.broadcast_to(g / size, shape).copy(),),
    )


def mse_loss(pred, target):
    """Mean of squared differences over every element."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    size = diff.size

    def backward(g):
        gd = (2.0 / size) * g * diff
        return gd, -gd

    return _make(np.asarray(np.mean(diff * diff)), (pred, target), backward)
