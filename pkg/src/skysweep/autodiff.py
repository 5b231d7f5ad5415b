"""Minimal reverse-mode autodiff over numpy arrays.

Tensors wrap float64 ndarrays and record a backward closure per operation;
backward() runs an iterative topological sweep (no recursion limits).
Only the ops the policy needs are provided.  Inside a `no_grad()` block no
graph is recorded, which keeps pure-inference rollouts cheap.
"""

import numpy as np

_grad_enabled = [True]


class no_grad:
    def __enter__(self):
        _grad_enabled.append(False)

    def __exit__(self, *exc):
        _grad_enabled.pop()
        return False


def grad_enabled():
    return _grad_enabled[-1]


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self):
        return Tensor(self.data)

    def _accum(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        # The graph is single-use.  Closures in _backward reference both the
        # output and its parents, forming cycles that otherwise linger until a
        # gen-2 gc pass; dropping them (and intermediate grads) here keeps
        # memory flat across training iterations.  Leaf grads survive.
        for node in topo:
            if node._parents:
                node._backward = None
                node._parents = ()
                node.grad = None

    # --- operator sugar ---
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return mul(self, power(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_holder = []

    def backward():
        g = out_holder[0].grad
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    out = _make(a.data + b.data, (a, b), backward)
    out_holder.append(out)
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_holder = []

    def backward():
        g = out_holder[0].grad
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    out = _make(a.data * b.data, (a, b), backward)
    out_holder.append(out)
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out_holder = []

    def backward():
        g = out_holder[0].grad
        if a.requires_grad:
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    out = _make(a.data @ b.data, (a, b), backward)
    out_holder.append(out)
    return out


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a._accum(g * p * a.data ** (p - 1.0))

    out = _make(a.data ** p, (a,), backward)
    out_holder.append(out)
    return out


def exp(a):
    a = as_tensor(a)
    out_holder = []

    def backward():
        out = out_holder[0]
        a._accum(out.grad * out.data)

    out = _make(np.exp(a.data), (a,), backward)
    out_holder.append(out)
    return out


def log(a):
    a = as_tensor(a)
    out_holder = []

    def backward():
        a._accum(out_holder[0].grad / a.data)

    out = _make(np.log(a.data), (a,), backward)
    out_holder.append(out)
    return out


def tanh(a):
    a = as_tensor(a)
    out_holder = []

    def backward():
        out = out_holder[0]
        a._accum(out.grad * (1.0 - out.data ** 2))

    out = _make(np.tanh(a.data), (a,), backward)
    out_holder.append(out)
    return out


def sigmoid(a):
    a = as_tensor(a)
    out_holder = []

    def backward():
        out = out_holder[0]
        a._accum(out.grad * out.data * (1.0 - out.data))

    s = 1.0 / (1.0 + np.exp(-a.data))
    out = _make(s, (a,), backward)
    out_holder.append(out)
    return out


def relu(a):
    a = as_tensor(a)
    out_holder = []

    def backward():
        a._accum(out_holder[0].grad * (a.data > 0))

    out = _make(np.maximum(a.data, 0.0), (a,), backward)
    out_holder.append(out)
    return out


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_holder = []

    def backward():
        g = out_holder[0].grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape).copy())

    out = _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)
    out_holder.append(out)
    return out


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    out_holder = []

    def backward():
        a._accum(out_holder[0].grad.reshape(a.shape))

    out = _make(a.data.reshape(shape), (a,), backward)
    out_holder.append(out)
    return out


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_holder = []

    def backward():
        a._accum(out_holder[0].grad.transpose(inverse))

    out = _make(a.data.transpose(axes), (a,), backward)
    out_holder.append(out)
    return out


def take(a, indices):
    """Select rows along axis 0 (indices may repeat)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    out_holder = []

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, indices, out_holder[0].grad)

    out = _make(a.data[indices], (a,), backward)
    out_holder.append(out)
    return out


def gather(a, indices):
    """Per-row pick from a 2-D tensor: out[i] = a[i, indices[i]]."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    rows = np.arange(a.shape[0])
    out_holder = []

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, (rows, indices), out_holder[0].grad)

    out = _make(a.data[rows, indices], (a,), backward)
    out_holder.append(out)
    return out


def narrow(a, axis, lo, hi):
    """Contiguous slice [lo, hi) along one axis."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(lo, hi)
    index = tuple(index)
    out_holder = []

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += out_holder[0].grad

    out = _make(a.data[index], (a,), backward)
    out_holder.append(out)
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out_holder = []

    def backward():
        pieces = np.split(out_holder[0].grad, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accum(piece)

    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)
    out_holder.append(out)
    return out


def masked_softmax(scores, mask, axis=-1):
    """Softmax over positions where mask is True; masked entries are exactly 0.

    Rows must contain at least one feasible position.
    """
    scores = as_tensor(scores)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    neg = np.where(mask, scores.data, -np.inf)
    m = neg.max(axis=axis, keepdims=True)
    e = np.exp(np.where(mask, scores.data - m, -np.inf))
    e = np.where(mask, e, 0.0)
    z = e.sum(axis=axis, keepdims=True)
    p = e / z
    out_holder = []

    def backward():
        g = out_holder[0].grad
        pd = out_holder[0].data
        inner = (g * pd).sum(axis=axis, keepdims=True)
        scores._accum(pd * (g - inner))

    out = _make(p, (scores,), backward)
    out_holder.append(out)
    return out


def index_add(base, indices, values):
    """out = base with values[i] added at position indices[i] (1-D base)."""
    base, values = as_tensor(base), as_tensor(values)
    indices = np.asarray(indices, dtype=np.int64)
    data = base.data.copy()
    np.add.at(data, indices, values.data)
    out_holder = []

    def backward():
        g = out_holder[0].grad
        if base.requires_grad:
            base._accum(g)
        if values.requires_grad:
            values._accum(g[indices])

    out = _make(data, (base, values), backward)
    out_holder.append(out)
    return out
