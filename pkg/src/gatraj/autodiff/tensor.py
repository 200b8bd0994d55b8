"""Dense float64 tensors with a reverse-mode tape."""

from __future__ import annotations

import contextlib
import threading

import numpy as np

# Grad mode is per thread so evaluation threads cannot switch it for a trainer.
_mode = threading.local()


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference and benchmarks)."""
    prev = is_grad_enabled()
    _mode.enabled = False
    try:
        yield
    finally:
        _mode.enabled = prev


def is_grad_enabled():
    return getattr(_mode, "enabled", True)


def _unbroadcast(grad, shape):
    # Sum out the axes numpy broadcasting added or stretched.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    """A node of the compute graph.

    ``op`` tags the operation that produced the tensor ("leaf" for inputs and
    parameters). Non-leaf tensors keep references to their parents and a
    closure mapping the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, op="leaf", name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # -- graph construction -------------------------------------------------

    @staticmethod
    def make(data, parents, op, backward) -> Tensor:
        """Wrap an op result, recording it on the tape if any parent needs grad."""
        needs = is_grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs, op=op)
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        Returns a dict mapping each such leaf tensor to its gradient.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        leaves = {}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                leaves[node] = node.grad
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return leaves

    def zero_grad(self):
        self.grad = None

    # -- elementwise arithmetic --------------------------------------------

    def _binary(self, other, op, fwd, bwd):
        other = as_tensor(other)
        try:
            out = fwd(self.data, other.data)
        except ValueError as exc:
            raise ShapeError(f"{op}: incompatible shapes {self.shape} and {other.shape}") from exc
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            ga, gb = bwd(g, self.data, other.data, out)
            return (
                None if ga is None else _unbroadcast(ga, a_shape),
                None if gb is None else _unbroadcast(gb, b_shape),
            )

        return Tensor.make(out, (self, other), op, backward)

    def __add__(self, other):
        return self._binary(other, "add", np.add, lambda g, a, b, o: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, "sub", np.subtract, lambda g, a, b, o: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        return self._binary(other, "mul", np.multiply, lambda g, a, b, o: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other, "div", np.divide, lambda g, a, b, o: (g / b, -g * a / (b * b))
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor.make(-self.data, (self,), "neg", lambda g: (-g,))

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        x = self.data
        out = x**exponent
        return Tensor.make(out, (self,), "pow", lambda g: (g * exponent * x ** (exponent - 1),))

    def __matmul__(self, other):
        return matmul(self, other)

    # -- unary maps --------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor.make(out, (self,), "exp", lambda g: (g * out,))

    def log(self):
        x = self.data
        return Tensor.make(np.log(x), (self,), "log", lambda g: (g / x,))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor.make(out, (self,), "tanh", lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        out = _stable_sigmoid(self.data)
        return Tensor.make(out, (self,), "sigmoid", lambda g: (g * out * (1.0 - out),))

    def relu(self):
        mask = self.data > 0
        return Tensor.make(self.data * mask, (self,), "relu", lambda g: (g * mask,))

    def softplus(self):
        x = self.data
        out = np.logaddexp(0.0, x)
        return Tensor.make(out, (self,), "softplus", lambda g: (g * _stable_sigmoid(x),))

    def abs(self):
        x = self.data
        return Tensor.make(np.abs(x), (self,), "abs", lambda g: (g * np.sign(x),))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor.make(out, (self,), "sqrt", lambda g: (g * 0.5 / out,))

    def clamp_min(self, floor):
        x = self.data
        keep = x >= floor
        return Tensor.make(np.maximum(x, floor), (self,), "clamp_min", lambda g: (g * keep,))

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.make(out, (self,), "sum", backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape manipulation ------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from exc
        return Tensor.make(out, (self,), "reshape", lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        out = self.data.transpose(axes)
        return Tensor.make(out, (self,), "transpose", lambda g: (g.transpose(inverse),))

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def __getitem__(self, index):
        shape = self.shape
        if isinstance(index, Tensor):
            index = index.data.astype(np.int64)
        out = self.data[index]

        basic = _is_basic_index(index)

        def backward(g):
            full = np.zeros(shape)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            return (full,)

        return Tensor.make(out, (self,), "getitem", backward)


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def _stable_sigmoid(x):
    # exp(-|x|) never overflows.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _topological_order(root):
    order, seen = [], set()
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


_ROW_BLOCK = 8


def _matmul(x, y):
    """np.matmul, with left operands padded to a multiple of 8 rows.

    OpenBLAS routes leftover rows (count not a multiple of its register
    block) through a different micro-kernel, so a row's result can depend on
    where it sits in the matrix. Padding makes every row take the same path,
    which keeps outputs exactly equivariant under row permutations.
    """
    if y.ndim != 2 or x.ndim < 2:
        return np.matmul(x, y)
    if x.ndim > 2:
        # numpy folds the leading axes into one gemm, so pad the folded rows too
        return _matmul(x.reshape(-1, x.shape[-1]), y).reshape(*x.shape[:-1], y.shape[1])
    m = x.shape[0]
    if m % _ROW_BLOCK == 0:
        return np.matmul(x, y)
    padded = np.zeros((m + _ROW_BLOCK - m % _ROW_BLOCK, x.shape[1]))
    padded[:m] = x
    return np.matmul(padded, y)[:m]


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    try:
        out = _matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(_matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor.make(out, (a, b), "matmul", backward)
