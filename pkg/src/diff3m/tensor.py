"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds a node in a computation graph while gradient
tracking is enabled (the default).  ``Tensor.backward`` walks that graph
in reverse topological order and accumulates gradients additively into
the ``grad`` field of every reachable leaf with ``requires_grad=True``.
Inference code can wrap forward passes in ``no_grad()`` to skip graph
construction entirely.

Shapes follow two conventions throughout the package:

* matrices are ``(rows, cols)``,
* image stacks are channels-last ``(N, H, W, C)`` (the layout keeps the
  convolution's patch gather cache-friendly in pure numpy).

All elementwise arithmetic requires operands of identical shape; the
only implicit broadcast is a Python scalar, which participates as a
constant.  Data arrays are treated as immutable once wrapped (only the
optimizer rewrites parameter payloads, exclusively).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "gradients",
    "matmul",
    "conv2d",
    "avg_pool2d",
    "upsample_nearest",
    "relu",
    "silu",
    "softmax",
    "mse",
    "concat",
    "add_channel",
    "global_avg_pool",
]

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the ``with`` block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _shape_error(op: str, *shapes) -> ValueError:
    pretty = " vs ".join(str(tuple(s)) for s in shapes)
    return ValueError(f"{op}: incompatible shapes {pretty}")


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item: tensor has {self.data.size} elements")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- autodiff core --------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar; accumulates into leaf ``.grad``."""
        if self.data.size != 1:
            raise ValueError(
                f"backward: loss must be scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- elementwise arithmetic ------------------------------------------------

    def _coerce(self, other, op: str):
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise _shape_error(op, self.data.shape, other.data.shape)
            return other
        if np.isscalar(other):
            return None  # constant scalar broadcast
        raise TypeError(f"{op}: unsupported operand {type(other).__name__}")

    def __add__(self, other):
        o = self._coerce(other, "add")
        if o is None:
            return Tensor._from_op(self.data + other, (self,), lambda g: (g,))
        return Tensor._from_op(self.data + o.data, (self, o), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other, "sub")
        if o is None:
            return Tensor._from_op(self.data - other, (self,), lambda g: (g,))
        return Tensor._from_op(self.data - o.data, (self, o), lambda g: (g, -g))

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        o = self._coerce(other, "mul")
        if o is None:
            return Tensor._from_op(self.data * other, (self,), lambda g: (g * other,))
        return Tensor._from_op(
            self.data * o.data,
            (self, o),
            lambda g: (g * o.data, g * self.data),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other, "div")
        if o is None:
            return Tensor._from_op(self.data / other, (self,), lambda g: (g / other,))
        return Tensor._from_op(
            self.data / o.data,
            (self, o),
            lambda g: (g / o.data, -g * self.data / (o.data * o.data)),
        )

    def __rtruediv__(self, other):
        return Tensor._from_op(
            other / self.data,
            (self,),
            lambda g: (-g * other / (self.data * self.data),),
        )

    # -- shape ops --------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        return Tensor._from_op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(src),)
        )

    def t(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ValueError(f"t: expected a matrix, got shape {self.data.shape}")
        return Tensor._from_op(self.data.T.copy(), (self,), lambda g: (g.T,))

    def sum(self) -> "Tensor":
        src = self.data.shape
        return Tensor._from_op(
            np.asarray(self.data.sum()),
            (self,),
            lambda g: (np.broadcast_to(g, src).copy(),),
        )

    def mean(self) -> "Tensor":
        src = self.data.shape
        n = self.data.size
        return Tensor._from_op(
            np.asarray(self.data.mean()),
            (self,),
            lambda g: (np.broadcast_to(g / n, src).copy(),),
        )


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise _shape_error("matmul", a.data.shape, b.data.shape)
    return Tensor._from_op(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


# -- convolution and resampling ---------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded same-size patch matrix: (N,H,W,C) -> (N*H*W, kh*kw*C)."""
    n, h, w, c = x.shape
    if kh == 1 and kw == 1:
        return x.reshape(n * h * w, c)
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """2-D convolution, stride 1, zero padding to preserve H and W.

    x: (N, H, W, C), w: (kh, kw, C, F) with odd kh/kw, b: (F,).
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[3] != w.data.shape[2]:
        raise _shape_error("conv2d", x.data.shape, w.data.shape)
    kh, kw, c_in, f = w.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    if b.data.shape != (f,):
        raise _shape_error("conv2d bias", b.data.shape, (f,))

    n, h, wd, _ = x.data.shape
    col = _im2col(x.data, kh, kw)
    wmat = w.data.reshape(kh * kw * c_in, f)
    y = (col @ wmat + b.data).reshape(n, h, wd, f)

    def backward(g):
        gmat = g.reshape(n * h * wd, f)
        dw = (col.T @ gmat).reshape(w.data.shape)
        if x.requires_grad or x._parents:
            # same conv of g with the flipped, io-swapped kernel
            w_flip = w.data[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * f, c_in)
            dx = (_im2col(g, kh, kw) @ w_flip).reshape(x.data.shape)
        else:
            dx = None
        db = gmat.sum(axis=0)
        return dx, dw, db

    return Tensor._from_op(y, (x, w, b), backward)


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k x k average pooling; H and W must divide by k."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise _shape_error("avg_pool2d", x.data.shape)
    n, h, w, c = x.data.shape
    if h % k or w % k:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by {k}")
    y = x.data.reshape(n, h // k, k, w // k, k, c).mean(axis=(2, 4))

    def backward(g):
        up = np.repeat(np.repeat(g, k, axis=1), k, axis=2)
        return (up / (k * k),)

    return Tensor._from_op(y, (x,), backward)


def upsample_nearest(x: Tensor, k: int = 2) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise _shape_error("upsample_nearest", x.data.shape)
    y = np.repeat(np.repeat(x.data, k, axis=1), k, axis=2)

    def backward(g):
        n, h, w, c = x.data.shape
        return (g.reshape(n, h, k, w, k, c).sum(axis=(2, 4)),)

    return Tensor._from_op(y, (x,), backward)


# -- activations -------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


def silu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    z = np.exp(-np.abs(x.data))  # overflow-safe logistic
    sig = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    y = x.data * sig

    def backward(g):
        return (g * sig * (1.0 + x.data * (1.0 - sig)),)

    return Tensor._from_op(y, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return Tensor._from_op(y, (x,), backward)


# -- reductions ---------------------------------------------------------------------


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements; returns a scalar tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise _shape_error("mse", a.data.shape, b.data.shape)
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        scale = 2.0 * g / n
        return (scale * diff, -scale * diff)

    return Tensor._from_op(np.asarray((diff * diff).mean()), (a, b), backward)


# -- structural ops ------------------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along one axis; all other dims must agree."""
    ts = [_as_tensor(t) for t in tensors]
    ref = ts[0].data.shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if len(t.data.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.data.shape, ref)) if i != ax
        ):
            raise _shape_error("concat", *[t.data.shape for t in ts])
    splits = np.cumsum([t.data.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=ax))

    return Tensor._from_op(np.concatenate([t.data for t in ts], axis=ax), ts, backward)


def add_channel(x: Tensor, v: Tensor) -> Tensor:
    """Add a per-sample channel vector (N,C) across the spatial axes of (N,H,W,C)."""
    x, v = _as_tensor(x), _as_tensor(v)
    if x.data.ndim != 4 or v.data.shape != (x.data.shape[0], x.data.shape[3]):
        raise _shape_error("add_channel", x.data.shape, v.data.shape)
    y = x.data + v.data[:, None, None, :]
    return Tensor._from_op(y, (x, v), lambda g: (g, g.sum(axis=(1, 2))))


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,H,W,C) -> (N,C) spatial mean."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise _shape_error("global_avg_pool", x.data.shape)
    n, h, w, c = x.data.shape

    def backward(g):
        return (np.broadcast_to(g[:, None, None, :] / (h * w), x.data.shape).copy(),)

    return Tensor._from_op(x.data.mean(axis=(1, 2)), (x,), backward)


# -- functional gradient API ----------------------------------------------------------


def gradients(loss: Tensor, params: dict) -> dict:
    """Gradient of a scalar loss for every named parameter.

    Parameters not reachable from the loss get a zero gradient of the
    matching shape.  Existing ``.grad`` fields are reset first.
    """
    for p in params.values():
        p.zero_grad()
    loss.backward()
    out = {}
    for name, p in params.items():
        out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return out
