"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds a node holding references to its differentiable
inputs together with one local gradient rule per input. ``backward`` walks
the resulting graph in reverse topological order and accumulates gradients
additively, so shared subexpressions receive the sum of their path
gradients.

Shapes must agree exactly. The only implicit expansion is the "bias" case:
the second operand's shape is a trailing suffix of the first one's
(``x[..., T, C] + b[C]`` or ``x[B, T, C] + pe[T, C]``).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import BackwardError, ShapeError

GradFn = Callable[[np.ndarray], np.ndarray]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """An n-dimensional float64 array that can take part in differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[tuple[Tensor, GradFn], ...] = ()
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar; implementations live in the functions below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division by a tensor is not supported; use l2_normalize or mul")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes) -> Tensor:
        return permute(self, axes)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(data: np.ndarray, parents: Iterable[tuple[Tensor, GradFn]]) -> Tensor:
    """Wrap ``data`` as the output of an operation.

    ``parents`` pairs each input with the rule mapping the output gradient
    to that input's gradient. Inputs that do not require gradients are
    dropped, and nothing is recorded while ``no_grad`` is active.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if is_grad_enabled():
        live = tuple((p, fn) for p, fn in parents if p.requires_grad)
    else:
        live = ()
    out.parents = live
    out.requires_grad = bool(live)
    return out


def _is_suffix(big: tuple[int, ...], small: tuple[int, ...]) -> bool:
    return len(small) < len(big) and big[len(big) - len(small):] == small


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if not shape:
        return np.asarray(grad.sum())
    return grad.reshape((-1,) + shape).sum(axis=0)


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or _is_suffix(a.shape, b.shape) or b.ndim == 0:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# elementwise arithmetic -------------------------------------------------------


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        a = as_tensor(a)
        return record(a.data + c, [(a, lambda g: g)])
    a = as_tensor(a)
    if b.ndim > a.ndim:
        a, b = b, a
    _check_binary(a, b, "add")
    bshape = b.shape
    return record(a.data + b.data, [(a, lambda g: g), (b, lambda g: _reduce_to(g, bshape))])


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    a = as_tensor(a)
    _check_binary(a, b, "sub")
    bshape = b.shape
    return record(a.data - b.data, [(a, lambda g: g), (b, lambda g: -_reduce_to(g, bshape))])


def neg(a: Tensor) -> Tensor:
    return record(-a.data, [(a, lambda g: -g)])


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return record(a.data * c, [(a, lambda g: g * c)])
    if b.ndim > a.ndim:
        a, b = b, a
    _check_binary(a, b, "mul")
    ad, bd, bshape = a.data, b.data, b.shape
    return record(
        ad * bd,
        [(a, lambda g: g * bd), (b, lambda g: _reduce_to(g * ad, bshape))],
    )


def square(a: Tensor) -> Tensor:
    ad = a.data
    return record(ad * ad, [(a, lambda g: 2.0 * ad * g)])


def tensor_abs(a: Tensor) -> Tensor:
    ad = a.data
    # subgradient at 0 is 0
    return record(np.abs(ad), [(a, lambda g: g * np.sign(ad))])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record(out, [(a, lambda g: g * out)])


def log(a: Tensor) -> Tensor:
    ad = a.data
    return record(np.log(ad), [(a, lambda g: g / ad)])


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return record(out, [(a, lambda g: g * 0.5 / out)])


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return record(out, [(a, lambda g: g * (1.0 - out * out))])


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    out = 0.5 * x * (1.0 + t)

    def grad(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)

    return record(out, [(a, grad)])


def stop_gradient(a: Tensor) -> Tensor:
    """Identity in the forward pass; blocks every gradient in the backward pass."""
    out = Tensor.__new__(Tensor)
    out.data = a.data
    out.grad = None
    out.name = None
    out.parents = ()
    out.requires_grad = False
    return out


# reductions -------------------------------------------------------------------


def _normalize_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _normalize_axis(axis, a.ndim)

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, shape).copy()

    return record(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), [(a, grad)])


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(tensor_sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


# linear algebra ---------------------------------------------------------------


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a single matrix shared across ``a``'s leading axes or has
    exactly the same leading axes as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ in {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def grad_b(g):
        if bd.ndim == 2:
            k, n = bd.shape
            return ad.reshape(-1, k).T @ g.reshape(-1, n) if ad.ndim > 2 else ad.T @ g
        return _swap(ad) @ g

    return record(ad @ bd, [(a, lambda g: g @ _swap(bd)), (b, grad_b)])


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as (out_features, in_features)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    n_in, n_out = wd.shape[1], wd.shape[0]

    def grad_w(g):
        return g.reshape(-1, n_out).T @ xd.reshape(-1, n_in)

    parents = [(x, lambda g: g @ wd), (weight, grad_w)]
    if bias is not None:
        parents.append((bias, lambda g: g.reshape(-1, n_out).sum(axis=0)))
    return record(out, parents)


# shape manipulation -----------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return record(out, [(a, lambda g: g.reshape(old))])


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(np.transpose(a.data, axes), [(a, lambda g: np.transpose(g, inverse))])


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return record(_swap(a.data), [(a, _swap)])


def take(a: Tensor, index) -> Tensor:
    shape = a.shape

    def grad(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return full

    return record(np.array(a.data[index]), [(a, grad)])


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1:]:
            raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    parents = []
    for i, t in enumerate(tensors):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        sl = (slice(None),) * axis + (slice(lo, hi),)
        parents.append((t, lambda g, sl=sl: g[sl]))
    return record(np.concatenate([t.data for t in tensors], axis=axis), parents)


def prepend_token(token: Tensor, seq: Tensor) -> Tensor:
    """Insert ``token[C]`` as row 0 of every sequence in ``seq[..., T, C]``."""
    if token.ndim != 1 or seq.ndim < 2 or seq.shape[-1] != token.shape[0]:
        raise ShapeError(f"prepend_token: token {token.shape} does not fit sequence {seq.shape}")
    lead = seq.shape[:-2]
    tok = np.broadcast_to(token.data, lead + (1, token.shape[0]))
    out = np.concatenate([tok, seq.data], axis=-2)
    return record(
        out,
        [
            (token, lambda g: g[..., 0, :].reshape(-1, token.shape[0]).sum(axis=0)),
            (seq, lambda g: g[..., 1:, :]),
        ],
    )


# normalisation and probability ------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    s = z / z.sum(axis=axis, keepdims=True)
    return record(s, [(a, lambda g: s * (g - (g * s).sum(axis=axis, keepdims=True)))])


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    s = np.exp(out)
    return record(out, [(a, lambda g: g - s * g.sum(axis=axis, keepdims=True))])


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise each token over its last axis, then apply ``gamma``/``beta``."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not fit input {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    gd = gamma.data

    def grad_x(g):
        gx = g * gd
        return inv_std * (
            gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )

    return record(
        xhat * gd + beta.data,
        [
            (x, grad_x),
            (gamma, lambda g: (g * xhat).reshape(-1, c).sum(axis=0)),
            (beta, lambda g: g.reshape(-1, c).sum(axis=0)),
        ],
    )


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))
    y = x / norm
    return record(y, [(a, lambda g: (g - y * (g * y).sum(axis=axis, keepdims=True)) / norm)])


# backward pass ----------------------------------------------------------------


def computation_record(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor.

    Returns the map from ``id(tensor)`` to the gradient contributed by this
    call. A loss that depends on no trainable tensor (for instance one that
    only sees ``stop_gradient`` outputs) contributes nothing.
    """
    if loss.size != 1:
        raise BackwardError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    pending = {id(loss): np.ones_like(loss.data)}
    contributed: dict[int, np.ndarray] = {}
    for node in reversed(computation_record(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        contributed[id(node)] = g
        node.grad = g if node.grad is None else node.grad + g
        for parent, rule in node.parents:
            pg = rule(g)
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg
    return contributed
