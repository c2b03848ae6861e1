"""A small reverse-mode autodiff engine over numpy arrays.

Operations executed inside an active :class:`GradientTape` are recorded in
order; :func:`backward` replays them in reverse. Outside a tape the ops are
plain numpy computations, which is what inference paths use.

Example::

    w = Tensor(np.ones(3), requires_grad=True)
    with GradientTape():
        loss = (w * w).sum()
    grads = backward(loss)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

_TAPES: list["GradientTape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: GradientTape | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
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

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return mul(self, 1.0 / other) if not isinstance(other, Tensor) else div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


@dataclass
class GradientTape:
    """Records differentiable ops executed while the tape is active."""

    nodes: list = field(default_factory=list)

    def __enter__(self) -> "GradientTape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def gradient(self, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict:
        return _run_backward(self, loss, params)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _record(op: str, out_data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    out = Tensor(out_data)
    if _TAPES and any(t.requires_grad for t in inputs):
        tape = _TAPES[-1]
        out.requires_grad = True
        out._tape = tape
        tape.nodes.append(_Node(out, inputs, backward_fn, op))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ------------------------------------------------------------------ backward


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> dict:
    """Gradients of a scalar ``loss`` w.r.t. ``params``.

    ``params`` defaults to every leaf tensor with ``requires_grad`` seen on
    the loss's tape. Results are also accumulated into each ``param.grad``.
    Parameters the loss does not depend on get zero gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        params = list(params or [])
        grads = {p: np.zeros_like(p.data) for p in params}
        for p, g in grads.items():
            p.grad = g if p.grad is None else p.grad + g
        return grads
    return _run_backward(tape, loss, params)


def _run_backward(tape: GradientTape, loss: Tensor, params) -> dict:
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    produced = {id(n.out) for n in tape.nodes}
    if params is None:
        seen = {}
        for node in tape.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced:
                    seen[id(t)] = t
        params = list(seen.values())
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    out = {}
    for p in params:
        g = grads.get(id(p))
        g = np.zeros_like(p.data) if g is None else g.reshape(p.shape).astype(p.dtype, copy=False)
        p.grad = g if p.grad is None else p.grad + g
        out[p] = g
    return out


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _record(
        "mul", ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))
    )


def div(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    return _record(
        "div",
        ad / bd,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (both operands >= 2-D)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim > 2:
        # weight product: one 2-D BLAS call instead of a batched one plus a reduction
        def bw_weight(g):
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return _record("matmul", out, (a, b), bw_weight)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record("matmul", out, (a, b), bw)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", x.data.sum(axis=axes, keepdims=keepdims), (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _record("mean", x.data.mean(axis=axes, keepdims=keepdims), (x,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record("concat", out, tensors, lambda g: tuple(np.split(g, sizes, axis=axis)))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _record("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select one position along ``axis`` (the axis is dropped)."""
    shape = x.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _record("take", np.take(x.data, index, axis=axis), (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _record("softmax", s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    """Numerically stable ``ln sigmoid(x)``."""
    z = x.data
    out = np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))
    return _record("log_sigmoid", out, (x,), lambda g: (g * _sigmoid(-z),))


def relu(x: Tensor) -> Tensor:
    m = x.data > 0
    return _record("relu", np.where(m, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * m,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    z = x.data
    z2 = z * z
    inner = _GELU_C * z * (1.0 + 0.044715 * z2)
    t = np.tanh(inner)
    out = 0.5 * z * (1.0 + t)

    def bw(g):
        d = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * z2)
        return (g * d,)

    return _record("gelu", out, (x,), bw)


def gather_rows(table: Tensor, index) -> Tensor:
    """``table[index]`` for an integer index array of any shape."""
    index = np.asarray(index, dtype=np.int64)
    if table.ndim != 2:
        raise ValueError(f"gather_rows: table must be 2-D, got shape {table.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"gather_rows: index out of range for table with {table.shape[0]} rows")
    n, d = table.shape

    def bw(g):
        return (kernels.scatter_add_rows(index.reshape(-1), np.ascontiguousarray(g.reshape(-1, d)), n),)

    return _record("gather_rows", table.data[index], (table,), bw)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    except ValueError:
        raise ValueError(f"masked_fill: mask shape {mask.shape} incompatible with {x.shape}") from None
    if out.shape != x.shape:
        raise ValueError(f"masked_fill: mask shape {mask.shape} incompatible with {x.shape}")
    return _record("masked_fill", out, (x,), lambda g: (np.where(mask, 0.0, g).astype(g.dtype),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"layer_norm: gamma/beta shapes {gamma.shape}, {beta.shape} do not match last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def bw(g):
        gx_hat = g * gd
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _record("layer_norm", xhat * gd + beta.data, (x, gamma, beta), bw)


def dropout(x: Tensor, keep_prob: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"dropout: keep_prob must lie in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    m = (rng.random(x.shape) < keep_prob).astype(x.dtype) / keep_prob
    return _record("dropout", x.data * m, (x,), lambda g: (g * m,))


def self_mean_aggregate(indptr: np.ndarray, indices: np.ndarray, self_x: Tensor, src_x: Tensor) -> Tensor:
    """Row r -> mean of ``self_x[r]`` and ``src_x[c]`` over the CSR neighbours c of r."""
    if self_x.ndim != 2 or src_x.ndim != 2 or self_x.shape[1] != src_x.shape[1]:
        raise ValueError(f"self_mean_aggregate: incompatible shapes {self_x.shape} and {src_x.shape}")
    if len(indptr) != self_x.shape[0] + 1:
        raise ValueError(f"self_mean_aggregate: indptr has {len(indptr)} entries for {self_x.shape[0]} rows")
    n_src = src_x.shape[0]
    out = kernels.self_mean(indptr, indices, self_x.data, src_x.data)
    return _record(
        "self_mean_aggregate",
        out,
        (self_x, src_x),
        lambda g: kernels.self_mean_backward(indptr, indices, np.ascontiguousarray(g), n_src),
    )


# ------------------------------------------------------------------ optimizer


class Adam:
    """Bias-corrected Adam over a fixed list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        """Apply one update. ``grads`` is a mapping param -> array or a list aligned with ``params``."""
        if isinstance(grads, dict):
            grads = [grads.get(p) for p in self.params]
        for p, g in zip(self.params, grads):
            if g is not None and g.shape != p.shape:
                raise ValueError(f"adam_step: gradient shape {g.shape} does not match parameter {p.shape}")
            if g is not None and not np.all(np.isfinite(g)):
                raise FloatingPointError(f"adam_step: non-finite gradient for {p.name or p.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                g = np.zeros_like(p.data)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            upd = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data = (p.data - upd).astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# --------------------------------------------------------------- grad check


@dataclass
class GradCheckReport:
    per_param: list
    max_error: float = 0.0

    def __len__(self) -> int:
        return len(self.per_param)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-4,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of ``f()`` with central differences.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    ``f`` must be deterministic.
    """
    params = list(params)
    if not params:
        return GradCheckReport([], 0.0)
    for p in params:
        p.grad = None
    with GradientTape():
        loss = f()
    analytic = backward(loss, params)
    errs = []
    for p in params:
        flat = p.data.reshape(-1)
        a = analytic[p].reshape(-1)
        worst = 0.0
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = float(f().data)
            flat[k] = orig - step
            down = float(f().data)
            flat[k] = orig
            num = (up - down) / (2 * step)
            worst = max(worst, abs(a[k] - num) / max(abs(a[k]), abs(num), floor))
        errs.append(worst)
    for p in params:
        p.grad = None
    return GradCheckReport(errs, max(errs))
