"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Operations executed inside an active :class:`Tape` are recorded together with
a closure that maps the output gradient to parent gradients.  Outside a tape
nothing is recorded, which is how inference runs.

Shapes never broadcast implicitly.  Python scalars combine with tensors of any
shape; everything else must either match exactly or go through :func:`expand`.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

DTYPE = np.float64

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as operations execute, so the list is topologically
    sorted by construction.  Tapes are thread-local; independent tapes may run
    in different threads.
    """

    def __init__(self):
        self.nodes: list[tuple["Tensor", tuple["Tensor", ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], backward_fn: Callable) -> None:
        out.node_id = len(self.nodes)
        out._tape = self
        self.nodes.append((out, parents, backward_fn))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self._tape: Optional[Tape] = None
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, tuple(parents), backward_fn)
    return out


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        if np.ndim(b) != 0:
            b = Tensor(b)
        else:
            a = as_tensor(a)
            c = float(b)
            return _make(a.data + c, (a,), lambda g: (g,))
    if not isinstance(a, Tensor):
        return add(b, a)
    _same_shape("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return add(a, -float(b))
    return add(a, neg(as_tensor(b)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(as_tensor(a), b)
    if not isinstance(a, Tensor) and np.ndim(a) == 0:
        return scale(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of size-1 axes to ``shape`` (ranks must agree)."""
    shape = tuple(shape)
    if a.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(a.shape, shape)):
        raise DimensionError(f"expand: cannot expand {list(a.shape)} to {list(shape)}")
    src = a.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_sum_to(g, src),))


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select ``a`` where the constant boolean ``cond`` holds, else ``b``."""
    _same_shape("where", a, b)
    cond = np.asarray(cond, dtype=bool)
    if cond.shape != a.shape:
        raise DimensionError(f"where: mask {list(cond.shape)} vs operands {list(a.shape)}")
    return _make(np.where(cond, a.data, b.data), (a, b),
                 lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split on sign so neither branch overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must be identical."""
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {list(a.shape)} and {list(b.shape)}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(ad @ bd, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w + b`` with ``x`` of shape [..., in], ``w`` [in, out], ``b`` [out]."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0] or (b is not None and b.shape != (w.shape[1],)):
        raise DimensionError(
            f"linear: input {list(x.shape)}, weight {list(w.shape)}"
            + (f", bias {list(b.shape)}" if b is not None else ""))
    xd, wd = x.data, w.data
    y = xd @ wd
    if b is not None:
        y = y + b.data
    lead = xd.shape[:-1]

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ wd.T).reshape(*lead, wd.shape[0])
        gw = xd.reshape(-1, wd.shape[0]).T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, backward)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: {list(src)} -> {list(shape)}") from exc
    return _make(out, (a,), lambda g: (g.reshape(src),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of an empty list")
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax):
            raise DimensionError(
                f"concat: shapes {list(tensors[0].shape)} and {list(t.shape)} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors,
                 lambda g: tuple(np.split(g, splits, axis=ax)))


def index(a: Tensor, key) -> Tensor:
    """NumPy-style indexing (basic or integer-array); gradients scatter back."""
    src = a.shape
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (int, np.integer, slice)) for k in parts)

    def backward(g):
        out = np.zeros(src, dtype=DTYPE)
        if basic:
            # basic indexing never repeats an element
            out[key] = g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(np.array(a.data[key], dtype=DTYPE), (a,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` gathered by integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding_lookup: table must be 2-D, got {list(table.shape)}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding_lookup: ids outside [0, {table.shape[0]})")
    n_rows, d = table.shape

    def backward(g):
        out = np.zeros((n_rows, d), dtype=DTYPE)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, d))
        return (out,)

    return _make(table.data[ids], (table,), backward)


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[i] for i in axes]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# normalisation and probabilities


def _check_finite(x: np.ndarray, op: str) -> None:
    if np.isnan(x).any():
        raise NumericError(f"{op}: NaN in input")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    _check_finite(x, "softmax")
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    _check_finite(x, "log_softmax")
    m = x.max(axis=axis, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), backward)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace positions where the constant ``mask`` is True by ``value``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        mask = np.broadcast_to(mask, a.shape)
    keep = ~mask
    return _make(np.where(mask, value, a.data), (a,), lambda g: (g * keep,))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    d = x.shape[-1]
    if d < 2 or gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: input {list(x.shape)}, gain {list(gain.shape)}, bias {list(bias.shape)}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data

    def backward(g):
        gh = g * gd
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return _make(out, (x, gain, bias), backward)


def dropout(a: Tensor, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity when not training or when ``p == 0``."""
    if not train or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability {p} outside [0, 1)")
    if rng is None:
        raise ContractError("dropout in training mode needs the session PRNG")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


def cross_entropy_label_smoothed(logits: Tensor, targets, eps_ls: float, pad_id: int) -> Tensor:
    """Mean label-smoothed cross-entropy over non-pad targets.

    The smoothed target puts ``1 - eps_ls`` on the gold id and spreads
    ``eps_ls`` uniformly over the whole vocabulary, so a uniform prediction
    costs exactly ``ln V``.
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != targets.size:
        raise DimensionError(
            f"cross_entropy: logits {list(logits.shape)} vs {targets.size} targets")
    if not 0.0 <= eps_ls < 1.0:
        raise ContractError(f"label smoothing {eps_ls} outside [0, 1)")
    x = logits.data
    _check_finite(x, "cross_entropy")
    n, v = x.shape
    m = x.max(axis=1, keepdims=True)
    z = x - m
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    q = np.full((n, v), eps_ls / v)
    q[np.arange(n), targets] += 1.0 - eps_ls
    live = (targets != pad_id).astype(DTYPE)
    n_live = max(live.sum(), 1.0)
    per_tok = -(q * logp).sum(axis=1)
    loss = float((per_tok * live).sum() / n_live)

    def backward(g):
        return ((np.exp(logp) - q) * (live / n_live)[:, None] * g,)

    return _make(np.asarray(loss), (logits,), backward)


# ---------------------------------------------------------------------------
# differentiation drivers


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Gradients add onto whatever a leaf already holds, so using a tensor twice
    (or calling backward twice) accumulates.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    tape = loss._tape
    if tape is None or loss.node_id is None:
        raise ContractError("loss was not recorded on a tape (no trainable inputs?)")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape, dtype=DTYPE)}
    for out, parents, fn in reversed(tape.nodes[: loss.node_id + 1]):
        g = grads.pop(out.node_id, None)
        if g is None:
            continue
        for parent, pg in zip(parents, fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._tape is tape and parent.node_id is not None:
                prev = grads.get(parent.node_id)
                grads[parent.node_id] = pg if prev is None else prev + pg
            else:
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
                      coords: Optional[Sequence[int]] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps ``x`` to a scalar tensor and must be deterministic.  ``coords``
    optionally restricts the comparison to a subset of flat indices.
    Relative error per coordinate is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    was = x.requires_grad
    x.requires_grad = True
    saved = x.grad
    x.grad = None
    try:
        with Tape():
            out = f(x)
            backward(out)
        analytic = np.zeros(x.shape) if x.grad is None else x.grad.copy()
    finally:
        x.grad = saved
        x.requires_grad = was

    base = x.data
    flat_idx = range(base.size) if coords is None else coords
    worst = 0.0
    for i in flat_idx:
        hi = base.copy()
        hi.reshape(-1)[i] += eps
        lo = base.copy()
        lo.reshape(-1)[i] -= eps
        x.data = hi
        f_hi = float(f(x).data)
        x.data = lo
        f_lo = float(f(x).data)
        x.data = base
        numeric = (f_hi - f_lo) / (2.0 * eps)
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
