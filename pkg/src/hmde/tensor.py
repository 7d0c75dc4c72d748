"""Reverse-mode automatic differentiation over float32 numpy arrays.

Every operation returns a new :class:`Tensor`. When at least one input
requires a gradient (and recording is enabled), the output keeps references
to its inputs plus a backward rule mapping the output gradient to one
gradient per input. ``Tensor.backward`` walks that graph in reverse
topological order.

Gradients accumulate into leaf tensors across ``backward`` calls until they
are cleared explicitly, which is what gradient accumulation relies on.
Reductions accumulate in float64 and cast back to float32.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

DTYPE = np.float32

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_recording = True


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateVectorError(ValueError):
    """A vector with zero norm was passed where a direction is required."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


def is_recording() -> bool:
    return _recording


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable | None = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- autodiff ---------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient.

        ``self`` must be a scalar. Calling this twice on the same graph adds the
        gradient twice; leaves are only cleared by ``zero_grad``.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.astype(DTYPE) if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators --------------------------------------------------------
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
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _recording and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)), dtype=np.float64)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=np.float64)
    return g.astype(DTYPE).reshape(shape)


# -- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- shape manipulation ----------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x: Tensor, index) -> Tensor:
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# -- reductions ------------------------------------------------------------


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(DTYPE)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(DTYPE),)

    return _make(out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / count)


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


# -- nonlinearities and normalisation ----------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; a slice entirely at -inf is undefined."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted.astype(np.float64))
    out = (e / e.sum(axis=axis, keepdims=True)).astype(DTYPE)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64)
        return ((out * (g - dot)).astype(DTYPE),)

    return _make(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x64 = x.data.astype(np.float64)
    shifted = x64 - x64.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        total = g.sum(axis=axis, keepdims=True, dtype=np.float64)
        return ((g - probs * total).astype(DTYPE),)

    return _make(out.astype(DTYPE), (x,), backward)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    x64 = x.data.astype(np.float64)
    m = x64.max(axis=axis, keepdims=True)
    e = np.exp(x64 - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    weights = e / s

    def backward(g):
        return ((np.expand_dims(g, axis) * weights).astype(DTYPE),)

    return _make(out.astype(DTYPE), (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Standardise the last axis (biased variance), then scale and shift."""
    n = x.shape[-1]
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    centred = x64 - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        g64 = g.astype(np.float64)
        g_gamma = _unbroadcast((g64 * xhat).astype(DTYPE), gamma.shape)
        g_beta = _unbroadcast(g, beta.shape)
        gx_hat = g64 * gamma.data
        gx = inv_std * (
            gx_hat
            - gx_hat.sum(axis=-1, keepdims=True) / n
            - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True) / n
        )
        return gx.astype(DTYPE), g_gamma, g_beta

    return _make(out.astype(DTYPE), (as_tensor(x), as_tensor(gamma), as_tensor(beta)), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, 0.5 * x * (1 + erf(x / sqrt 2))."""
    x64 = x.data.astype(np.float64)
    cdf = 0.5 * (1.0 + erf(x64 * _SQRT_HALF))
    out = x64 * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x64 * x64)
        return ((g * (cdf + x64 * pdf)).astype(DTYPE),)

    return _make(out.astype(DTYPE), (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p).astype(DTYPE) / DTYPE(1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``weight`` at integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        full = np.zeros(weight.shape, dtype=np.float64)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        return (full.astype(DTYPE),)

    return _make(weight.data[ids], (weight,), backward)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of ``x[b, t, :]`` over positions with ``mask[b, t]`` true."""
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("masked_mean: a row has no unmasked positions")
    weights = (mask / counts[:, None]).astype(DTYPE)[:, :, None]
    return sum_(x * Tensor(weights), axis=1)


# -- similarity and losses -----------------------------------------------------


def _row_norms(m: np.ndarray, what: str) -> np.ndarray:
    norms = np.sqrt((m.astype(np.float64) ** 2).sum(axis=-1))
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateVectorError(f"{what} row {int(bad[0])} has zero norm")
    return norms


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarities between rows of ``a`` [N, h] and ``b`` [M, h]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_matrix: incompatible shapes {a.shape} and {b.shape}")
    na = _row_norms(a.data, "left")
    nb = _row_norms(b.data, "right")
    ua = a.data.astype(np.float64) / na[:, None]
    ub = b.data.astype(np.float64) / nb[:, None]
    sim = ua @ ub.T

    def backward(g):
        g64 = g.astype(np.float64)
        # d cos / d a_i = (ub_j - cos_ij * ua_i) / |a_i|
        ga = (g64 @ ub - (g64 * sim).sum(axis=1)[:, None] * ua) / na[:, None]
        gb = (g64.T @ ua - (g64 * sim).sum(axis=0)[:, None] * ub) / nb[:, None]
        return ga.astype(DTYPE), gb.astype(DTYPE)

    return _make(sim.astype(DTYPE), (a, b), backward)


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """Cosine of two vectors as a 0-d tensor; differentiable in both."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"cosine_similarity: expected equal 1-d shapes, got {u.shape} and {v.shape}")
    return reshape(cosine_matrix(reshape(u, (1, -1)), reshape(v, (1, -1))), ())


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"cross_entropy: {batch} logit rows but {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= classes):
        raise IndexError(f"cross_entropy: labels must lie in [0, {classes}), got {labels.tolist()}")
    logp = log_softmax(logits, axis=-1)
    picked = getitem(logp, (np.arange(batch), labels))
    return -mean(picked)


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return math.sqrt(total)
