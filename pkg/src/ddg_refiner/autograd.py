# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Minimal reverse-mode differentiation on float64 numpy arrays.

Every operation returns a new ``Tensor``. When at least one operand is
tracked and recording is enabled, the result remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward``
walks that graph once, in reverse topological order, and accumulates
gradients into tracked leaves.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
import logging
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from .exceptions import GraphError, ShapeError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
BackwardFn = Callable[[Array], Sequence[Array | None]]

_recording: ContextVar[bool] = ContextVar("ddg_refiner_recording", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (per thread/context)."""
    token = _recording.set(False)
    try:
        yield
    finally:
        _recording.reset(token)


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot."""

    __slots__ = (
        "_backward",
        "_parents",
        "_released",
        "grad",
        "name",
        "op",
        "requires_grad",
        "values",
    )

    # Let numpy defer to the reflected Tensor operators.
    __array_ufunc__ = None

    def __init__(
        self,
        values: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        self.values: Array = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._released = False

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} op={self.op}>"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> Array:
        """Copy of the values."""
        return self.values.copy()

    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        if isinstance(index, (int, np.integer)):
            return reshape(take(self, np.array([index]), axis=0), self.shape[1:])
        return take(self, np.asarray(index, dtype=np.int64), axis=0)


def as_tensor(x: Tensor | ArrayLike) -> Tensor:
    """Wrap constants; tensors pass through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def detach(t: Tensor) -> Tensor:
    """Value-identical copy that is excluded from graph recording."""
    out = Tensor(t.values.copy(), requires_grad=False, name=t.name)
    out.op = "detach"
    return out


def _make(
    values: Array,
    parents: Sequence[Tensor],
    backward: BackwardFn,
    op: str,
) -> Tensor:
    out = Tensor(values)
    out.op = op
    if _recording.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError as e:
        raise ShapeError(op, a.shape, b.shape) from e


# --------------------------------------------------------------------------
# Elementwise arithmetic
# --------------------------------------------------------------------------


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g: Array) -> tuple[Array, Array]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.values + b.values, (a, b), backward, "add")


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g: Array) -> tuple[Array, Array]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.values - b.values, (a, b), backward, "sub")


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g: Array) -> tuple[Array, Array]:
        return (
            _unbroadcast(g * b.values, a.shape),
            _unbroadcast(g * a.values, b.shape),
        )

    return _make(a.values * b.values, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor | ArrayLike) -> Tensor:
    """Matrix product of two 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g: Array) -> tuple[Array, Array]:
        return g @ b.values.T, a.values.T @ g

    return _make(a.values @ b.values, (a, b), backward, "matmul")


# --------------------------------------------------------------------------
# Nonlinearities
# --------------------------------------------------------------------------


def silu(x: Tensor) -> Tensor:
    s = expit(x.values)

    def backward(g: Array) -> tuple[Array]:
        return (g * (s + x.values * s * (1.0 - s)),)

    return _make(x.values * s, (x,), backward, "silu")


def relu(x: Tensor) -> Tensor:
    def backward(g: Array) -> tuple[Array]:
        return (g * (x.values > 0.0),)

    return _make(np.maximum(x.values, 0.0), (x,), backward, "relu")


def softplus(x: Tensor) -> Tensor:
    def backward(g: Array) -> tuple[Array]:
        return (g * expit(x.values),)

    return _make(np.logaddexp(0.0, x.values), (x,), backward, "softplus")


def log1p(x: Tensor) -> Tensor:
    if np.any(x.values <= -1.0):
        msg = "log1p needs inputs greater than -1"
        raise ValueError(msg)

    def backward(g: Array) -> tuple[Array]:
        return (g / (1.0 + x.values),)

    return _make(np.log1p(x.values), (x,), backward, "log1p")


def huber(x: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise Huber: ½x² for |x| ≤ δ, δ(|x| − ½δ) beyond."""
    ax = np.abs(x.values)
    inside = ax <= delta
    values = np.where(inside, 0.5 * x.values**2, delta * (ax - 0.5 * delta))

    def backward(g: Array) -> tuple[Array]:
        return (g * np.where(inside, x.values, delta * np.sign(x.values)),)

    return _make(values, (x,), backward, "huber")


def norm(x: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at zero is taken as 0."""
    n = np.sqrt(np.sum(x.values**2, axis=axis))

    def backward(g: Array) -> tuple[Array]:
        safe = np.where(n > 0.0, n, 1.0)
        scale = np.where(n > 0.0, g / safe, 0.0)
        return (np.expand_dims(scale, axis) * x.values,)

    return _make(n, (x,), backward, "norm")


# --------------------------------------------------------------------------
# Reductions and inner products
# --------------------------------------------------------------------------


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g: Array) -> tuple[Array]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(
        np.sum(x.values, axis=axis, keepdims=keepdims), (x,), backward, "sum"
    )


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise ShapeError("mean", x.shape)
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equally shaped 1-D tensors."""
    if a.values.ndim != 1 or a.shape != b.shape:
        raise ShapeError("dot", a.shape, b.shape)
    return sum(mul(a, b))


def sq_norm(x: Tensor, axis: int | None = None) -> Tensor:
    """Sum of squares (over ``axis`` or everything)."""
    return sum(mul(x, x), axis=axis)


def trace(x: Tensor) -> Tensor:
    if x.values.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeError("trace", x.shape)
    eye = np.eye(x.shape[0])

    def backward(g: Array) -> tuple[Array]:
        return (g * eye,)

    return _make(np.array(np.trace(x.values)), (x,), backward, "trace")


# --------------------------------------------------------------------------
# Shape manipulation and indexing
# --------------------------------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        values = x.values.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError("reshape", x.shape, tuple(shape)) from e

    def backward(g: Array) -> tuple[Array]:
        return (g.reshape(x.shape),)

    return _make(values, (x,), backward, "reshape")


def concat(tensors: Sequence[Tensor | ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        values = np.concatenate([p.values for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError("concat", *(p.shape for p in parts)) from e
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g: Array) -> list[Array]:
        return list(np.split(g, bounds, axis=axis))

    return _make(values, parts, backward, "concat")


def take(x: Tensor, index: NDArray[np.int64], axis: int = 0) -> Tensor:
    """Gather entries along ``axis`` by a 1-D integer index (repeats allowed)."""
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ShapeError("take", x.shape, index.shape)

    def backward(g: Array) -> tuple[Array]:
        gx = np.zeros_like(x.values)
        np.add.at(np.moveaxis(gx, axis, 0), index, np.moveaxis(g, axis, 0))
        return (gx,)

    return _make(np.take(x.values, index, axis=axis), (x,), backward, "take")


def segment_sum(x: Tensor, segment: NDArray[np.int64], n_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``n_segments`` buckets: out[s] = Σ x[segment==s]."""
    segment = np.asarray(segment, dtype=np.int64)
    if segment.shape != (x.shape[0],):
        raise ShapeError("segment_sum", x.shape, segment.shape)
    out = np.zeros((n_segments, *x.shape[1:]))
    np.add.at(out, segment, x.values)

    def backward(g: Array) -> tuple[Array]:
        return (g[segment],)

    return _make(out, (x,), backward, "segment_sum")


def index_update(
    base: Tensor, index: NDArray[np.int64], values: Tensor
) -> Tensor:
    """Copy of ``base`` with rows ``index`` replaced by ``values``."""
    index = np.asarray(index, dtype=np.int64)
    if values.shape != (len(index), *base.shape[1:]):
        raise ShapeError("index_update", base.shape, values.shape)
    out = base.values.copy()
    out[index] = values.values

    def backward(g: Array) -> tuple[Array, Array]:
        gb = g.copy()
        gb[index] = 0.0
        return gb, g[index]

    return _make(out, (base, values), backward, "index_update")


# --------------------------------------------------------------------------
# Symmetric 3x3 matrices stored row-major as 9 columns
# --------------------------------------------------------------------------

TRANSPOSE_3X3 = np.array([0, 3, 6, 1, 4, 7, 2, 5, 8])
DIAGONAL_3X3 = np.array([0, 4, 8])


def psd_clamp(x: Tensor) -> Tensor:
    """Project each flattened 3x3 symmetric matrix onto the PSD cone.

    Matrices without negative eigenvalues pass through untouched. For the
    others the eigenvalues are clamped at zero; the gradient uses the
    divided-difference (Daleckii-Krein) form of the spectral function.
    """
    mats = x.values.reshape(-1, 3, 3)
    eigvals, eigvecs = np.linalg.eigh(mats)
    clamp = eigvals[:, 0] < 0.0
    out = mats.copy()
    if np.any(clamp):
        w, v = eigvals[clamp], eigvecs[clamp]
        out[clamp] = np.einsum("bij,bj,bkj->bik", v, np.clip(w, 0.0, None), v)

    def backward(g: Array) -> tuple[Array]:
        gm = g.reshape(-1, 3, 3).copy()
        if np.any(clamp):
            w, v = eigvals[clamp], eigvecs[clamp]
            fw = np.clip(w, 0.0, None)
            dw = w[:, :, None] - w[:, None, :]
            df = fw[:, :, None] - fw[:, None, :]
            same = np.abs(dw) < 1e-12
            slope = (w > 0.0).astype(np.float64)
            ratio = np.where(
                same,
                np.broadcast_to(slope[:, :, None], dw.shape),
                df / np.where(same, 1.0, dw),
            )
            gs = gm[clamp]
            gs = 0.5 * (gs + np.swapaxes(gs, 1, 2))
            inner = np.einsum("bji,bjk,bkl->bil", v, gs, v)
            gm[clamp] = np.einsum("bij,bjk,blk->bil", v, ratio * inner, v)
        return (gm.reshape(x.shape),)

    return _make(out.reshape(x.shape), (x,), backward, "psd_clamp")


# --------------------------------------------------------------------------
# Backward pass
# --------------------------------------------------------------------------


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every tracked leaf with ∂loss/∂leaf.

    Gradients accumulate into leaves that already hold one. The graph is
    released afterwards; calling ``backward`` on the same loss again is an
    error.
    """
    if loss._released:
        msg = "backward() already ran on this graph; rebuild the loss first"
        raise GraphError(msg)
    if not loss.requires_grad:
        msg = "backward() needs a loss that depends on tracked tensors"
        raise GraphError(msg)
    if loss.size != 1:
        raise ShapeError("backward", loss.shape)

    order = _topological_order(loss)
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g), strict=True):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None
            node._released = True
    loss._released = True
    logger.debug(f"backward: visited {len(order)} nodes")


def zero_grad(params: Iterator[Tensor] | Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# --------------------------------------------------------------------------
# Finite-difference verification
# --------------------------------------------------------------------------

FD_STEP = 1e-5
FD_FLOOR = 1e-6


def numerical_gradient(
    fn: Callable[[], Tensor],
    param: Tensor,
    h: float = FD_STEP,
    indices: Array | None = None,
) -> Array:
    """Central finite differences of a scalar ``fn()`` w.r.t. ``param``.

    ``param.values`` is perturbed in place and restored after each difference.
    With ``indices`` only those flat entries are differenced and a 1-D
    array in the same order is returned; otherwise the full gradient.
    """
    flat = param.values.reshape(-1)
    picks = np.arange(flat.size) if indices is None else np.asarray(indices)
    out = np.empty(len(picks))
    with no_grad():
        for slot, k in enumerate(picks):
            orig = flat[k]
            flat[k] = orig + h
            plus = fn().item()
            flat[k] = orig - h
            minus = fn().item()
            flat[k] = orig
            out[slot] = (plus - minus) / (2.0 * h)
    return out.reshape(param.values.shape) if indices is None else out


def relative_error(analytic: Array, numeric: Array, floor: float = FD_FLOOR) -> float:
    """Max elementwise |a − n| / max(|a|, |n|, floor)."""
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def gradient_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = FD_STEP,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = FD_FLOOR,
) -> float:
    """Max relative error between backward and finite differences.

    When ``max_entries`` is given, only that many randomly chosen entries of
    each parameter are differenced. Gradients smaller than ``floor`` are compared
    in absolute terms.
    """
    for p in params:
        p.zero_grad()
    backward(fn())
    worst = 0.0
    rng = np.random.default_rng(seed)
    for p in params:
        analytic = np.zeros_like(p.values) if p.grad is None else p.grad
        picks = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            picks = rng.choice(p.size, size=max_entries, replace=False)
        numeric = numerical_gradient(fn, p, h, picks)
        worst = max(worst, relative_error(analytic.reshape(-1)[picks], numeric, floor))
        logger.debug(f"gradient_check {p.name or p.shape}: running max {worst:.3e}")
    return worst
