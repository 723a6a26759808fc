"""Minimal dense-tensor engine with reverse-mode derivative tracking.

Tensors wrap float64 numpy arrays and record a tape of parent links plus
backward closures; ``backward()`` walks the tape in reverse topological
order. Every op output is checked for NaN/Inf. The op set is exactly what
the relation-attention model needs: linear maps, concatenation, masked
softmax, elementwise nonlinearities, reductions, and embedding gathers.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

FINITE_CHECKS = True


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf."""


class MaskedSoftmaxError(ValueError):
    """A softmax row had every entry masked."""


def _check_finite(data: np.ndarray, op: str) -> None:
    if not FINITE_CHECKS:
        return
    # the sum propagates NaN/Inf in one pass without a bool temporary
    if not np.isfinite(data.sum()) and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse broadcast dimensions of ``grad`` back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, name or "tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
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

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray, owned: bool = False) -> None:
        """Add ``grad`` into this node's gradient.

        ``owned`` marks arrays freshly allocated by the caller (never
        views or shared buffers), which can be adopted without a copy.
        """
        summed = _sum_to_shape(np.asarray(grad, dtype=np.float64), self.shape)
        if self.grad is None:
            if summed is not grad:
                self.grad = summed  # reductions allocate fresh arrays
            elif owned and grad.base is None and grad.flags.owndata:
                self.grad = grad
            else:
                self.grad = summed.copy()
        else:
            self.grad += summed

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse-mode sweep from this node (typically a scalar loss)."""
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _check_finite(data, op)
    requires = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=requires,
        _parents=tuple(p for p in parents if p.requires_grad),
        _backward=backward if requires else None,
        name=op,
    )


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(grad)
        if b.requires_grad:
            b.accumulate(grad)

    return _make(out_data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(grad)
        if b.requires_grad:
            b.accumulate(-grad, owned=True)

    return _make(out_data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(grad * b.data, owned=True)
        if b.requires_grad:
            b.accumulate(grad * a.data, owned=True)

    return _make(out_data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(grad / b.data, owned=True)
        if b.requires_grad:
            b.accumulate(-grad * a.data / (b.data * b.data), owned=True)

    return _make(out_data, (a, b), backward, "div")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data * factor

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * factor, owned=True)

    return _make(out_data, (a,), backward, "scale")


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product; leading dimensions broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")
    out_data = np.matmul(a.data, b.data)

    def backward(grad: np.ndarray) -> None:
        # 2-D weight operands get single flat GEMMs instead of batched
        # products followed by large reductions
        if a.requires_grad:
            if b.ndim == 2 and grad.ndim > 2:
                flat = grad.reshape(-1, grad.shape[-1]) @ b.data.T
                flat.shape = a.shape  # in-place reshape keeps ownership
                a.accumulate(flat, owned=True)
            else:
                a.accumulate(np.matmul(grad, np.swapaxes(b.data, -1, -2)), owned=True)
        if b.requires_grad:
            if b.ndim == 2 and grad.ndim > 2 and a.ndim == grad.ndim:
                a_flat = a.data.reshape(-1, a.data.shape[-1])
                g_flat = grad.reshape(-1, grad.shape[-1])
                b.accumulate(a_flat.T @ g_flat, owned=True)
            else:
                b.accumulate(np.matmul(np.swapaxes(a.data, -1, -2), grad), owned=True)

    return _make(out_data, (a, b), backward, "matmul")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(grad: np.ndarray) -> None:
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * grad.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(grad[tuple(idx)])

    return _make(out_data, tuple(ts), backward, "concat")


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad.reshape(a.shape))

    return _make(out_data, (a,), backward, "reshape")


def moveaxis(a, source: int, destination: int) -> Tensor:
    a = as_tensor(a)
    out_data = np.moveaxis(a.data, source, destination)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(np.moveaxis(grad, destination, source))

    return _make(out_data, (a,), backward, "moveaxis")


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    out_data = np.swapaxes(a.data, axis1, axis2)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(np.swapaxes(grad, axis1, axis2))

    return _make(out_data, (a,), backward, "swapaxes")


def sum_along(a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad: np.ndarray) -> None:
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.shape))

    return _make(out_data, (a,), backward, "sum")


def mean_along(a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum_along(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # the finite check is the guard
        out_data = np.exp(a.data)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * out_data, owned=True)

    return _make(out_data, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad / a.data, owned=True)

    return _make(out_data, (a,), backward, "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * (1.0 - out_data * out_data), owned=True)

    return _make(out_data, (a,), backward, "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-a.data)),
                        np.exp(a.data) / (1.0 + np.exp(a.data)))

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * out_data * (1.0 - out_data), owned=True)

    return _make(out_data, (a,), backward, "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * (a.data > 0), owned=True)

    return _make(out_data, (a,), backward, "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    out_data = np.where(a.data > 0, a.data, slope * a.data)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad * np.where(a.data > 0, 1.0, slope), owned=True)

    return _make(out_data, (a,), backward, "leaky_relu")


# ---------------------------------------------------------------------------
# softmax, losses, gathers
# ---------------------------------------------------------------------------


def masked_softmax(logits, mask, axis: int = -1, allow_empty: bool = False) -> Tensor:
    """Softmax over unmasked entries; masked entries are exactly zero.

    ``mask`` is a constant array broadcastable to the logits (nonzero =
    keep). Rows with every entry masked raise unless ``allow_empty``, in
    which case they come out as all-zero rows.
    """
    logits = as_tensor(logits)
    mask_arr = (np.broadcast_to(np.asarray(mask), logits.shape) != 0)
    any_live = mask_arr.any(axis=axis, keepdims=True)
    if not allow_empty and not any_live.all():
        raise MaskedSoftmaxError("softmax row with all entries masked")
    shifted = np.where(mask_arr, logits.data, -np.inf)
    row_max = np.max(shifted, axis=axis, keepdims=True)
    row_max = np.where(any_live, row_max, 0.0)
    # masked lanes exponentiate 0 (then get zeroed) so no overflow warnings
    safe = np.where(mask_arr, logits.data, row_max) - row_max
    e = np.where(mask_arr, np.exp(safe), 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    out_data = e / np.where(denom == 0.0, 1.0, denom)

    def backward(grad: np.ndarray) -> None:
        inner = (grad * out_data).sum(axis=axis, keepdims=True)
        logits.accumulate(out_data * (grad - inner), owned=True)

    return _make(out_data, (logits,), backward, "masked_softmax")


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross-entropy on logits (numerically stable)."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    z = logits.data
    out_data = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))

    def backward(grad: np.ndarray) -> None:
        s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
        logits.accumulate(grad * (s - t), owned=True)

    return _make(out_data, (logits,), backward, "bce_with_logits")


def gather_rows(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient (embeddings)."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    out_data = table.data[idx]

    def backward(grad: np.ndarray) -> None:
        acc = np.zeros_like(table.data)
        np.add.at(acc, idx, grad)
        table.accumulate(acc, owned=True)

    return _make(out_data, (table,), backward, "gather_rows")
