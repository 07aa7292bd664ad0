"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: each operation returns a Node holding the forward value, a
same-shaped gradient buffer, its parent nodes, and a closure that pushes
gradients to those parents.  `backward` on a scalar-shaped root accumulates
d(root)/d(node) into every reachable node; fan-out accumulates additively.

The op set is the minimum needed to train the models in this package:
arithmetic, matmul, embedding lookup, tanh/sigmoid, row softmax, log,
clamp_min, dropout, reductions, concat/reshape, index picks, a gradient
reversal connector, and a fused recurrent scan backed by the kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward", "op")

    def __init__(self, value, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self._backward = backward
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def detach(self) -> "Node":
        """A leaf sharing this node's value but cut off from the graph."""
        return Node(self.value)

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.value.shape})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x, op="const")


def zero_grad(nodes) -> None:
    for n in nodes:
        n.grad[...] = 0.0


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into grad for every node reachable from root."""
    if root.value.shape != ():
        raise ShapeError(
            f"backward requires a scalar root, got shape {root.value.shape}"
        )
    topo: list[Node] = []
    visited: set[Node] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if node in visited:
            continue
        visited.add(node)
        stack.append((node, True))
        for parent in node.parents:
            if parent not in visited:
                stack.append((parent, False))
    root.grad[...] = root.grad + 1.0
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def _broadcast_shape(a: Node, b: Node, op: str):
    try:
        return np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeError(
            f"shape mismatch in {op}: {a.value.shape} vs {b.value.shape}"
        ) from None


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "add")

    def push(g):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad += _unbroadcast(g, b.value.shape)

    return Node(a.value + b.value, (a, b), push, "add")


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "sub")

    def push(g):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad -= _unbroadcast(g, b.value.shape)

    return Node(a.value - b.value, (a, b), push, "sub")


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "mul")

    def push(g):
        a.grad += _unbroadcast(g * b.value, a.value.shape)
        b.grad += _unbroadcast(g * a.value, b.value.shape)

    return Node(a.value * b.value, (a, b), push, "mul")


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "div")

    def push(g):
        a.grad += _unbroadcast(g / b.value, a.value.shape)
        b.grad -= _unbroadcast(g * a.value / (b.value * b.value), b.value.shape)

    return Node(a.value / b.value, (a, b), push, "div")


def neg(a) -> Node:
    a = as_node(a)

    def push(g):
        a.grad -= g

    return Node(-a.value, (a,), push, "neg")


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"shape mismatch in matmul: cannot multiply {a.value.shape} by {b.value.shape}"
        )

    def push(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    return Node(a.value @ b.value, (a, b), push, "matmul")


def embedding(table: Node, ids) -> Node:
    """Row lookup into an embedding table; gradients scatter-add by id."""
    ids = np.asarray(ids, dtype=np.intp)
    rows = table.value.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise ShapeError(f"embedding id out of range for table with {rows} rows")

    def push(g):
        np.add.at(table.grad, ids, g)

    return Node(table.value[ids], (table,), push, "embedding")


def tanh(a) -> Node:
    a = as_node(a)
    out_value = np.tanh(a.value)

    def push(g):
        a.grad += g * (1.0 - out_value * out_value)

    return Node(out_value, (a,), push, "tanh")


def sigmoid(a) -> Node:
    a = as_node(a)
    x = a.value
    out_value = np.empty_like(x)
    pos = x >= 0
    out_value[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_value[~pos] = ex / (1.0 + ex)

    def push(g):
        a.grad += g * out_value * (1.0 - out_value)

    return Node(out_value, (a,), push, "sigmoid")


def log(a) -> Node:
    a = as_node(a)
    if np.any(a.value <= 0.0):
        raise ValueError("log of a non-positive value; floor inputs first")

    def push(g):
        a.grad += g / a.value

    return Node(np.log(a.value), (a,), push, "log")


def softmax_rows(a) -> Node:
    """Softmax along the last axis of a 1-D or 2-D input."""
    a = as_node(a)
    if a.value.ndim not in (1, 2):
        raise ShapeError(f"softmax_rows expects 1-D or 2-D input, got {a.value.shape}")
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out_value = ex / ex.sum(axis=-1, keepdims=True)

    def push(g):
        inner = (g * out_value).sum(axis=-1, keepdims=True)
        a.grad += out_value * (g - inner)

    return Node(out_value, (a,), push, "softmax")


def clamp_min(a, floor: float) -> Node:
    a = as_node(a)
    mask = a.value >= floor

    def push(g):
        a.grad += g * mask

    return Node(np.maximum(a.value, floor), (a,), push, "clamp_min")


def dropout(a: Node, keep_prob: float, rng: np.random.Generator) -> Node:
    """Inverted-scaling dropout; keep_prob 1.0 is an exact no-op."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return a
    mask = (rng.random(a.value.shape) < keep_prob) / keep_prob

    def push(g):
        a.grad += g * mask

    return Node(a.value * mask, (a,), push, "dropout")


def reduce_sum(a, axis=None) -> Node:
    a = as_node(a)

    def push(g):
        if axis is None:
            a.grad += g
        else:
            a.grad += np.expand_dims(g, axis)

    return Node(a.value.sum(axis=axis), (a,), push, "sum")


def reduce_mean(a, axis=None) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else a.value.shape[axis]

    def push(g):
        if axis is None:
            a.grad += g / count
        else:
            a.grad += np.expand_dims(g, axis) / count

    return Node(a.value.mean(axis=axis), (a,), push, "mean")


def concat(nodes, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat of an empty node list")
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = [n.value.shape for n in nodes]
        raise ShapeError(f"shape mismatch in concat along axis {axis}: {shapes}") from None
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def push(g):
        for n, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            n.grad += g[tuple(sl)]

    return Node(value, tuple(nodes), push, "concat")


def reshape(a, shape) -> Node:
    a = as_node(a)
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(
            f"shape mismatch in reshape: {a.value.shape} to {shape}"
        ) from None

    def push(g):
        a.grad += g.reshape(a.value.shape)

    return Node(value, (a,), push, "reshape")


def pick(a: Node, row: int, col: int) -> Node:
    """Scalar element of a 2-D node."""
    if a.value.ndim != 2:
        raise ShapeError(f"pick expects a 2-D node, got {a.value.shape}")

    def push(g):
        a.grad[row, col] += g

    return Node(a.value[row, col], (a,), push, "pick")


def gather2d(a: Node, rows, cols) -> Node:
    """Element gather from a 2-D node: out[...] = a[rows[...], cols[...]]."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if a.value.ndim != 2 or rows.shape != cols.shape:
        raise ShapeError(
            f"gather2d needs a 2-D node and same-shaped index arrays, got "
            f"{a.value.shape}, {rows.shape}, {cols.shape}"
        )

    def push(g):
        np.add.at(a.grad, (rows.ravel(), cols.ravel()), g.ravel())

    return Node(a.value[rows, cols], (a,), push, "gather2d")


def reduce_prod(a: Node, axis: int = 0) -> Node:
    """Product along one axis of a 2-D node.

    The backward pass uses one-sided cumulative products, so zero entries
    stay differentiable (no division by the entries themselves).
    """
    if a.value.ndim != 2:
        raise ShapeError(f"reduce_prod expects a 2-D node, got {a.value.shape}")
    x = a.value if axis == 0 else a.value.T

    def push(g):
        n = x.shape[0]
        left = np.ones_like(x)
        right = np.ones_like(x)
        np.cumprod(x[:-1], axis=0, out=left[1:])
        np.cumprod(x[:0:-1], axis=0, out=right[-2::-1])
        contrib = left * right * (g if axis == 0 else g)
        a.grad += contrib if axis == 0 else contrib.T

    return Node(a.value.prod(axis=axis), (a,), push, "reduce_prod")


def take_per_row(a: Node, cols) -> Node:
    """One element per row of a 2-D node: out[i] = a[i, cols[i]]."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.value.shape[0])
    if cols.shape != rows.shape:
        raise ShapeError(
            f"take_per_row needs one column per row: {a.value.shape} vs {cols.shape}"
        )

    def push(g):
        np.add.at(a.grad, (rows, cols), g)

    return Node(a.value[rows, cols], (a,), push, "take_per_row")


def stack_scalars(nodes) -> Node:
    """Stack scalar nodes into a 1-D vector node."""
    nodes = [as_node(n) for n in nodes]
    for n in nodes:
        if n.value.shape != ():
            raise ShapeError(f"stack_scalars needs scalar nodes, got {n.value.shape}")

    def push(g):
        for i, n in enumerate(nodes):
            n.grad += g[i]

    return Node(np.array([n.value for n in nodes]), tuple(nodes), push, "stack")


@dataclass(frozen=True)
class GradReversalConfig:
    """Multiplier for the gradient reversal connector."""

    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"reversal strength must be non-negative, got {self.lam}")


def grad_reverse(a: Node, cfg: GradReversalConfig) -> Node:
    """Identity in the forward pass; scales the gradient by -lam going back."""

    def push(g):
        a.grad += -cfg.lam * g

    return Node(a.value, (a,), push, "grad_reverse")


def rnn_scan(xw: Node, wh: Node, b: Node, reverse: bool = False) -> Node:
    """Fused tanh recurrence h_t = tanh(xw_t + h_{t-1} @ wh + b), h_0 = 0.

    Forward and backward run in the selected kernel backend; `reverse` scans
    right-to-left (rows stay aligned with the input).
    """
    if xw.value.ndim != 2 or wh.value.ndim != 2 or b.value.ndim != 1:
        raise ShapeError(
            f"rnn_scan expects (T,h), (h,h), (h,) operands, got "
            f"{xw.value.shape}, {wh.value.shape}, {b.value.shape}"
        )
    width = xw.value.shape[1]
    if wh.value.shape != (width, width) or b.value.shape != (width,):
        raise ShapeError(
            f"rnn_scan width mismatch: {xw.value.shape}, {wh.value.shape}, {b.value.shape}"
        )
    x_in = np.ascontiguousarray(xw.value[::-1] if reverse else xw.value)
    hidden = kernels.rnn_forward(x_in, wh.value, b.value)
    out_value = hidden[::-1].copy() if reverse else hidden

    def push(g):
        d_hidden = np.ascontiguousarray(g[::-1] if reverse else g)
        d_xw, d_wh, d_b = kernels.rnn_backward(x_in, wh.value, hidden, d_hidden)
        xw.grad += d_xw[::-1] if reverse else d_xw
        wh.grad += d_wh
        b.grad += d_b

    return Node(out_value, (xw, wh, b), push, "rnn_scan")
