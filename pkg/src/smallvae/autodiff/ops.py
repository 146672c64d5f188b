"""Differentiable primitives.

Broadcasting is limited to rank-0 operands: an elementwise op accepts two
equal shapes, or one scalar (a Python number or a rank-0 node).
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DomainError, ShapeError
from .graph import Graph, Node

Operand = Union[Node, float, int]


def _operands(a: Operand, b: Operand, op: str) -> Tuple[Graph, Node, Node]:
    if isinstance(a, Node):
        graph, dtype = a.graph, a.dtype
    elif isinstance(b, Node):
        graph, dtype = b.graph, b.dtype
    else:
        raise TypeError(f"{op}: at least one operand must be a Node")
    if not isinstance(a, Node):
        a = graph.constant(a, dtype=dtype)
    if not isinstance(b, Node):
        b = graph.constant(b, dtype=dtype)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return graph, a, b


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    # only rank-0 operands are ever broadcast
    return np.asarray(grad.sum(), dtype=grad.dtype)


def _first_index(mask: np.ndarray) -> tuple:
    flat = int(np.flatnonzero(mask)[0])
    return np.unravel_index(flat, mask.shape) if mask.ndim else ()


def add(a: Operand, b: Operand) -> Node:
    graph, a, b = _operands(a, b, "add")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return graph.record("add", (a, b), a.value + b.value, grad_fn)


def sub(a: Operand, b: Operand) -> Node:
    graph, a, b = _operands(a, b, "sub")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return graph.record("sub", (a, b), a.value - b.value, grad_fn)


def mul(a: Operand, b: Operand) -> Node:
    graph, a, b = _operands(a, b, "mul")

    def grad_fn(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return graph.record("mul", (a, b), a.value * b.value, grad_fn)


def div(a: Operand, b: Operand) -> Node:
    graph, a, b = _operands(a, b, "div")
    zero = b.value == 0
    if zero.any():
        raise DomainError("div", _first_index(zero), "division by zero")

    def grad_fn(g):
        return (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
        )

    return graph.record("div", (a, b), a.value / b.value, grad_fn)


def neg(a: Node) -> Node:
    return a.graph.record("neg", (a,), -a.value, lambda g: (-g,))


def exp(a: Node) -> Node:
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return a.graph.record("exp", (a,), out, lambda g: (g * out,))


def log(a: Node) -> Node:
    bad = ~(a.value > 0)
    if bad.any():
        raise DomainError("log", _first_index(bad), "non-positive argument")
    return a.graph.record("log", (a,), np.log(a.value), lambda g: (g / a.value,))


def square(a: Node) -> Node:
    return a.graph.record("square", (a,), a.value * a.value, lambda g: (2 * a.value * g,))


def relu(a: Node) -> Node:
    # subgradient at 0 is 0
    mask = a.value > 0
    out = np.where(mask, a.value, 0).astype(a.dtype, copy=False)
    return a.graph.record("relu", (a,), out, lambda g: (g * mask,))


def sigmoid(a: Node) -> Node:
    e = np.exp(-np.abs(a.value))
    out = np.where(a.value >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype, copy=False)
    return a.graph.record("sigmoid", (a,), out, lambda g: (g * out * (1 - out),))


def softplus(a: Node) -> Node:
    """log(1 + e^a) in the overflow-free form max(a, 0) + log1p(e^-|a|)."""
    out = (np.maximum(a.value, 0) + np.log1p(np.exp(-np.abs(a.value)))).astype(a.dtype, copy=False)
    e = np.exp(-np.abs(a.value))
    sig = np.where(a.value >= 0, 1 / (1 + e), e / (1 + e))
    return a.graph.record("softplus", (a,), out, lambda g: (g * sig,))


def clamp(a: Node, lo: float, hi: float) -> Node:
    inside = (a.value >= lo) & (a.value <= hi)
    out = np.clip(a.value, lo, hi).astype(a.dtype, copy=False)
    return a.graph.record("clamp", (a,), out, lambda g: (g * inside,))


def matmul(a: Node, b: Node) -> Node:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def grad_fn(g):
        return g @ b.value.T, a.value.T @ g

    return a.graph.record("matmul", (a, b), a.value @ b.value, grad_fn)


def transpose(a: Node) -> Node:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D operand, got {a.shape}")
    return a.graph.record("transpose", (a,), a.value.T, lambda g: (g.T,))


def reshape(a: Node, shape: Sequence[int]) -> Node:
    out = a.value.reshape(tuple(shape))
    return a.graph.record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def _normalize_axes(axes, ndim: int, op: str) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise ShapeError(f"{op}: invalid axis {axis} for rank {ndim}")
        normalized.append(axis % ndim)
    if len(set(normalized)) != len(normalized):
        raise ShapeError(f"{op}: repeated axis in {tuple(axes)}")
    return tuple(sorted(normalized))


def _expand_back(g: np.ndarray, axes: Tuple[int, ...], shape: tuple) -> np.ndarray:
    return np.broadcast_to(np.expand_dims(g, axes), shape).copy()


def reduce_sum(a: Node, axes=None) -> Node:
    axes = _normalize_axes(axes, a.ndim, "reduce_sum")
    out = np.asarray(a.value.sum(axis=axes), dtype=a.dtype)
    return a.graph.record("reduce_sum", (a,), out, lambda g: (_expand_back(g, axes, a.shape),))


def reduce_mean(a: Node, axes=None) -> Node:
    axes = _normalize_axes(axes, a.ndim, "reduce_mean")
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    out = np.asarray(a.value.mean(axis=axes), dtype=a.dtype)

    def grad_fn(g):
        return (_expand_back(g, axes, a.shape) / count,)

    return a.graph.record("reduce_mean", (a,), out, grad_fn)


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    if not nodes:
        raise ShapeError("concat: no operands")
    if len(nodes) == 1:
        return nodes[0]
    ndim = nodes[0].ndim
    axis = axis % ndim
    for node in nodes[1:]:
        rest = [d for i, d in enumerate(node.shape) if i != axis]
        first = [d for i, d in enumerate(nodes[0].shape) if i != axis]
        if node.ndim != ndim or rest != first:
            raise ShapeError(f"concat: incompatible shapes {nodes[0].shape} and {node.shape} on axis {axis}")
    sizes = [node.shape[axis] for node in nodes]
    cuts = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return [np.ascontiguousarray(part) for part in np.split(g, cuts, axis=axis)]

    out = np.concatenate([node.value for node in nodes], axis=axis)
    return nodes[0].graph.record("concat", tuple(nodes), out, grad_fn)


def tile_rows(b: Node, rows: int) -> Node:
    """Stack a 1-D node into `rows` identical rows."""
    if b.ndim != 1:
        raise ShapeError(f"tile_rows: expected 1-D operand, got {b.shape}")
    out = np.tile(b.value, (rows, 1))
    return b.graph.record("tile_rows", (b,), out, lambda g: (g.sum(axis=0),))


def log_softmax(a: Node) -> Node:
    """Row-wise log-softmax of a 2-D node via the log-sum-exp shift."""
    if a.ndim != 2:
        raise ShapeError(f"log_softmax: expected 2-D operand, got {a.shape}")
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    softmax = np.exp(out)

    def grad_fn(g):
        return (g - softmax * g.sum(axis=1, keepdims=True),)

    return a.graph.record("log_softmax", (a,), out, grad_fn)


def conv2d(
    x: Node,
    weight: Node,
    bias: Node,
    stride: int = 1,
    padding: int = 0,
    name: Optional[str] = None,
) -> Node:
    """Cross-correlation of a B×C×H×W batch with an O×C×kH×kW kernel, plus bias."""
    label = name or "conv2d"
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"{label}: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    batch, channels, height, width = x.shape
    out_channels, in_channels, kh, kw = weight.shape
    if channels != in_channels:
        raise ShapeError(f"{label}: input has {channels} channels, weight expects {in_channels}")
    if bias.shape != (out_channels,):
        raise ShapeError(f"{label}: bias shape {bias.shape} != ({out_channels},)")
    hp, wp = height + 2 * padding, width + 2 * padding
    if hp < kh or wp < kw:
        raise ShapeError(f"{label}: padded input {hp}x{wp} smaller than kernel {kh}x{kw}")

    xp = np.pad(x.value, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.value
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.value, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out + bias.value[None, :, None, None])

    def grad_fn(g):
        grad_bias = g.sum(axis=(0, 2, 3))
        grad_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        cols = np.tensordot(g, weight.value, axes=([1], [0]))  # B×Ho×Wo×C×kH×kW
        grad_xp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += cols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        grad_x = grad_xp[:, :, padding : padding + height, padding : padding + width] if padding else grad_xp
        return np.ascontiguousarray(grad_x), grad_weight, grad_bias

    return x.graph.record(label, (x, weight, bias), out, grad_fn)


def resize_nearest(x: Node, target: Tuple[int, int]) -> Node:
    """Nearest-neighbour resize of a B×C×H×W node with src = floor(dst·H/H')."""
    if x.ndim != 4:
        raise ShapeError(f"resize_nearest: expected 4-D input, got {x.shape}")
    out_h, out_w = int(target[0]), int(target[1])
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize_nearest: target {target} must be at least 1x1")
    height, width = x.shape[2], x.shape[3]
    if (out_h, out_w) == (height, width):
        return x
    rows = ((np.arange(out_h) * height) // out_h)[:, None]
    cols = ((np.arange(out_w) * width) // out_w)[None, :]
    out = np.ascontiguousarray(x.value[:, :, rows, cols])

    def grad_fn(g):
        grad_x = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(grad_x, (slice(None), slice(None), rows, cols), g)
        return (grad_x,)

    return x.graph.record("resize_nearest", (x,), out, grad_fn)
