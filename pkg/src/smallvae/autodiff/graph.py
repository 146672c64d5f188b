"""Computation graph, parameters and the reverse-mode sweep."""

import hashlib
import logging
from collections import Counter
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from ..errors import GradientError, NonFiniteError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def check_finite(op: str, value: np.ndarray) -> None:
    """Raise NonFiniteError naming the first NaN/Inf element of value.

    Args:
        op: Operation name reported in the error
        value: Array to inspect
    """
    if not np.isfinite(value).all():
        flat = int(np.flatnonzero(~np.isfinite(value))[0])
        index = np.unravel_index(flat, value.shape) if value.ndim else ()
        raise NonFiniteError(op, index)


class Parameter:
    """Trainable array that outlives any single graph.

    Attributes:
        name: Dotted parameter name, unique within a model
        data: Current parameter values
        grad: Gradient accumulation buffer, same shape as data
        frozen: When True the parameter enters graphs as a constant
        decay: Whether decoupled weight decay applies to this parameter
    """

    def __init__(self, name: str, data: np.ndarray, decay: bool = True):
        if data.dtype not in FLOAT_DTYPES:
            raise TypeError(f"{name}: parameters must be float32 or float64, got {data.dtype}")
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)
        self.frozen = False
        self.decay = decay

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        """Reset the gradient buffer to zeros."""
        self.grad = np.zeros_like(self.data)

    def checksum(self) -> str:
        """SHA-256 of the raw parameter bytes."""
        return hashlib.sha256(self.data.tobytes()).hexdigest()

    def __repr__(self) -> str:
        flags = " frozen" if self.frozen else ""
        return f"Parameter({self.name}, shape={self.data.shape}, dtype={self.data.dtype}{flags})"


class Node:
    """One recorded value in a Graph.

    Attributes:
        id: Identifier unique within the owning graph
        op: Operation tag that produced the value
        parents: Input nodes, all created before this one
        value: Forward value
        grad: Gradient of the last backward() loss w.r.t. value, if reached
        requires_grad: Whether gradients flow to this node
    """

    __slots__ = ("id", "op", "parents", "value", "grad", "requires_grad", "graph", "_backward", "param")

    def __init__(
        self,
        graph: "Graph",
        node_id: int,
        op: str,
        parents: Sequence["Node"],
        value: np.ndarray,
        requires_grad: bool,
        backward_fn: Optional[BackwardFn] = None,
        param: Optional[Parameter] = None,
    ):
        self.graph = graph
        self.id = node_id
        self.op = op
        self.parents = tuple(parents)
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._backward = backward_fn
        self.param = param

    @property
    def parent_ids(self) -> tuple:
        return tuple(p.id for p in self.parents)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.value.dtype

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other):
        from .ops import add

        return add(self, other)

    def __radd__(self, other):
        from .ops import add

        return add(other, self)

    def __sub__(self, other):
        from .ops import sub

        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub

        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul

        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul

        return mul(other, self)

    def __truediv__(self, other):
        from .ops import div

        return div(self, other)

    def __rtruediv__(self, other):
        from .ops import div

        return div(other, self)

    def __neg__(self):
        from .ops import neg

        return neg(self)

    def __matmul__(self, other):
        from .ops import matmul

        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Node(id={self.id}, op={self.op!r}, shape={self.shape})"


class Graph:
    """Tape of nodes for one forward/backward step.

    In inference mode operations still return nodes but nothing is appended
    and no backward closures are kept.
    """

    def __init__(self, recording: bool = True):
        self.nodes: List[Node] = []
        self.recording = recording
        self.visit_counts: Counter = Counter()
        self._next_id = 0
        self._bound: Dict[int, Node] = {}

    def _new_node(
        self,
        op: str,
        parents: Sequence[Node],
        value: np.ndarray,
        requires_grad: bool,
        backward_fn: Optional[BackwardFn] = None,
        param: Optional[Parameter] = None,
    ) -> Node:
        node_id = self._next_id
        self._next_id += 1
        if not self.recording:
            return Node(self, node_id, op, parents, value, False, None, param)
        node = Node(self, node_id, op, parents, value, requires_grad, backward_fn, param)
        self.nodes.append(node)
        return node

    def constant(self, value, dtype=None) -> Node:
        """Leaf node that never receives gradients."""
        arr = np.asarray(value, dtype=dtype)
        return self._new_node("const", (), arr, requires_grad=False)

    def variable(self, value) -> Node:
        """Leaf node that receives gradients (inputs under test)."""
        arr = np.array(value, copy=True)
        check_finite("variable", arr)
        return self._new_node("var", (), arr, requires_grad=True)

    def param(self, p: Parameter) -> Node:
        """Bind a parameter to this graph; repeated binds return the same node."""
        key = id(p)
        if key in self._bound:
            return self._bound[key]
        node = self._new_node("param", (), p.data, requires_grad=not p.frozen, param=p)
        if self.recording:
            self._bound[key] = node
        return node

    def record(
        self,
        op: str,
        parents: Sequence[Node],
        value: np.ndarray,
        backward_fn: BackwardFn,
    ) -> Node:
        """Append the result of a primitive together with its gradient rule."""
        check_finite(op, value)
        requires_grad = any(p.requires_grad for p in parents)
        return self._new_node(op, parents, value, requires_grad, backward_fn if requires_grad else None)

    @contextmanager
    def inference(self) -> Iterator["Graph"]:
        """Temporarily stop recording."""
        previous = self.recording
        self.recording = False
        try:
            yield self
        finally:
            self.recording = previous

    def __len__(self) -> int:
        return len(self.nodes)


def backward(graph: Graph, loss: Node) -> Dict[int, np.ndarray]:
    """Populate gradients of a scalar loss by a reverse sweep over the tape.

    Gradients of bound parameters are also added into each Parameter.grad
    buffer; the caller zeroes those buffers between steps.

    Args:
        graph: Recording graph that produced loss
        loss: Rank-0 node

    Returns:
        Dict[int, np.ndarray]: Gradient for every trainable leaf node id,
        explicit zeros for leaves the loss does not depend on
    """
    if loss.ndim != 0:
        raise GradientError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if loss.graph is not graph or not any(n is loss for n in reversed(graph.nodes)):
        raise GradientError("backward: loss node is not recorded in this graph")

    grads: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    graph.visit_counts.clear()

    for node in reversed(graph.nodes):
        g = grads.get(node.id)
        if g is None or not node.requires_grad:
            continue
        graph.visit_counts[node.id] += 1
        node.grad = g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            previous = grads.get(parent.id)
            grads[parent.id] = pg if previous is None else previous + pg

    leaves: Dict[int, np.ndarray] = {}
    for node in graph.nodes:
        if node.parents or not node.requires_grad:
            continue
        g = grads.get(node.id)
        if g is None:
            g = np.zeros_like(node.value)
            node.grad = g
        leaves[node.id] = g
        if node.param is not None:
            node.param.grad += g

    logger.debug(f"backward: visited {len(graph.visit_counts)} of {len(graph.nodes)} nodes")
    return leaves
