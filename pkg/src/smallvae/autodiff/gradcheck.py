"""Central finite-difference gradient checks."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NonFiniteError
from .graph import Graph, Node, Parameter, backward

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Graph, Node], Node]
LossFn = Callable[[Graph], Node]


def _evaluate(f: ScalarFn, x: np.ndarray) -> float:
    graph = Graph(recording=False)
    value = float(f(graph, graph.constant(x)).value)
    if not np.isfinite(value):
        raise NonFiniteError("grad_check", message="f(x) is not finite")
    return value


def _relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: ScalarFn,
    x: np.ndarray,
    eps: float = 1e-5,
    skip: Optional[np.ndarray] = None,
    floor: float = 1e-8,
) -> float:
    """Compare backward() against central differences for every coordinate of x.

    Args:
        f: Builds a rank-0 node from (graph, x_node); must be deterministic
        x: Finite input point
        eps: Finite-difference step, > 0
        skip: Boolean mask of coordinates to exclude (non-differentiable points)
        floor: Lower bound of the relative-error denominator

    Returns:
        float: max |analytic - numeric| / max(|analytic|, |numeric|, floor)
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    x = np.array(x, copy=True)
    if not np.isfinite(x).all():
        raise NonFiniteError("grad_check", message="x is not finite")

    graph = Graph()
    x_node = graph.variable(x)
    loss = f(graph, x_node)
    if not np.isfinite(loss.value).all():
        raise NonFiniteError("grad_check", message="f(x) is not finite")
    analytic = backward(graph, loss)[x_node.id]

    worst = 0.0
    for i in range(x.size):
        if skip is not None and skip.flat[i]:
            continue
        original = x.flat[i]
        x.flat[i] = original + eps
        upper = _evaluate(f, x)
        x.flat[i] = original - eps
        lower = _evaluate(f, x)
        x.flat[i] = original
        numeric = (upper - lower) / (2 * eps)
        worst = max(worst, _relative_error(float(analytic.flat[i]), numeric, floor))
    return worst


def grad_check_params(
    loss_fn: LossFn,
    params: Sequence[Parameter],
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-8,
) -> float:
    """Gradient check of a scalar loss with respect to model parameters.

    Parameters are perturbed in place and restored. With max_coords set, a
    seeded random subset of coordinates is checked per parameter.

    Returns:
        float: worst relative error over all checked coordinates
    """
    graph = Graph()
    loss = loss_fn(graph)
    backward(graph, loss)
    analytic = {}
    for node in graph.nodes:
        if node.param is not None and node.grad is not None:
            analytic[id(node.param)] = node.grad

    def evaluate() -> float:
        g = Graph(recording=False)
        value = float(loss_fn(g).value)
        if not np.isfinite(value):
            raise NonFiniteError("grad_check_params", message="loss is not finite")
        return value

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        grad = analytic.get(id(p))
        if grad is None:
            grad = np.zeros_like(p.data)
        coords = np.arange(p.data.size)
        if max_coords is not None and p.data.size > max_coords:
            coords = rng.choice(p.data.size, size=max_coords, replace=False)
        for i in coords:
            original = p.data.flat[i]
            p.data.flat[i] = original + eps
            upper = evaluate()
            p.data.flat[i] = original - eps
            lower = evaluate()
            p.data.flat[i] = original
            numeric = (upper - lower) / (2 * eps)
            error = _relative_error(float(grad.flat[i]), numeric, floor)
            if error > worst:
                logger.debug(f"grad_check_params: {p.name}[{i}] analytic={grad.flat[i]} numeric={numeric}")
                worst = error
    return worst
