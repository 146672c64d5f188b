"""Numpy-backed tensors with reverse-mode automatic differentiation.

Tensor values are plain float32/float64 ``numpy.ndarray`` objects; a Graph
records the operations of one step and ``backward`` sweeps it in reverse.
"""

import numpy as np

from .graph import Graph, Node, Parameter, backward, check_finite
from .gradcheck import grad_check, grad_check_params
from . import ops

Tensor = np.ndarray

__all__ = [
    "Graph",
    "Node",
    "Parameter",
    "Tensor",
    "backward",
    "check_finite",
    "grad_check",
    "grad_check_params",
    "ops",
]
