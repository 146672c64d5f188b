"""Adam with decoupled weight decay, and a reduce-on-plateau learning-rate rule."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from ..autodiff import Parameter
from ..errors import GradientError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moments and hyperparameters of one Adam optimizer.

    Attributes:
        m: First moment per parameter name
        v: Second moment per parameter name
        t: Steps taken
        lr: Current learning rate (the scheduler rewrites it)
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator offset
        weight_decay: Decoupled decay coefficient
    """

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: Sequence[Parameter], lr: float, weight_decay: float = 0.0, **kwargs) -> "AdamState":
        """Zero moments for every parameter."""
        return cls(
            m={p.name: np.zeros_like(p.data) for p in params},
            v={p.name: np.zeros_like(p.data) for p in params},
            lr=lr,
            weight_decay=weight_decay,
            **kwargs,
        )

    def metadata(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }


def adam_step(state: AdamState, params: Sequence[Parameter], grads: Optional[Dict[str, np.ndarray]] = None) -> None:
    """One Adam update of every non-frozen parameter, in place.

    θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ, the decay term only for parameters
    with decay enabled.

    Args:
        state: Optimizer state; t is incremented once
        params: Parameters to update
        grads: Gradient per parameter name; defaults to each Parameter.grad

    Raises:
        GradientError: If a gradient contains NaN/Inf or the state lacks a parameter
        ShapeError: If a gradient's shape differs from its parameter
    """
    trainable = [p for p in params if not p.frozen]
    for p in trainable:
        g = grads[p.name] if grads is not None else p.grad
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} for {p.name} {p.data.shape}")
        if not np.isfinite(g).all():
            bad = int(np.flatnonzero(~np.isfinite(g))[0])
            raise GradientError(f"adam_step: non-finite gradient for {p.name} at flat index {bad}; step aborted")
        if p.name not in state.m:
            raise GradientError(f"adam_step: no optimizer state for {p.name}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p in trainable:
        g = grads[p.name] if grads is not None else p.grad
        m = b1 * state.m[p.name] + (1 - b1) * g
        v = b2 * state.v[p.name] + (1 - b2) * (g * g)
        state.m[p.name] = m.astype(p.data.dtype, copy=False)
        state.v[p.name] = v.astype(p.data.dtype, copy=False)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if p.decay and state.weight_decay:
            update = update + state.lr * state.weight_decay * p.data
        p.data = (p.data - update).astype(p.data.dtype, copy=False)


@dataclass
class PlateauScheduler:
    """Reduce the learning rate when the monitored metric stops improving.

    Attributes:
        lr: Current learning rate
        factor: Multiplier applied on a plateau
        patience: Non-improving epochs tolerated
        threshold: Relative improvement that counts as progress
        min_lr: Floor for lr
        best: Best metric so far (None before the first step)
        counter: Non-improving epochs since the last improvement or decay
    """

    lr: float
    factor: float = 0.5
    patience: int = 5
    threshold: float = 1e-4
    min_lr: float = 1e-7
    best: Optional[float] = None
    counter: int = 0

    def step(self, metric: float) -> float:
        """Feed one epoch's metric and return the (possibly reduced) lr.

        Raises:
            NonFiniteError: If metric is NaN or infinite
        """
        if not math.isfinite(metric):
            raise NonFiniteError("plateau_step", message=f"metric {metric}")
        if self.best is None or metric < self.best * (1 - self.threshold):
            self.best = metric
            self.counter = 0
            return self.lr
        self.counter += 1
        if self.counter > self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                logger.info(f"plateau: lr {self.lr:.3g} -> {new_lr:.3g}")
                self.lr = new_lr
            self.counter = 0
        return self.lr

    def state(self) -> Dict[str, object]:
        return {
            "lr": self.lr,
            "factor": self.factor,
            "patience": self.patience,
            "threshold": self.threshold,
            "min_lr": self.min_lr,
            "best": self.best,
            "counter": self.counter,
        }

    @classmethod
    def from_state(cls, state: Dict[str, object]) -> "PlateauScheduler":
        return cls(**state)
