"""Convolution, dense and dense-block layers."""

import logging
from typing import List

import numpy as np

from ..autodiff import Node, Parameter, ops
from ..errors import ShapeError

logger = logging.getLogger(__name__)


def he_normal(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    """Fan-in scaled normal init, std = sqrt(2 / fan_in)."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """floor((size + 2·padding − kernel) / stride) + 1."""
    return (size + 2 * padding - kernel) // stride + 1


class Conv2dLayer:
    """2-D cross-correlation with bias.

    Attributes:
        name: Parameter-name prefix, also used in shape errors
        weight: outC×inC×k×k parameter
        bias: outC parameter
        stride: Step between windows
        padding: Zero padding on each spatial border
    """

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        dtype=np.float32,
        decay: bool = True,
    ):
        if stride < 1 or padding < 0:
            raise ShapeError(f"{name}: stride must be >= 1 and padding >= 0")
        self.name = name
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(
            f"{name}.weight",
            he_normal(rng, (out_channels, in_channels, kernel, kernel), fan_in, dtype),
            decay=decay,
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype), decay=False)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    def output_size(self, size: int) -> int:
        return conv_output_size(size, self.kernel, self.stride, self.padding)

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: Node) -> Node:
        graph = x.graph
        return ops.conv2d(
            x,
            graph.param(self.weight),
            graph.param(self.bias),
            stride=self.stride,
            padding=self.padding,
            name=self.name,
        )

    __call__ = forward


class DenseLayer:
    """Affine map x·Wᵀ + b.

    Attributes:
        name: Parameter-name prefix
        weight: out×in parameter
        bias: out parameter
    """

    def __init__(
        self,
        name: str,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.name = name
        self.weight = Parameter(
            f"{name}.weight",
            he_normal(rng, (out_features, in_features), in_features, dtype),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features, dtype=dtype), decay=False)

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: Node) -> Node:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected B×{self.in_features} input, got {x.shape}")
        graph = x.graph
        product = ops.matmul(x, ops.transpose(graph.param(self.weight)))
        return ops.add(product, ops.tile_rows(graph.param(self.bias), x.shape[0]))

    __call__ = forward


class DenseBlock:
    """Dense-net block: every 3×3 layer sees the concatenation of all earlier features.

    Attributes:
        in_channels: Channels of the block input
        growth_rate: Channels produced by each layer
        layers: Conv2dLayer i maps in_channels + i·growth_rate → growth_rate
    """

    def __init__(
        self,
        name: str,
        in_channels: int,
        growth_rate: int,
        num_layers: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.name = name
        self.in_channels = in_channels
        self.growth_rate = growth_rate
        self.layers = [
            Conv2dLayer(
                f"{name}.layer{i}",
                in_channels + i * growth_rate,
                growth_rate,
                kernel=3,
                rng=rng,
                stride=1,
                padding=1,
                dtype=dtype,
            )
            for i in range(num_layers)
        ]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def out_channels(self) -> int:
        return self.in_channels + self.num_layers * self.growth_rate

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: Node) -> Node:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.name}: expected {self.in_channels} input channels, got shape {x.shape}")
        features = [x]
        for layer in self.layers:
            features.append(layer(ops.relu(ops.concat(features, axis=1))))
        out = ops.concat(features, axis=1)
        assert out.shape[1] == self.out_channels, f"{self.name}: channel bookkeeping mismatch"
        return out

    __call__ = forward
