"""Dense-net encoder, mirrored decoder and classifier head builders.

Encoder: 3×3 stem, then per stage [dense block → 1×1 transition → 3×3
stride-2 conv], a nearest-neighbour resize to the latent spatial size, and
parallel 1×1 heads for mu and logvar. The decoder mirrors it with
resize-based upsampling and a sigmoid output.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..autodiff import Node, Parameter, ops
from ..errors import ShapeError
from ..models.config import ArchParams, LatentConfig
from ..utils.rng import stream
from .layers import Conv2dLayer, DenseBlock, DenseLayer, conv_output_size

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StagePlan:
    """Geometry of one encoder stage (mirrored by the decoder).

    Attributes:
        size: Spatial size entering the stage
        channels: Channels entering the stage
        transition: Channels after the 1×1 transition
    """

    size: int
    channels: int
    transition: int


def stage_plan(arch: ArchParams) -> Tuple[List[StagePlan], int, int]:
    """Per-stage geometry plus the (size, channels) of the final feature map."""
    plans = []
    size, channels = arch.image_size, arch.stem_channels
    for _ in range(arch.num_stages):
        block_out = channels + arch.block_layers * arch.growth_rate
        transition = max(1, int(block_out * arch.compression))
        plans.append(StagePlan(size, channels, transition))
        size, channels = conv_output_size(size, 3, 2, 1), transition
    return plans, size, channels


def _check_latent(cfg: LatentConfig) -> None:
    if cfg.spatial < 1:
        raise ShapeError(f"latent spatial size must be >= 1, got {cfg.spatial}")


class Encoder:
    """Recognition network producing mu and logvar, each B×latentC×s×s."""

    def __init__(self, cfg: LatentConfig, arch: ArchParams, rng: np.random.Generator, dtype=np.float32):
        _check_latent(cfg)
        self.latent = cfg
        self.arch = arch
        plans, self.base_size, base_channels = stage_plan(arch)
        self.stem = Conv2dLayer("encoder.stem", arch.in_channels, arch.stem_channels, 3, rng, padding=1, dtype=dtype)
        self.stages: List[Tuple[DenseBlock, Conv2dLayer, Conv2dLayer]] = []
        for i, plan in enumerate(plans):
            block = DenseBlock(f"encoder.stage{i}.block", plan.channels, arch.growth_rate, arch.block_layers, rng, dtype)
            transition = Conv2dLayer(
                f"encoder.stage{i}.transition", block.out_channels, plan.transition, 1, rng, dtype=dtype
            )
            down = Conv2dLayer(
                f"encoder.stage{i}.down", plan.transition, plan.transition, 3, rng, stride=2, padding=1, dtype=dtype
            )
            assert down.output_size(plan.size) == (plans[i + 1].size if i + 1 < len(plans) else self.base_size)
            self.stages.append((block, transition, down))
        self.mu_head = Conv2dLayer("encoder.mu", base_channels, cfg.channels, 1, rng, dtype=dtype)
        # excluded from weight decay; starts input-independent at logvar_init
        self.logvar_head = Conv2dLayer("encoder.logvar", base_channels, cfg.channels, 1, rng, dtype=dtype, decay=False)
        self.logvar_head.weight.data = np.zeros_like(self.logvar_head.weight.data)
        self.logvar_head.bias.data = np.full(cfg.channels, arch.logvar_init, dtype=dtype)

    def parameters(self) -> List[Parameter]:
        params = self.stem.parameters()
        for block, transition, down in self.stages:
            params += block.parameters() + transition.parameters() + down.parameters()
        return params + self.mu_head.parameters() + self.logvar_head.parameters()

    def forward(self, x: Node) -> Tuple[Node, Node]:
        expected = (self.arch.in_channels, self.arch.image_size, self.arch.image_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"encoder: expected B×{'×'.join(map(str, expected))} input, got {x.shape}")
        # pixels in [0, 1] are centered on 0.5
        h = self.stem(ops.sub(x, 0.5))
        for block, transition, down in self.stages:
            h = block(h)
            h = transition(ops.relu(h))
            h = down(ops.relu(h))
        h = ops.resize_nearest(ops.relu(h), (self.latent.spatial, self.latent.spatial))
        return self.mu_head(h), self.logvar_head(h)

    __call__ = forward


class Decoder:
    """Generative network mapping B×latentC×s×s to image logits."""

    def __init__(self, cfg: LatentConfig, arch: ArchParams, rng: np.random.Generator, dtype=np.float32):
        _check_latent(cfg)
        self.latent = cfg
        self.arch = arch
        plans, self.base_size, base_channels = stage_plan(arch)
        self.latent_conv = Conv2dLayer("decoder.latent", cfg.channels, base_channels, 1, rng, dtype=dtype)
        self.stages: List[Tuple[int, Conv2dLayer, DenseBlock, Conv2dLayer]] = []
        channels = base_channels
        for i in reversed(range(len(plans))):
            plan = plans[i]
            up = Conv2dLayer(f"decoder.stage{i}.up", channels, plan.channels, 3, rng, padding=1, dtype=dtype)
            block = DenseBlock(f"decoder.stage{i}.block", plan.channels, arch.growth_rate, arch.block_layers, rng, dtype)
            transition = Conv2dLayer(
                f"decoder.stage{i}.transition", block.out_channels, plan.channels, 1, rng, dtype=dtype
            )
            self.stages.append((plan.size, up, block, transition))
            channels = plan.channels
        self.output = Conv2dLayer("decoder.output", channels, arch.in_channels, 3, rng, padding=1, dtype=dtype)

    def parameters(self) -> List[Parameter]:
        params = self.latent_conv.parameters()
        for _, up, block, transition in self.stages:
            params += up.parameters() + block.parameters() + transition.parameters()
        return params + self.output.parameters()

    def logits(self, z: Node) -> Node:
        """Pre-sigmoid image, B×C×H×W."""
        expected = (self.latent.channels, self.latent.spatial, self.latent.spatial)
        if z.ndim != 4 or z.shape[1:] != expected:
            raise ShapeError(f"decoder: expected B×{'×'.join(map(str, expected))} latent, got {z.shape}")
        h = ops.relu(self.latent_conv(z))
        h = ops.resize_nearest(h, (self.base_size, self.base_size))
        for size, up, block, transition in self.stages:
            h = up(ops.resize_nearest(h, (size, size)))
            h = block(h)
            h = ops.relu(transition(ops.relu(h)))
        return self.output(h)

    def forward(self, z: Node) -> Node:
        """Image in (0, 1)."""
        return ops.sigmoid(self.logits(z))

    __call__ = forward


class ClassifierHead:
    """Fully connected classifier over flattened latent features.

    Attributes:
        layers: DenseLayers applied in order with ReLU between them
    """

    def __init__(self, layers: List[DenseLayer]):
        self.layers = layers

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_features

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, features: Node) -> Node:
        h = features
        for i, layer in enumerate(self.layers):
            if i:
                h = ops.relu(h)
            h = layer(h)
        return h

    __call__ = forward


def build_encoder(
    cfg: LatentConfig,
    arch: ArchParams,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float32,
) -> Encoder:
    encoder = Encoder(cfg, arch, rng if rng is not None else stream(0, "init"), dtype)
    logger.debug(f"encoder: latent {cfg.channels}x{cfg.spatial}x{cfg.spatial}, {len(encoder.parameters())} tensors")
    return encoder


def build_decoder(
    cfg: LatentConfig,
    arch: ArchParams,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float32,
) -> Decoder:
    return Decoder(cfg, arch, rng if rng is not None else stream(0, "init"), dtype)


def build_classifier(
    cfg: LatentConfig,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float32,
    num_classes: int = 10,
    hidden: int = 512,
    hidden_threshold: int = 8192,
) -> ClassifierHead:
    """One dense layer from the flat latent to logits, or two with a ReLU
    hidden layer when the flat latent exceeds hidden_threshold."""
    _check_latent(cfg)
    rng = rng if rng is not None else stream(0, "head-init")
    if cfg.flat_size > hidden_threshold:
        layers = [
            DenseLayer("head.hidden", cfg.flat_size, hidden, rng, dtype),
            DenseLayer("head.out", hidden, num_classes, rng, dtype),
        ]
    else:
        layers = [DenseLayer("head.out", cfg.flat_size, num_classes, rng, dtype)]
    return ClassifierHead(layers)


def parameter_count(params: List[Parameter]) -> int:
    return int(sum(p.data.size for p in params))
