from .layers import Conv2dLayer, DenseBlock, DenseLayer, conv_output_size, he_normal
from .networks import (
    ClassifierHead,
    Decoder,
    Encoder,
    build_classifier,
    build_decoder,
    build_encoder,
    parameter_count,
    stage_plan,
)

__all__ = [
    "ClassifierHead",
    "Conv2dLayer",
    "Decoder",
    "DenseBlock",
    "DenseLayer",
    "Encoder",
    "build_classifier",
    "build_decoder",
    "build_encoder",
    "conv_output_size",
    "he_normal",
    "parameter_count",
    "stage_plan",
]
