"""Depthwise-separable ROI classifier at desk scale."""

from .data import SHAPE_CLASSES, load_image_dataset, make_shape_dataset
from .estimator import ToyNetClassifier
from .layers import (
    ConvSpec,
    MacCounter,
    conv2d,
    cross_entropy,
    depthwise_conv2d,
    flops_separable,
    flops_standard,
    pointwise_conv2d,
    reduction_ratio,
    relu,
    separable_conv2d,
    softmax,
)
from .net import (
    ToyNet,
    backward_and_step,
    classify_rois,
    forward,
    load_weights,
    save_weights,
)

__all__ = [
    "ConvSpec", "MacCounter", "SHAPE_CLASSES", "ToyNet", "ToyNetClassifier", "backward_and_step",
    "classify_rois", "conv2d", "cross_entropy", "depthwise_conv2d", "flops_separable",
    "flops_standard", "forward", "load_image_dataset", "load_weights", "make_shape_dataset",
    "pointwise_conv2d", "reduction_ratio", "relu", "save_weights", "separable_conv2d", "softmax",
]
