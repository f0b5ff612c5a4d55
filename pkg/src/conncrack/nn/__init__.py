"""Minimal deterministic tensor/layer engine with exact reverse-mode gradients."""

from . import functional
from .blocks import (dense_block, dense_block_forward, dense_block_graph,
                     transition_block, transition_block_forward,
                     transition_block_graph)
from .gradcheck import fd_gradient, gradcheck, layer_kind_report, max_rel_err
from .graph import ModelGraph, load_checkpoint, save_checkpoint
from .layers import (Add, AvgPool2, Concat, Conv2d, Deconv2d, Layer, LeakyReLU,
                     MaxPool2, Sigmoid, he_uniform)
from .optim import RMSProp, clip_params

__all__ = [
    "functional",
    "dense_block", "dense_block_forward", "dense_block_graph",
    "transition_block", "transition_block_forward", "transition_block_graph",
    "fd_gradient", "gradcheck", "layer_kind_report", "max_rel_err",
    "ModelGraph", "load_checkpoint", "save_checkpoint",
    "Add", "AvgPool2", "Concat", "Conv2d", "Deconv2d", "Layer", "LeakyReLU",
    "MaxPool2", "Sigmoid", "he_uniform",
    "RMSProp", "clip_params",
]
