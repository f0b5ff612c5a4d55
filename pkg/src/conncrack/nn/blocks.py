"""Composite blocks: densely connected blocks and transition (downsample) blocks.

Factories emit primitive graph nodes; channel arithmetic is returned so the
caller can keep wiring.  Each dense component is a 1x1 convolution (to a
bottleneck width) followed by a 3x3 convolution producing ``growth`` channels,
with leaky ReLU after both; its input is the concatenation of the block input
and every earlier component output.  No batch normalization anywhere: the
engine is single-sample and deterministic by design.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .graph import ModelGraph
from .layers import AvgPool2, Concat, Conv2d, Layer, LeakyReLU

BOTTLENECK_FACTOR = 4  # 1x1 conv width = factor * growth, per DenseNet convention
LEAKY_SLOPE = 0.2


def dense_block(
    name: str,
    input_buf: str,
    output_buf: str,
    in_channels: int,
    growth: int,
    n_components: int,
    rng: np.random.Generator,
) -> tuple[list[Layer], int]:
    """Nodes for a dense block; returns (nodes, out_channels).

    Output channels = in_channels + n_components * growth; spatial extents are
    unchanged.  n_components == 0 degenerates to a pass-through concat.
    """
    if in_channels < 1 or growth < 1 or n_components < 0:
        raise ConfigurationError(f"{name}: invalid dense block arithmetic")
    nodes: list[Layer] = []
    feature_bufs = [input_buf]
    channels = in_channels
    for i in range(n_components):
        pfx = f"{name}.c{i}"
        cat = f"{pfx}.cat"
        if len(feature_bufs) == 1:
            cat = feature_bufs[0]  # nothing to concatenate yet
        else:
            nodes.append(Concat(f"{pfx}.concat", feature_bufs, cat))
        mid = BOTTLENECK_FACTOR * growth
        nodes.append(Conv2d(f"{pfx}.conv1", [cat], f"{pfx}.b", channels, mid, 1, rng=rng))
        nodes.append(LeakyReLU(f"{pfx}.act1", [f"{pfx}.b"], f"{pfx}.ba", LEAKY_SLOPE))
        nodes.append(Conv2d(f"{pfx}.conv3", [f"{pfx}.ba"], f"{pfx}.g", mid, growth, 3,
                            stride=1, padding=1, rng=rng))
        nodes.append(LeakyReLU(f"{pfx}.act3", [f"{pfx}.g"], f"{pfx}.out", LEAKY_SLOPE))
        feature_bufs.append(f"{pfx}.out")
        channels += growth
    nodes.append(Concat(f"{name}.out_concat", feature_bufs, output_buf))
    return nodes, channels


def transition_block(
    name: str,
    input_buf: str,
    output_buf: str,
    in_channels: int,
    out_channels: int,
    rng: np.random.Generator,
) -> tuple[list[Layer], int]:
    """1x1 convolution + leaky ReLU + 2x2 stride-2 average pool (halves H, W)."""
    if in_channels < 1 or out_channels < 1:
        raise ConfigurationError(f"{name}: invalid transition channels")
    nodes: list[Layer] = [
        Conv2d(f"{name}.conv", [input_buf], f"{name}.c", in_channels, out_channels, 1, rng=rng),
        LeakyReLU(f"{name}.act", [f"{name}.c"], f"{name}.ca", LEAKY_SLOPE),
        AvgPool2(f"{name}.pool", [f"{name}.ca"], output_buf),
    ]
    return nodes, out_channels


def _as_graph(nodes: list[Layer], output_buf: str) -> ModelGraph:
    return ModelGraph(["x"], nodes, output_buf)


def dense_block_graph(in_channels: int, growth: int, n_components: int,
                      seed: int = 0) -> ModelGraph:
    """Standalone dense block wrapped as a single-input graph."""
    rng = np.random.default_rng(seed)
    nodes, _ = dense_block("dense", "x", "y", in_channels, growth, n_components, rng)
    return _as_graph(nodes, "y")


def transition_block_graph(in_channels: int, out_channels: int, seed: int = 0) -> ModelGraph:
    """Standalone transition block wrapped as a single-input graph."""
    rng = np.random.default_rng(seed)
    nodes, _ = transition_block("trans", "x", "y", in_channels, out_channels, rng)
    return _as_graph(nodes, "y")


def dense_block_forward(x: np.ndarray, growth: int, n_components: int,
                        seed: int = 0) -> np.ndarray:
    """Run a freshly initialized dense block on (C, H, W)."""
    return dense_block_graph(x.shape[0], growth, n_components, seed).forward({"x": x})


def transition_block_forward(x: np.ndarray, out_channels: int, seed: int = 0) -> np.ndarray:
    """Run a freshly initialized transition block on (C, H, W)."""
    return transition_block_graph(x.shape[0], out_channels, seed).forward({"x": x})
