"""Stateful layer objects used as nodes of a model graph.

Each layer reads one or more named buffers and writes one.  ``forward`` caches
whatever the backward pass needs; ``backward`` returns the gradient for every
input buffer and accumulates parameter gradients in place (+=), so one layer
may be driven several times per optimization step.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, DimensionError
from . import functional as F


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """He-style uniform init on [-sqrt(6/fan_in), sqrt(6/fan_in)]."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    """Graph node: consumes ``inputs`` buffers, produces the ``output`` buffer."""

    def __init__(self, name: str, inputs: list[str], output: str):
        self.name = name
        self.inputs = list(inputs)
        self.output = output
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, xs: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray, accumulate_param_grads: bool = True) -> list[np.ndarray]:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def astype(self, dtype) -> None:
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
        self.zero_grad()

    def out_extent(self, extents: tuple[int, int]) -> tuple[int, int]:
        """Predicted spatial output extent, for shape-algebra checks."""
        return extents


class Conv2d(Layer):
    def __init__(self, name, inputs, output, in_channels, out_channels, kernel,
                 stride=1, padding=0, rng: np.random.Generator | None = None):
        super().__init__(name, inputs, output)
        if min(in_channels, out_channels, kernel, stride) < 1 or padding < 0:
            raise ConfigurationError(f"{name}: invalid conv hyperparameters")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_uniform(
            rng, (out_channels, in_channels, kernel, kernel), in_channels * kernel * kernel)
        self.params["bias"] = np.zeros(out_channels, dtype=np.float32)
        self.zero_grad()
        self._cache = None

    def forward(self, xs):
        (x,) = xs
        out, cols = F.conv2d_forward(x, self.params["weight"], self.params["bias"],
                                     self.stride, self.padding)
        self._cache = (cols, x.shape)
        return out

    def backward(self, grad_out, accumulate_param_grads=True):
        cols, x_shape = self._cache
        gx, gw, gb = F.conv2d_backward(grad_out, cols, x_shape, self.params["weight"],
                                       self.stride, self.padding)
        if accumulate_param_grads:
            self.grads["weight"] += gw
            self.grads["bias"] += gb
        return [gx]

    def out_extent(self, extents):
        return (F.conv_out_extent(extents[0], self.kernel, self.stride, self.padding),
                F.conv_out_extent(extents[1], self.kernel, self.stride, self.padding))


class Deconv2d(Layer):
    def __init__(self, name, inputs, output, in_channels, out_channels, kernel,
                 stride=1, padding=0, rng: np.random.Generator | None = None):
        super().__init__(name, inputs, output)
        if min(in_channels, out_channels, kernel, stride) < 1 or padding < 0:
            raise ConfigurationError(f"{name}: invalid deconv hyperparameters")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_uniform(
            rng, (in_channels, out_channels, kernel, kernel), in_channels * kernel * kernel)
        self.params["bias"] = np.zeros(out_channels, dtype=np.float32)
        self.zero_grad()
        self._cache = None

    def forward(self, xs):
        (x,) = xs
        self._cache = x
        return F.deconv2d_forward(x, self.params["weight"], self.params["bias"],
                                  self.stride, self.padding)

    def backward(self, grad_out, accumulate_param_grads=True):
        x = self._cache
        gx, gw, gb = F.deconv2d_backward(grad_out, x, self.params["weight"],
                                         self.stride, self.padding)
        if accumulate_param_grads:
            self.grads["weight"] += gw
            self.grads["bias"] += gb
        return [gx]

    def out_extent(self, extents):
        return (F.deconv_out_extent(extents[0], self.kernel, self.stride, self.padding),
                F.deconv_out_extent(extents[1], self.kernel, self.stride, self.padding))


class MaxPool2(Layer):
    def forward(self, xs):
        out, self._cache = F.maxpool2_forward(xs[0])
        return out

    def backward(self, grad_out, accumulate_param_grads=True):
        return [F.maxpool2_backward(grad_out, self._cache)]

    def out_extent(self, extents):
        return ((extents[0] + 1) // 2, (extents[1] + 1) // 2)


class AvgPool2(Layer):
    def forward(self, xs):
        out, self._cache = F.avgpool2_forward(xs[0])
        return out

    def backward(self, grad_out, accumulate_param_grads=True):
        return [F.avgpool2_backward(grad_out, self._cache)]

    def out_extent(self, extents):
        return ((extents[0] + 1) // 2, (extents[1] + 1) // 2)


class LeakyReLU(Layer):
    def __init__(self, name, inputs, output, slope: float = 0.2):
        super().__init__(name, inputs, output)
        self.slope = slope

    def forward(self, xs):
        self._cache = xs[0]
        return F.leaky_relu_forward(xs[0], self.slope)

    def backward(self, grad_out, accumulate_param_grads=True):
        return [F.leaky_relu_backward(grad_out, self._cache, self.slope)]


class Sigmoid(Layer):
    def forward(self, xs):
        self._cache = F.sigmoid(xs[0])
        return self._cache

    def backward(self, grad_out, accumulate_param_grads=True):
        return [F.sigmoid_backward(grad_out, self._cache)]


class Add(Layer):
    """Element-wise sum of equally shaped inputs."""

    def forward(self, xs):
        if any(x.shape != xs[0].shape for x in xs[1:]):
            raise DimensionError(f"{self.name}: add inputs differ in shape")
        out = xs[0].copy()
        for x in xs[1:]:
            out += x
        return out

    def backward(self, grad_out, accumulate_param_grads=True):
        return [grad_out] * len(self.inputs)


class Concat(Layer):
    """Channel-axis concatenation."""

    def forward(self, xs):
        if any(x.shape[1:] != xs[0].shape[1:] for x in xs[1:]):
            raise DimensionError(f"{self.name}: concat inputs differ in spatial extent")
        self._cache = [x.shape[0] for x in xs]
        return np.concatenate(xs, axis=0)

    def backward(self, grad_out, accumulate_param_grads=True):
        splits = np.cumsum(self._cache)[:-1]
        return [np.ascontiguousarray(g) for g in np.split(grad_out, splits, axis=0)]
