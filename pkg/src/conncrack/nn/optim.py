"""RMSProp updates and parameter clipping over a model graph."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .graph import ModelGraph


class RMSProp:
    """Per-parameter mean-square accumulator: v <- d*v + (1-d)*g^2,
    p <- p - lr*g/sqrt(v + eps).  Gradients are zeroed after each step."""

    def __init__(self, graph: ModelGraph, lr: float, decay: float = 0.9, eps: float = 1e-8):
        if lr <= 0 or not 0 <= decay < 1 or eps <= 0:
            raise ConfigurationError("invalid RMSProp hyperparameters")
        self.graph = graph
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.state = {name: np.zeros_like(p) for name, p, _ in graph.named_params()}

    def step(self) -> None:
        for name, p, g in self.graph.named_params():
            v = self.state[name]
            v *= self.decay
            v += (1.0 - self.decay) * np.square(g)
            p -= self.lr * g / np.sqrt(v + self.eps)
            g[...] = 0.0


def clip_params(graph: ModelGraph, c: float) -> None:
    """Clamp every parameter of ``graph`` to [-c, c] in place."""
    if c <= 0:
        raise ConfigurationError(f"clip bound must be positive, got {c}")
    for _, p, _ in graph.named_params():
        np.clip(p, -c, c, out=p)
