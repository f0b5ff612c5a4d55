"""Finite-difference verification of every backward pass.

The harness projects a graph's output onto a fixed random direction to get a
scalar objective, computes analytic gradients via the reverse pass, and
compares against central finite differences in double precision.

Activation inputs are sampled away from the leaky-ReLU kink so the finite
difference never straddles it.
"""

from __future__ import annotations

import numpy as np

from .blocks import dense_block_graph, transition_block_graph
from .graph import ModelGraph
from .layers import (Add, AvgPool2, Concat, Conv2d, Deconv2d, LeakyReLU,
                     MaxPool2, Sigmoid)

FD_STEP = 1e-3


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-7) -> float:
    """Worst elementwise relative error; tiny pairs compare absolutely."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(n))
    err = np.abs(a - n)
    rel = np.where(scale > atol, err / np.maximum(scale, atol), 0.0)
    if np.any((scale <= atol) & (err > atol)):
        return float("inf")
    return float(rel.max()) if rel.size else 0.0


def fd_gradient(objective, array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference gradient of a scalar objective w.r.t. ``array``.

    Perturbs the array in place and restores it; ``objective`` takes no
    arguments and must read the array by reference.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = objective()
        flat[i] = orig - step
        lo = objective()
        flat[i] = orig
        grad.reshape(-1)[i] = (hi - lo) / (2.0 * step)
    return grad


def gradcheck(graph: ModelGraph, feeds: dict[str, np.ndarray], seed: int = 0,
              step: float = FD_STEP) -> dict[str, float]:
    """Compare analytic and finite-difference gradients for a whole graph.

    Returns max relative error per parameterized node plus one
    ``input:<name>`` entry per graph input.  Runs in double precision on a
    private copy of the graph.
    """
    if not graph.nodes:
        return {}
    g = graph.clone().astype(np.float64)
    feeds = {k: np.asarray(v, dtype=np.float64).copy() for k, v in feeds.items()}
    rng = np.random.default_rng(seed)
    out = g.forward(feeds)
    proj = rng.standard_normal(out.shape)

    def objective() -> float:
        return float(np.sum(g.forward(feeds) * proj))

    g.zero_grad()
    g.forward(feeds)
    input_grads = g.backward({g.output_name: proj})

    report: dict[str, float] = {}
    for node in g.nodes:
        if not node.params:
            continue
        errs = []
        for pname, p in node.params.items():
            fd = fd_gradient(objective, p, step)
            errs.append(max_rel_err(node.grads[pname], fd))
        report[node.name] = max(errs)
    for name in g.input_names:
        fd = fd_gradient(objective, feeds[name], step)
        analytic = input_grads.get(name, np.zeros_like(feeds[name]))
        report[f"input:{name}"] = max_rel_err(analytic, fd)
    return report


def _away_from_kink(rng: np.random.Generator, shape, low=0.1, high=1.0) -> np.ndarray:
    """Random values with |x| in [low, high]: safe for piecewise-linear ops."""
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return (mag * sign).astype(np.float64)


def layer_kind_report(seed: int = 0, step: float = FD_STEP) -> dict[str, float]:
    """Gradient-check one tiny graph per layer kind; returns kind -> max error."""
    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}

    def run(kind: str, graph: ModelGraph, feeds: dict[str, np.ndarray]) -> None:
        rep = gradcheck(graph, feeds, seed=seed, step=step)
        report[kind] = max(rep.values()) if rep else 0.0

    x = _away_from_kink(rng, (2, 6, 6))
    run("conv2d", ModelGraph(["x"], [Conv2d("op", ["x"], "y", 2, 3, 3, stride=1,
                                            padding=1, rng=rng)], "y"), {"x": x})
    run("deconv2d", ModelGraph(["x"], [Deconv2d("op", ["x"], "y", 2, 3, 4, stride=2,
                                                padding=1, rng=rng)], "y"), {"x": x})
    run("maxpool2", ModelGraph(["x"], [MaxPool2("op", ["x"], "y")], "y"),
        {"x": rng.standard_normal((2, 6, 6)) + np.arange(36).reshape(1, 6, 6) * 0.05})
    run("avgpool2", ModelGraph(["x"], [AvgPool2("op", ["x"], "y")], "y"),
        {"x": rng.standard_normal((2, 5, 5))})
    run("leaky_relu", ModelGraph(["x"], [LeakyReLU("op", ["x"], "y")], "y"),
        {"x": _away_from_kink(rng, (2, 5, 5))})
    run("sigmoid", ModelGraph(["x"], [Sigmoid("op", ["x"], "y")], "y"),
        {"x": rng.standard_normal((2, 4, 4))})
    run("concat", ModelGraph(["x"], [Conv2d("c1", ["x"], "a", 2, 2, 1, rng=rng),
                                     Concat("op", ["x", "a"], "y")], "y"), {"x": x})
    run("add", ModelGraph(["x"], [Conv2d("c1", ["x"], "a", 2, 2, 1, rng=rng),
                                  Add("op", ["x", "a"], "y")], "y"), {"x": x})
    run("dense_block", dense_block_graph(3, 2, 2, seed=seed),
        {"x": _away_from_kink(rng, (3, 5, 5))})
    run("transition_block", transition_block_graph(3, 2, seed=seed),
        {"x": _away_from_kink(rng, (3, 6, 6))})
    return report
