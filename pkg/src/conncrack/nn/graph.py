"""Model graph: an ordered list of layers over named activation buffers.

The node list is topologically ordered by construction.  ``forward`` fills a
buffer dict; ``backward`` walks the list in reverse, accumulating buffer
gradients, and may be seeded at any subset of buffers (e.g. both the logits
and the post-sigmoid output of a generator).

A graph instance is single-writer: forward/backward share per-layer caches,
so concurrent use requires distinct instances (see ``clone``).
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ConfigurationError, DimensionError, FormatError
from .layers import Layer

CKPT_MAGIC = b"CKPT1"


class ModelGraph:
    def __init__(self, input_names: list[str], nodes: list[Layer], output_name: str):
        self.input_names = list(input_names)
        self.nodes = list(nodes)
        self.output_name = output_name
        self.buffers: dict[str, np.ndarray] = {}
        written = set(input_names)
        for node in self.nodes:
            missing = [b for b in node.inputs if b not in written]
            if missing:
                raise ConfigurationError(
                    f"node {node.name} reads unwritten buffer(s) {missing}")
            if node.output in written:
                raise ConfigurationError(f"buffer {node.output} written twice")
            written.add(node.output)
        if output_name not in written:
            raise ConfigurationError(f"output buffer {output_name} is never written")

    # ----------------------------------------------------------- execution

    def forward(self, feeds: dict[str, np.ndarray]) -> np.ndarray:
        if set(feeds) != set(self.input_names):
            raise DimensionError(
                f"graph expects inputs {self.input_names}, got {sorted(feeds)}")
        bufs = dict(feeds)
        for node in self.nodes:
            bufs[node.output] = node.forward([bufs[b] for b in node.inputs])
        self.buffers = bufs
        return bufs[self.output_name]

    def backward(
        self,
        seeds: dict[str, np.ndarray],
        accumulate_param_grads: bool = True,
    ) -> dict[str, np.ndarray]:
        """Reverse pass from one or more seeded buffers.

        Returns gradients w.r.t. the graph inputs (missing key = zero path).
        Parameter gradients accumulate into each layer's ``grads`` unless
        disabled (used when a frozen graph only relays gradients).
        """
        grads: dict[str, np.ndarray] = {k: v for k, v in seeds.items()}
        for node in reversed(self.nodes):
            g = grads.pop(node.output, None)
            if g is None:
                continue
            gins = node.backward(g, accumulate_param_grads=accumulate_param_grads)
            for name, gi in zip(node.inputs, gins):
                if name in grads:
                    grads[name] = grads[name] + gi
                else:
                    grads[name] = gi
        return {k: grads[k] for k in self.input_names if k in grads}

    # ---------------------------------------------------------- parameters

    def named_params(self):
        for node in self.nodes:
            for pname in node.params:
                yield f"{node.name}.{pname}", node.params[pname], node.grads[pname]

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for _, p, _ in self.named_params())

    def max_abs_param(self) -> float:
        return max((float(np.abs(p).max()) for _, p, _ in self.named_params() if p.size),
                   default=0.0)

    def param_checksum(self) -> bytes:
        """Order-stable fingerprint of all parameter bytes (for invariants)."""
        import hashlib

        h = hashlib.sha256()
        for name, p, _ in self.named_params():
            h.update(name.encode())
            h.update(p.tobytes())
        return h.digest()

    def astype(self, dtype) -> "ModelGraph":
        for node in self.nodes:
            node.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p for name, p, _ in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = {name: (node, pname) for node in self.nodes for name, pname in
               ((f"{node.name}.{p}", p) for p in node.params)}
        if set(state) != set(own):
            extra = sorted(set(state) - set(own))
            missing = sorted(set(own) - set(state))
            raise ConfigurationError(
                f"checkpoint/graph parameter mismatch: extra={extra} missing={missing}")
        for name, value in state.items():
            node, pname = own[name]
            if node.params[pname].shape != value.shape:
                raise DimensionError(
                    f"parameter {name}: checkpoint shape {value.shape} != "
                    f"graph shape {node.params[pname].shape}")
            node.params[pname] = value.astype(node.params[pname].dtype)
            node.grads[pname] = np.zeros_like(node.params[pname])

    def clone(self) -> "ModelGraph":
        """Deep copy with independent parameters and caches."""
        import copy

        return copy.deepcopy(self)


# ------------------------------------------------------------- checkpoints
#
# CKPT1 layout (little-endian):
#   magic "CKPT1" | u32 entry count | entries
# entry:
#   u32 name length | name bytes (utf-8) | u32 rank | u32 extents[rank] | f32 payload


def save_checkpoint(path, state: dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += CKPT_MAGIC
    blob += struct.pack("<I", len(state))
    for name, arr in state.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb)) + nb
        blob += struct.pack("<I", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.tobytes()
    from ..ioutil import write_bytes_atomic

    write_bytes_atomic(path, bytes(blob))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {blob[:5]!r}", offset=0)
    off = 5

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"{path}: truncated checkpoint", offset=off)
        chunk = blob[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape)) if rank else 1
        payload = take(4 * size)
        state[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes after last entry", offset=off)
    return state
