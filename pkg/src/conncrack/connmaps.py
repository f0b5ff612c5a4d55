"""Binary crack masks <-> 8-channel connectivity maps, plus the content loss.

Channel k of the encoding marks pixels that are crack AND whose k-direction
8-neighbor is crack.  Direction order is (NW, W, SW, N, S, NE, E, SE), so
channel index 1 is the West/left neighbor.  Out-of-bounds neighbors count as
non-crack, so border pixels never connect outward.

An isolated crack pixel (no crack 8-neighbor) encodes to all-zero channels and
is therefore unrecoverable: decode(encode(m)) equals m minus its isolated
pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

# (row offset, col offset) per channel; OPPOSITE[k] = 7 - k
DIRECTIONS: tuple[tuple[int, int], ...] = (
    (-1, -1),  # NW
    (0, -1),   # W
    (1, -1),   # SW
    (-1, 0),   # N
    (1, 0),    # S
    (-1, 1),   # NE
    (0, 1),    # E
    (1, 1),    # SE
)
DIRECTION_NAMES = ("NW", "W", "SW", "N", "S", "NE", "E", "SE")
N_MAPS = len(DIRECTIONS)


def opposite(k: int) -> int:
    return N_MAPS - 1 - k


def validate_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ConfigurationError("mask entries must be exactly 0 or 1")
    return mask.astype(np.uint8, copy=False)


def shift(arr: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    """out[p] = arr[p + offset], zero outside the array."""
    dr, dc = offset
    h, w = arr.shape[-2:]
    out = np.zeros_like(arr)
    if abs(dr) >= h or abs(dc) >= w:
        return out
    src_r = slice(max(dr, 0), h + min(dr, 0))
    dst_r = slice(max(-dr, 0), h + min(-dr, 0))
    src_c = slice(max(dc, 0), w + min(dc, 0))
    dst_c = slice(max(-dc, 0), w + min(-dc, 0))
    out[..., dst_r, dst_c] = arr[..., src_r, src_c]
    return out


def encode(mask: np.ndarray) -> np.ndarray:
    """Binary (H, W) mask -> (8, H, W) {0,1} connectivity maps."""
    mask = validate_mask(mask)
    maps = np.empty((N_MAPS,) + mask.shape, dtype=np.uint8)
    for k, off in enumerate(DIRECTIONS):
        maps[k] = mask & shift(mask, off)
    return maps


def decode(maps: np.ndarray, tau: float = 0.5, reciprocal: bool = False) -> np.ndarray:
    """(8, H, W) maps in [0,1] -> binary mask: crack iff max_k value >= tau.

    In reciprocal mode each channel is first reconciled with its opposite
    channel at the neighbor position (min of the pair), which suppresses
    one-sided predictions.
    """
    maps = np.asarray(maps)
    if maps.ndim != 3 or maps.shape[0] != N_MAPS:
        raise DimensionError(f"maps must be (8, H, W), got {maps.shape}")
    if not 0.0 < tau < 1.0:
        raise ConfigurationError(f"tau must lie in (0, 1), got {tau}")
    if reciprocal:
        rec = np.empty_like(maps)
        for k, off in enumerate(DIRECTIONS):
            rec[k] = np.minimum(maps[k], shift(maps[opposite(k)], off))
        maps = rec
    return (maps.max(axis=0) >= tau).astype(np.uint8)


@dataclass
class LossValue:
    """Scalar loss plus its gradient w.r.t. the predicted logits."""

    value: float
    gradient: np.ndarray


def content_loss(pred_logits: np.ndarray, target: np.ndarray,
                 reduction: str = "mean") -> LossValue:
    """Binary cross-entropy between map logits and {0,1} target maps.

    Computed in the with-logits form max(z,0) - z*y + log(1 + exp(-|z|)),
    which never evaluates log(0).  ``reduction`` is "mean" (default; keeps the
    loss scale independent of patch size) or "sum".  The gradient w.r.t. the
    logits is (sigmoid(z) - y), divided by the element count in mean mode.
    """
    z = np.asarray(pred_logits)
    y = np.asarray(target, dtype=z.dtype)
    if z.shape != y.shape:
        raise DimensionError(f"logits shape {z.shape} != target shape {y.shape}")
    if reduction not in ("mean", "sum"):
        raise ConfigurationError(f"unknown reduction {reduction!r}")
    per_elem = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    from .nn.functional import sigmoid

    grad = sigmoid(z) - y
    if reduction == "mean":
        n = z.dtype.type(z.size)
        return LossValue(float(per_elem.sum() / n), grad / n)
    return LossValue(float(per_elem.sum()), grad)


PROB_EPS = 1e-7


def content_loss_probs(pred_probs: np.ndarray, target: np.ndarray,
                       reduction: str = "mean") -> float:
    """Probability-domain variant (e.g. on decoded/sigmoid outputs).

    Probabilities are clamped to [1e-7, 1 - 1e-7]; no gradient is produced.
    """
    p = np.clip(np.asarray(pred_probs, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"probs shape {p.shape} != target shape {y.shape}")
    per_elem = -y * np.log(p) - (1.0 - y) * np.log1p(-p)
    return float(per_elem.mean() if reduction == "mean" else per_elem.sum())


# ------------------------------------------------------------ CMAP1 binary dump
#
# Layout: magic "CMAP1" | u32 LE dims 8, H, W | f32 LE payload (channel-major).

CMAP_MAGIC = b"CMAP1"


def save_maps(path, maps: np.ndarray) -> None:
    import struct

    from .ioutil import write_bytes_atomic

    maps = np.ascontiguousarray(maps, dtype="<f4")
    if maps.ndim != 3 or maps.shape[0] != N_MAPS:
        raise DimensionError(f"maps must be (8, H, W), got {maps.shape}")
    header = CMAP_MAGIC + struct.pack("<3I", *maps.shape)
    write_bytes_atomic(path, header + maps.tobytes())


def load_maps(path) -> np.ndarray:
    import struct

    from .errors import FormatError

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != CMAP_MAGIC:
        raise FormatError(f"{path}: bad map-dump magic {blob[:5]!r}", offset=0)
    if len(blob) < 17:
        raise FormatError(f"{path}: truncated map-dump header", offset=len(blob))
    c, h, w = struct.unpack("<3I", blob[5:17])
    if c != N_MAPS:
        raise FormatError(f"{path}: expected 8 channels, header says {c}", offset=5)
    expected = 17 + 4 * c * h * w
    if len(blob) != expected:
        raise FormatError(f"{path}: payload length {len(blob) - 17} != {4 * c * h * w}",
                          offset=min(len(blob), expected))
    return np.frombuffer(blob[17:], dtype="<f4").reshape(c, h, w).copy()
