"""Whole-image detection: tile, run the generator, stitch, decode, filter.

The image is reflect-padded right/bottom so a stride grid of patches covers it
exactly; per-tile map stacks are averaged where tiles overlap, the padding is
cropped away, and only then are the maps thresholded into a mask.  Decoding
after stitching means tile seams can never sever a connected component.
Components are labeled by an explicit-stack depth-first search under
8-connectivity and small ones are dropped: cracks span many pixels, isolated
noise does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connmaps import N_MAPS, decode
from .errors import ConfigurationError, DimensionError
from .nn.graph import ModelGraph


@dataclass(frozen=True)
class TilePlan:
    patch_size: int
    overlap: int
    image_h: int
    image_w: int
    padded_h: int
    padded_w: int
    origins: tuple[tuple[int, int], ...]  # row-major (row, col) into the padded image

    @property
    def stride(self) -> int:
        return self.patch_size - self.overlap


def plan_tiles(height: int, width: int, patch_size: int, overlap: int = 0) -> TilePlan:
    """Stride grid of patch origins covering a padded (height, width) image."""
    if patch_size < 8:
        raise ConfigurationError(f"patch size must be >= 8, got {patch_size}")
    if not 0 <= overlap < patch_size:
        raise ConfigurationError(f"overlap must lie in [0, patch), got {overlap}")
    if height < 1 or width < 1:
        raise ConfigurationError(f"image extents must be positive, got {height}x{width}")
    stride = patch_size - overlap

    def axis(extent: int) -> tuple[int, int]:
        n = 1 if extent <= patch_size else -(-(extent - patch_size) // stride) + 1
        return n, patch_size + (n - 1) * stride

    n_rows, padded_h = axis(height)
    n_cols, padded_w = axis(width)
    origins = tuple((i * stride, j * stride) for i in range(n_rows) for j in range(n_cols))
    return TilePlan(patch_size, overlap, height, width, padded_h, padded_w, origins)


def pad_reflect(arr: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Reflect-pad the last two axes on the right/bottom only.

    Reflection is applied in chunks no larger than the current extent, so
    images smaller than a patch can still be padded up to size.
    """
    while pad_h > 0 or pad_w > 0:
        ph = min(pad_h, arr.shape[-2])
        pw = min(pad_w, arr.shape[-1])
        pads = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
        arr = np.pad(arr, pads, mode="symmetric")
        pad_h -= ph
        pad_w -= pw
    return arr


def split_tiles(arr: np.ndarray, plan: TilePlan) -> list[np.ndarray]:
    """Cut (C, H, W) into patches per plan (pads first)."""
    if arr.shape[-2:] != (plan.image_h, plan.image_w):
        raise DimensionError(f"array {arr.shape} does not match plan "
                             f"{plan.image_h}x{plan.image_w}")
    padded = pad_reflect(arr, plan.padded_h - plan.image_h, plan.padded_w - plan.image_w)
    p = plan.patch_size
    return [np.ascontiguousarray(padded[..., r:r + p, c:c + p]) for r, c in plan.origins]


def stitch(tiles: list[np.ndarray], plan: TilePlan) -> np.ndarray:
    """Reassemble per-tile (8, p, p) map stacks; overlaps are averaged."""
    if len(tiles) != len(plan.origins):
        raise DimensionError(f"{len(tiles)} tiles for {len(plan.origins)} origins")
    p = plan.patch_size
    acc = np.zeros((N_MAPS, plan.padded_h, plan.padded_w), dtype=np.float64)
    cnt = np.zeros((plan.padded_h, plan.padded_w), dtype=np.float64)
    for tile, (r, c) in zip(tiles, plan.origins):
        if tile.shape != (N_MAPS, p, p):
            raise DimensionError(f"tile shape {tile.shape}, expected {(N_MAPS, p, p)}")
        acc[:, r:r + p, c:c + p] += tile
        cnt[r:r + p, c:c + p] += 1.0
    acc /= cnt  # every padded pixel is covered by >= 1 tile
    return acc[:, :plan.image_h, :plan.image_w].astype(np.float32)


@dataclass
class ComponentSet:
    """8-connected components of a binary mask.

    ``labels`` is -1 for background and the 0-based component id otherwise;
    ids are assigned row-major by each component's first pixel.
    """

    shape: tuple[int, int]
    labels: np.ndarray
    areas: list[int]

    def __len__(self) -> int:
        return len(self.areas)


_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def dfs_components(mask: np.ndarray) -> ComponentSet:
    """Label 8-connected components with an explicit-stack DFS."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got {mask.shape}")
    h, w = mask.shape
    crack = mask != 0
    labels = np.full((h, w), -1, dtype=np.int32)
    areas: list[int] = []
    for r0 in range(h):
        for c0 in range(w):
            if not crack[r0, c0] or labels[r0, c0] >= 0:
                continue
            comp = len(areas)
            stack = [(r0, c0)]
            labels[r0, c0] = comp
            area = 0
            while stack:
                r, c = stack.pop()
                area += 1
                for dr, dc in _NEIGHBORS:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and crack[rr, cc] and labels[rr, cc] < 0:
                        labels[rr, cc] = comp
                        stack.append((rr, cc))
            areas.append(area)
    return ComponentSet((h, w), labels, areas)


def area_filter(components: ComponentSet, min_area: int) -> np.ndarray:
    """Mask containing only components with area >= min_area."""
    if min_area < 0:
        raise ConfigurationError(f"min_area must be >= 0, got {min_area}")
    keep = np.array([a >= min_area for a in components.areas], dtype=bool)
    if not keep.any():
        return np.zeros(components.shape, dtype=np.uint8)
    mask = np.zeros(components.shape, dtype=np.uint8)
    sel = components.labels >= 0
    mask[sel] = keep[components.labels[sel]].astype(np.uint8)
    return mask


@dataclass(frozen=True)
class DetectParams:
    patch_size: int = 256
    overlap: int = 0
    tau: float = 0.5
    min_area: int = 200
    reciprocal_decode: bool = False


@dataclass
class DetectResult:
    mask: np.ndarray
    maps: np.ndarray
    components_total: int
    components_kept: int
    areas: list[int]


def detect(image: np.ndarray, generator: ModelGraph, params: DetectParams) -> DetectResult:
    """Full-image crack detection with a trained generator.

    ``image`` is float (3, H, W) in [0, 1].  Deterministic for fixed inputs.
    """
    if image.ndim != 3:
        raise DimensionError(f"image must be (C, H, W), got {image.shape}")
    plan = plan_tiles(image.shape[1], image.shape[2], params.patch_size, params.overlap)
    tiles = [generator.forward({"image": tile}) for tile in split_tiles(image, plan)]
    maps = stitch(tiles, plan)
    raw_mask = decode(maps, params.tau, reciprocal=params.reciprocal_decode)
    components = dfs_components(raw_mask)
    mask = area_filter(components, params.min_area)
    kept = sum(1 for a in components.areas if a >= params.min_area)
    return DetectResult(mask, maps, len(components), kept, list(components.areas))
