"""Tolerance-based segmentation metrics, region heat-grids, edge baselines.

A predicted crack pixel counts as a true positive when some ground-truth
crack pixel lies within Euclidean distance ``tol`` (integer offsets dy, dx
with dy^2 + dx^2 <= tol^2, so the test is exact); a ground-truth pixel with
no predicted pixel within the same distance is a false negative.  Matching is
many-to-one.  At tol = 0 this degenerates to plain pixel-set precision/recall.

Conventions for empty masks: with no predicted positives, precision is 0 when
ground truth is nonempty and P = R = F1 = 1 when both masks are empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connmaps import shift
from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    tolerance_px: float


def disk_offsets(tol: float) -> list[tuple[int, int]]:
    """Integer (dy, dx) with dy^2 + dx^2 <= tol^2."""
    r = int(math.floor(tol))
    t2 = tol * tol
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if dy * dy + dx * dx <= t2]


def dilate_disk(mask: np.ndarray, tol: float) -> np.ndarray:
    """Pixels within Euclidean distance tol of a set pixel (exact, via shifts)."""
    mask = mask.astype(bool)
    out = np.zeros_like(mask)
    for off in disk_offsets(tol):
        out |= shift(mask, off)
    return out


def _scores(tp: int, fp: int, fn: int, gt_empty: bool) -> tuple[float, float, float]:
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if gt_empty else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0  # tp+fn == 0 iff gt is empty
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def tolerance_metrics(pred: np.ndarray, gt: np.ndarray, tol: float = 5.0) -> MetricsReport:
    """Tolerance-matched TP/FP/FN and precision/recall/F1."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise DimensionError(f"pred {pred.shape} and gt {gt.shape} must be equal 2-D shapes")
    if tol < 0:
        raise ConfigurationError(f"tolerance must be >= 0, got {tol}")
    predb = pred != 0
    gtb = gt != 0
    near_gt = dilate_disk(gtb, tol)
    near_pred = dilate_disk(predb, tol)
    tp = int(np.count_nonzero(predb & near_gt))
    fp = int(np.count_nonzero(predb & ~near_gt))
    fn = int(np.count_nonzero(gtb & ~near_pred))
    precision, recall, f1 = _scores(tp, fp, fn, gt_empty=not gtb.any())
    return MetricsReport(tp, fp, fn, precision, recall, f1, tol)


@dataclass(frozen=True)
class RegionGrid:
    """Per-cell metrics; ``None`` marks cells where GT and prediction are both
    empty (the "no cracks here" case, rendered gray in heat maps)."""

    rows: int
    cols: int
    cells: tuple[tuple[MetricsReport | None, ...], ...]


def grid_cell_bounds(extent: int, cells: int) -> list[tuple[int, int]]:
    """Split an extent into `cells` spans; remainder pixels go to the last."""
    base = extent // cells
    bounds = [(i * base, (i + 1) * base) for i in range(cells)]
    bounds[-1] = (bounds[-1][0], extent)
    return bounds


def region_grid(pred: np.ndarray, gt: np.ndarray, rows: int = 9, cols: int = 16,
                tol: float = 5.0) -> RegionGrid:
    """Tolerance metrics per grid cell, matching only within the cell."""
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {pred.shape} != gt {gt.shape}")
    h, w = pred.shape
    row_bounds = grid_cell_bounds(h, rows)
    col_bounds = grid_cell_bounds(w, cols)
    cells = []
    for r0, r1 in row_bounds:
        row = []
        for c0, c1 in col_bounds:
            p = pred[r0:r1, c0:c1]
            g = gt[r0:r1, c0:c1]
            if not (p.any() or g.any()):
                row.append(None)
            else:
                row.append(tolerance_metrics(p, g, tol))
        cells.append(tuple(row))
    return RegionGrid(rows, cols, tuple(cells))


def region_grid_csv(grid: RegionGrid, metric: str = "f1") -> str:
    lines = []
    for row in grid.cells:
        vals = []
        for cell in row:
            vals.append("" if cell is None else f"{getattr(cell, metric):.4f}")
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- baselines

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def to_gray(image: np.ndarray) -> np.ndarray:
    """(3, H, W) or (H, W) -> luminance (H, W) float64."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[0] == 3:
        r, g, b = image
        return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    raise DimensionError(f"expected (3, H, W) or (H, W), got {image.shape}")


def _conv3_reflect(gray: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(gray, 1, mode="symmetric")
    out = np.zeros_like(gray)
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * padded[i:i + gray.shape[0], j:j + gray.shape[1]]
    return out


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _conv3_reflect(gray, SOBEL_X), _conv3_reflect(gray, SOBEL_X.T)


def sobel_baseline(image: np.ndarray, threshold: float) -> np.ndarray:
    """Mask of pixels whose Sobel gradient magnitude reaches ``threshold``.

    For float images in [0, 1] the magnitude ranges roughly over [0, ~5.7].
    """
    gx, gy = sobel_gradients(to_gray(image))
    return (np.hypot(gx, gy) >= threshold).astype(np.uint8)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return gray.copy()
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    padded = np.pad(gray, ((r, r), (0, 0)), mode="symmetric")
    out = sum(k[i] * padded[i:i + gray.shape[0], :] for i in range(len(k)))
    padded = np.pad(out, ((0, 0), (r, r)), mode="symmetric")
    return sum(k[i] * padded[:, i:i + gray.shape[1]] for i in range(len(k)))


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are local maxima along the quantized gradient direction."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # neighbor offsets per direction bin: 0 = E/W, 45 = NE/SW, 90 = N/S, 135 = NW/SE
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((22.5 <= angle) & (angle < 67.5), (1, 1)),
        ((67.5 <= angle) & (angle < 112.5), (1, 0)),
        ((112.5 <= angle) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros(mag.shape, dtype=bool)
    for sel, (dr, dc) in bins:
        fwd = shift(mag, (dr, dc))
        bwd = shift(mag, (-dr, -dc))
        # strict test on the backward side breaks plateau ties, keeping a
        # symmetric step edge one pixel wide
        keep |= sel & (mag >= fwd) & (mag > bwd)
    return keep


def canny_baseline(image: np.ndarray, low: float, high: float, sigma: float = 1.0) -> np.ndarray:
    """Gaussian smooth -> Sobel -> non-maximum suppression -> hysteresis."""
    if low > high:
        raise ConfigurationError(f"low threshold {low} exceeds high {high}")
    gray = gaussian_blur(to_gray(image), sigma)
    gx, gy = sobel_gradients(gray)
    mag = np.hypot(gx, gy)
    ridge = _non_maximum_suppression(mag, gx, gy)
    strong = ridge & (mag >= high)
    weak = ridge & (mag >= low)
    # grow strong edges through weak pixels (8-connected) to a fixed point
    mask = strong.copy()
    while True:
        grown = weak & (dilate_disk(mask, 1.5) | mask)
        if np.array_equal(grown, mask):
            break
        mask = grown
    return mask.astype(np.uint8)


def best_threshold_f1(image: np.ndarray, gt: np.ndarray, thresholds, tol: float = 5.0,
                      detector=sobel_baseline) -> tuple[float, float]:
    """(best F1, threshold at which it occurs) over a threshold sweep."""
    best = (0.0, float(thresholds[0]))
    for t in thresholds:
        rep = tolerance_metrics(detector(image, float(t)), gt, tol)
        if rep.f1 > best[0]:
            best = (rep.f1, float(t))
    return best


# ----------------------------------------------------------------- reports


def report_table(rows: list[tuple[str, MetricsReport, float]]) -> str:
    """CSV of (name, metrics, seconds per image) rows."""
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["name", "precision", "recall", "f1", "sec_per_image"])
    for name, rep, sec in rows:
        writer.writerow([name, f"{rep.precision:.6f}", f"{rep.recall:.6f}",
                         f"{rep.f1:.6f}", f"{sec:.6f}"])
    return buf.getvalue()
