"""Dataset manifests, image codecs, deterministic splits, synthetic cracks.

Images move through the package as float32 (3, H, W) in [0, 1]; masks as
uint8 (H, W) in {0, 1}.  PGM/PPM round trips are bit-exact; PNG (8-bit) is
delegated to Pillow.

The synthetic generator draws cracks as thickness-dilated random walks (dark
strokes) over a textured background with optional shadow bands and dark
blotches; the mask is the exact stroke support, so blotches and shadows are
distractors, not labels.  Every sample is fully determined by (seed, index).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .connmaps import encode
from .errors import ConfigurationError, DimensionError, FormatError
from .ioutil import write_bytes_atomic, write_text_atomic

SPLITS = ("train", "val", "test")


# ------------------------------------------------------------------ manifests


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    mask: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    seed: int

    def for_split(self, split: str) -> list[ManifestEntry]:
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]


def split_manifest(items: list[tuple[str, str]], ratios=(0.70, 0.10, 0.20),
                   seed: int = 0) -> DatasetManifest:
    """Deterministic shuffle + split into train/val/test.

    Val and test counts are the rounded ratios; the remainder goes to train
    (600 items at the default ratios -> 420/60/120).
    """
    if not items:
        raise ConfigurationError("cannot split an empty item list")
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ConfigurationError(f"ratios must be 3 values summing to 1, got {ratios}")
    n = len(items)
    n_val = round(ratios[1] * n)
    n_test = round(ratios[2] * n)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 0:
        raise ConfigurationError(f"ratios {ratios} give negative split counts for n={n}")
    order = np.random.default_rng(seed).permutation(n)
    tags = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    entries = tuple(ManifestEntry(items[int(i)][0], items[int(i)][1], tag)
                    for i, tag in zip(order, tags))
    return DatasetManifest(entries, seed)


def save_manifest(path, manifest: DatasetManifest) -> None:
    lines = [json.dumps({"_seed": manifest.seed})]
    lines += [json.dumps(asdict(e)) for e in manifest.entries]
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_manifest(path) -> DatasetManifest:
    entries = []
    seed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
            if "_seed" in obj:
                seed = int(obj["_seed"])
                continue
            entries.append(ManifestEntry(obj["image"], obj["mask"], obj["split"]))
    return DatasetManifest(tuple(entries), seed)


# -------------------------------------------------------------- PGM/PPM codec


def _encode_pnm(arr: np.ndarray, magic: bytes) -> bytes:
    height, width = arr.shape[0], arr.shape[1]
    header = magic + b"\n%d %d\n255\n" % (width, height)
    return header + arr.astype(np.uint8).tobytes()


def save_pgm(path, gray: np.ndarray) -> None:
    if gray.ndim != 2:
        raise DimensionError(f"PGM wants (H, W), got {gray.shape}")
    write_bytes_atomic(path, _encode_pnm(gray, b"P5"))


def save_ppm(path, rgb_hwc: np.ndarray) -> None:
    if rgb_hwc.ndim != 3 or rgb_hwc.shape[2] != 3:
        raise DimensionError(f"PPM wants (H, W, 3), got {rgb_hwc.shape}")
    write_bytes_atomic(path, _encode_pnm(rgb_hwc, b"P6"))


def _parse_pnm(blob: bytes, path) -> np.ndarray:
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM (magic {magic!r})", offset=0)
    pos = 2
    fields: list[int] = []

    def fail(msg: str):
        raise FormatError(f"{path}: {msg}", offset=pos)

    while len(fields) < 3:
        if pos >= len(blob):
            fail("header ended early")
        ch = blob[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            fail(f"unexpected header byte {ch!r}")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        fail("missing whitespace after maxval")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        fail(f"only maxval 255 supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = blob[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated ({len(payload)} of {need} bytes)",
                          offset=pos + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()


def load_pnm(path) -> np.ndarray:
    """(H, W) for PGM, (H, W, 3) for PPM, uint8."""
    with open(path, "rb") as fh:
        return _parse_pnm(fh.read(), path)


# ------------------------------------------------------------ image load/save


def _u8_from_float(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Any supported image -> float32 (3, H, W) in [0, 1]; gray is replicated."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        arr = load_pnm(path)
    else:
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=2)
    chw = arr.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    return np.ascontiguousarray(chw)


def save_image(path, image: np.ndarray) -> None:
    """float (3, H, W) or (H, W) in [0, 1] -> PGM/PPM/PNG by extension."""
    path = Path(path)
    image = np.asarray(image)
    if image.ndim == 3:
        u8 = _u8_from_float(image).transpose(1, 2, 0)
    elif image.ndim == 2:
        u8 = _u8_from_float(image)
    else:
        raise DimensionError(f"image must be (3, H, W) or (H, W), got {image.shape}")
    ext = path.suffix.lower()
    if ext == ".pgm":
        save_pgm(path, u8 if u8.ndim == 2 else _u8_from_float(image.mean(axis=0)))
    elif ext in (".ppm", ".pnm"):
        save_ppm(path, u8 if u8.ndim == 3 else np.stack([u8] * 3, axis=2))
    elif ext == ".png":
        from PIL import Image

        import io as _io

        buf = _io.BytesIO()
        Image.fromarray(u8).save(buf, format="PNG")
        write_bytes_atomic(path, buf.getvalue())
    else:
        raise ConfigurationError(f"unsupported image extension {ext!r}")


def load_mask(path) -> np.ndarray:
    """Grayscale image -> {0,1} uint8 mask (any nonzero value is crack)."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        arr = load_pnm(path)
    else:
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return (arr != 0).astype(np.uint8)


def save_mask(path, mask: np.ndarray) -> None:
    save_image(path, mask.astype(np.float32))


# ------------------------------------------------------------ synthetic data


@dataclass(frozen=True)
class SynthSpec:
    height: int = 64
    width: int = 64
    crack_count: tuple[int, int] = (1, 2)
    walk_steps: tuple[int, int] = (24, 48)
    step_px: float = 1.0
    turn_sigma_deg: float = 14.0
    thickness: tuple[int, int] = (2, 3)
    background_level: float = 0.62
    texture_amp: float = 0.05
    # dark aggregate specks: crack-contrast gradients scattered everywhere,
    # so a pure edge detector cannot threshold cracks apart from texture
    speck_count: tuple[int, int] = (30, 60)
    crack_level: float = 0.18
    blotch_prob: float = 0.35
    shadow_prob: float = 0.35
    seed: int = 0

    def validate(self) -> "SynthSpec":
        if self.height < 8 or self.width < 8:
            raise ConfigurationError("synthetic images must be at least 8x8")
        for lo, hi, what in ((self.crack_count + ("crack_count",)),
                             (self.walk_steps + ("walk_steps",)),
                             (self.speck_count + ("speck_count",)),
                             (self.thickness + ("thickness",))):
            if lo > hi or lo < 0:
                raise ConfigurationError(f"empty {what} range ({lo}, {hi})")
        if self.thickness[0] < 1:
            raise ConfigurationError("stroke thickness must be >= 1 px")
        if self.step_px <= 0:
            raise ConfigurationError("step length must be > 0")
        return self

    def mask_area_bounds(self) -> tuple[int, int]:
        """Declared (lower, upper) bound on mask pixel count of any sample.

        Upper: every stamp of every longest/thickest crack lands on fresh
        pixels.  Lower: with bounded per-step turns a walk of n steps covers
        at least n/4 + 1 distinct pixels; generously conservative.
        """
        stamp = 2 * (self.thickness[1] // 2) + 1
        hi = self.crack_count[1] * (self.walk_steps[1] + 1) * stamp * stamp
        lo = self.crack_count[0] * (self.walk_steps[0] // 4 + 1) if self.crack_count[0] else 0
        return lo, hi


def _stamp(mask: np.ndarray, image: np.ndarray, r: int, c: int, radius: int,
           level: float) -> None:
    h, w = mask.shape
    r0, r1 = max(r - radius, 0), min(r + radius + 1, h)
    c0, c1 = max(c - radius, 0), min(c + radius + 1, w)
    mask[r0:r1, c0:c1] = 1
    image[:, r0:r1, c0:c1] = level


def synth_sample(spec: SynthSpec, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (image float32 (3, H, W), mask uint8 (H, W)) pair."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, index])
    h, w = spec.height, spec.width

    # textured background with a gentle illumination gradient
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    tilt = rng.uniform(-0.08, 0.08, size=2)
    base = (spec.background_level + tilt[0] * (yy / h - 0.5) + tilt[1] * (xx / w - 0.5))
    noise = rng.normal(0.0, spec.texture_amp, size=(h, w)).astype(np.float32)
    tint = rng.uniform(-0.02, 0.02, size=3).astype(np.float32)
    image = np.clip(base + noise, 0.05, 0.95)[None, :, :] + tint[:, None, None]

    if rng.random() < spec.shadow_prob:
        # soft-edged dark band across the image
        angle = rng.uniform(0, math.pi)
        offset = rng.uniform(0.25, 0.75)
        axis = (xx / w) * math.cos(angle) + (yy / h) * math.sin(angle)
        soft = 1.0 / (1.0 + np.exp((axis - offset) / 0.02))
        image *= (1.0 - 0.25 * soft)[None, :, :]

    if rng.random() < spec.blotch_prob:
        for _ in range(rng.integers(1, 3)):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            ry, rx = rng.uniform(2, h / 6), rng.uniform(2, w / 6)
            d2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
            image *= (1.0 - 0.30 * np.exp(-d2))[None, :, :]

    n_specks = int(rng.integers(spec.speck_count[0], spec.speck_count[1] + 1))
    for _ in range(n_specks):
        sr = int(rng.integers(0, h))
        sc = int(rng.integers(0, w))
        size = int(rng.integers(1, 3))
        level = spec.crack_level + rng.uniform(-0.05, 0.08)
        image[:, sr:sr + size, sc:sc + size] = level

    mask = np.zeros((h, w), dtype=np.uint8)
    n_cracks = int(rng.integers(spec.crack_count[0], spec.crack_count[1] + 1))
    for _ in range(n_cracks):
        steps = int(rng.integers(spec.walk_steps[0], spec.walk_steps[1] + 1))
        thickness = int(rng.integers(spec.thickness[0], spec.thickness[1] + 1))
        radius = thickness // 2
        margin = 2 + radius
        r = rng.uniform(margin, h - margin)
        c = rng.uniform(margin, w - margin)
        heading = rng.uniform(0, 2 * math.pi)
        level = spec.crack_level + rng.uniform(-0.04, 0.04)
        for _ in range(steps + 1):
            _stamp(mask, image, int(round(r)), int(round(c)), radius, level)
            heading += math.radians(rng.normal(0.0, spec.turn_sigma_deg))
            r += spec.step_px * math.sin(heading)
            c += spec.step_px * math.cos(heading)
            if not margin <= r < h - margin:
                heading = -heading          # reflect vertically
                r = min(max(r, margin), h - margin - 1e-6)
            if not margin <= c < w - margin:
                heading = math.pi - heading  # reflect horizontally
                c = min(max(c, margin), w - margin - 1e-6)

    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


def generate_synthetic_dataset(spec: SynthSpec, count: int, out_dir,
                               ratios=(0.70, 0.10, 0.20)) -> DatasetManifest:
    """Write ``count`` image/mask PPM+PGM pairs and a manifest.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(count):
        image, mask = synth_sample(spec, i)
        img_path = out / f"synth_{i:04d}.ppm"
        mask_path = out / f"synth_{i:04d}_mask.pgm"
        save_image(img_path, image)
        save_pgm(mask_path, mask * 255)
        items.append((str(img_path), str(mask_path)))
    manifest = split_manifest(items, ratios=ratios, seed=spec.seed)
    save_manifest(out / "manifest.jsonl", manifest)
    return manifest


# ------------------------------------------------------------- patch dataset


def patch_origins(extent: int, patch: int, stride: int) -> list[int]:
    """Stride-grid origins with a tail origin so the far edge is covered."""
    if extent < patch:
        raise DimensionError(f"extent {extent} smaller than patch {patch}")
    origins = list(range(0, extent - patch + 1, stride))
    if origins[-1] != extent - patch:
        origins.append(extent - patch)
    return origins


def patch_dataset(manifest: DatasetManifest, patch_size: int, stride: int | None = None,
                  keep_rule: str = "all", split: str | None = None):
    """Yield (patch float32 (3,p,p), gt_maps float32 (8,p,p)) pairs.

    Ground-truth maps are encoded from the cropped mask (crop-then-encode),
    so border pixels never claim connections outside the patch.
    ``keep_rule``: "all" or "crack-only" (drop all-negative patches).
    """
    if keep_rule not in ("all", "crack-only"):
        raise ConfigurationError(f"unknown keep_rule {keep_rule!r}")
    stride = patch_size if stride is None else stride
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    entries = manifest.entries if split is None else manifest.for_split(split)
    for entry in entries:
        image = load_image(entry.image)
        mask = load_mask(entry.mask)
        if image.shape[1:] != mask.shape:
            raise DimensionError(
                f"{entry.image}: image {image.shape[1:]} and mask {mask.shape} differ")
        for r in patch_origins(image.shape[1], patch_size, stride):
            for c in patch_origins(image.shape[2], patch_size, stride):
                sub_mask = mask[r:r + patch_size, c:c + patch_size]
                if keep_rule == "crack-only" and not sub_mask.any():
                    continue
                patch = np.ascontiguousarray(image[:, r:r + patch_size, c:c + patch_size])
                yield patch, encode(sub_mask).astype(np.float32)
