import numpy as np
import pytest

from conncrack.connmaps import encode
from conncrack.data import (DatasetManifest, ManifestEntry, SynthSpec,
                            generate_synthetic_dataset, load_image,
                            load_manifest, load_mask, load_pnm, patch_dataset,
                            patch_origins, save_image, save_manifest, save_pgm,
                            save_ppm, split_manifest, synth_sample)
from conncrack.errors import ConfigurationError, DimensionError, FormatError


# -------------------------------------------------------------------- splits


def test_600_items_split_420_60_120():
    items = [(f"i{k}.ppm", f"m{k}.pgm") for k in range(600)]
    manifest = split_manifest(items, seed=3)
    assert len(manifest.for_split("train")) == 420
    assert len(manifest.for_split("val")) == 60
    assert len(manifest.for_split("test")) == 120


def test_10_items_split_7_1_2():
    items = [(f"i{k}", f"m{k}") for k in range(10)]
    manifest = split_manifest(items, seed=0)
    counts = [len(manifest.for_split(s)) for s in ("train", "val", "test")]
    assert counts == [7, 1, 2]


def test_split_is_deterministic_and_seed_sensitive():
    items = [(f"i{k}", f"m{k}") for k in range(50)]
    a = split_manifest(items, seed=9)
    b = split_manifest(items, seed=9)
    c = split_manifest(items, seed=10)
    assert a.entries == b.entries
    assert a.entries != c.entries


def test_split_partitions_items():
    items = [(f"i{k}", f"m{k}") for k in range(37)]
    manifest = split_manifest(items, seed=1)
    seen = sorted(e.image for e in manifest.entries)
    assert seen == sorted(i for i, _ in items)


def test_split_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        split_manifest([], seed=0)
    with pytest.raises(ConfigurationError):
        split_manifest([("a", "b")], ratios=(0.5, 0.2, 0.2), seed=0)


def test_manifest_jsonl_roundtrip(tmp_path):
    manifest = DatasetManifest(
        (ManifestEntry("a.ppm", "a.pgm", "train"), ManifestEntry("b.ppm", "b.pgm", "test")),
        seed=5)
    path = tmp_path / "manifest.jsonl"
    save_manifest(path, manifest)
    loaded = load_manifest(path)
    assert loaded == manifest
    path.write_text("not json\n")
    with pytest.raises(FormatError):
        load_manifest(path)


# ----------------------------------------------------------------- synthetic


def test_synth_is_deterministic_in_seed_and_index():
    spec = SynthSpec(seed=4)
    a_img, a_mask = synth_sample(spec, 7)
    b_img, b_mask = synth_sample(spec, 7)
    assert np.array_equal(a_img, b_img) and np.array_equal(a_mask, b_mask)
    c_img, _ = synth_sample(spec, 8)
    assert not np.array_equal(a_img, c_img)


def test_synth_zero_cracks_gives_empty_mask():
    spec = SynthSpec(crack_count=(0, 0), seed=1)
    for i in range(5):
        image, mask = synth_sample(spec, i)
        assert not mask.any()
        assert image.shape == (3, 64, 64) and image.dtype == np.float32


def test_synth_mask_area_within_declared_bounds():
    spec = SynthSpec(seed=2)
    lo, hi = spec.mask_area_bounds()
    for i in range(200):
        _, mask = synth_sample(spec, i)
        assert lo <= int(mask.sum()) <= hi, f"sample {i}: {mask.sum()} not in [{lo}, {hi}]"


def test_synth_cracks_are_dark_and_labeled():
    image, mask = synth_sample(SynthSpec(seed=6), 0)
    assert mask.any()
    gray = image.mean(axis=0)
    assert gray[mask == 1].mean() < gray[mask == 0].mean() - 0.2


def test_synth_spec_validation():
    with pytest.raises(ConfigurationError):
        SynthSpec(crack_count=(3, 1)).validate()
    with pytest.raises(ConfigurationError):
        SynthSpec(thickness=(0, 1)).validate()
    with pytest.raises(ConfigurationError):
        SynthSpec(height=4).validate()


# -------------------------------------------------------------------- codecs


def test_pgm_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    gray = rng.integers(0, 256, size=(13, 17), dtype=np.uint8)
    path = tmp_path / "img.pgm"
    save_pgm(path, gray)
    again = load_pnm(path)
    assert np.array_equal(again, gray)
    save_pgm(tmp_path / "twice.pgm", again)
    assert (tmp_path / "twice.pgm").read_bytes() == path.read_bytes()


def test_ppm_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    rgb = rng.integers(0, 256, size=(5, 9, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    save_ppm(path, rgb)
    assert np.array_equal(load_pnm(path), rgb)


def test_one_by_one_white_ppm(tmp_path):
    path = tmp_path / "white.ppm"
    save_ppm(path, np.full((1, 1, 3), 255, dtype=np.uint8))
    assert load_pnm(path).tolist() == [[[255, 255, 255]]]


def test_pnm_header_with_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
    assert load_pnm(path).tolist() == [[0, 255]]


def test_truncated_pnm_is_format_error(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(FormatError) as err:
        load_pnm(path)
    assert err.value.offset is not None


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        load_pnm(path)


def test_load_image_normalizes_and_replicates_gray(tmp_path):
    path = tmp_path / "g.pgm"
    save_pgm(path, np.array([[0, 128], [255, 64]], dtype=np.uint8))
    image = load_image(path)
    assert image.shape == (3, 2, 2) and image.dtype == np.float32
    assert image[0, 1, 0] == pytest.approx(1.0)
    np.testing.assert_array_equal(image[0], image[1])


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    image = rng.random((3, 6, 7)).astype(np.float32)
    path = tmp_path / "img.png"
    save_image(path, image)
    again = load_image(path)
    assert again.shape == (3, 6, 7)
    assert np.abs(again - image).max() <= 1 / 255 + 1e-6


def test_load_mask_thresholds_nonzero(tmp_path):
    path = tmp_path / "m.pgm"
    save_pgm(path, np.array([[0, 1], [128, 255]], dtype=np.uint8))
    assert load_mask(path).tolist() == [[0, 1], [1, 1]]


# ------------------------------------------------------------- patch dataset


def _write_pair(tmp_path, name, image, mask):
    img_path = tmp_path / f"{name}.ppm"
    mask_path = tmp_path / f"{name}.pgm"
    save_image(img_path, image)
    save_pgm(mask_path, mask * 255)
    return str(img_path), str(mask_path)


def test_patch_counts_for_aligned_image(tmp_path):
    rng = np.random.default_rng(3)
    image = rng.random((3, 256, 256)).astype(np.float32)
    mask = (rng.random((256, 256)) < 0.1).astype(np.uint8)
    item = _write_pair(tmp_path, "a", image, mask)
    manifest = DatasetManifest((ManifestEntry(*item, "train"),), seed=0)
    patches = list(patch_dataset(manifest, 128, 128))
    assert len(patches) == 4
    patch, maps = patches[0]
    assert patch.shape == (3, 128, 128) and maps.shape == (8, 128, 128)


def test_patch_gt_is_crop_then_encode(tmp_path):
    rng = np.random.default_rng(4)
    image = rng.random((3, 64, 64)).astype(np.float32)
    mask = (rng.random((64, 64)) < 0.3).astype(np.uint8)
    item = _write_pair(tmp_path, "b", image, mask)
    manifest = DatasetManifest((ManifestEntry(*item, "train"),), seed=0)
    patches = list(patch_dataset(manifest, 32, 32))
    assert len(patches) == 4
    full = encode(mask).astype(np.float32)
    for idx, (r, c) in enumerate(((0, 0), (0, 32), (32, 0), (32, 32))):
        _, maps = patches[idx]
        crop_then_encode = encode(mask[r:r + 32, c:c + 32]).astype(np.float32)
        np.testing.assert_array_equal(maps, crop_then_encode)
        # dual-order oracle: both orders agree except at the crop border
        encode_then_crop = full[:, r:r + 32, c:c + 32]
        np.testing.assert_array_equal(maps[:, 1:-1, 1:-1], encode_then_crop[:, 1:-1, 1:-1])


def test_crack_only_keep_rule(tmp_path):
    image = np.zeros((3, 64, 64), dtype=np.float32)
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[2:5, 2:5] = 1  # only the first 32x32 patch has cracks
    item = _write_pair(tmp_path, "c", image, mask)
    manifest = DatasetManifest((ManifestEntry(*item, "train"),), seed=0)
    assert len(list(patch_dataset(manifest, 32, 32, keep_rule="crack-only"))) == 1
    assert len(list(patch_dataset(manifest, 32, 32))) == 4


def test_empty_manifest_yields_nothing():
    manifest = DatasetManifest((), seed=0)
    assert list(patch_dataset(manifest, 32)) == []


def test_patch_origins_tail_clamped():
    assert patch_origins(64, 32, 32) == [0, 32]
    assert patch_origins(70, 32, 32) == [0, 32, 38]
    with pytest.raises(DimensionError):
        patch_origins(16, 32, 32)


def test_generate_synthetic_dataset(tmp_path):
    spec = SynthSpec(seed=8)
    manifest = generate_synthetic_dataset(spec, 10, tmp_path)
    assert len(manifest.entries) == 10
    assert (tmp_path / "manifest.jsonl").exists()
    reloaded = load_manifest(tmp_path / "manifest.jsonl")
    assert reloaded == manifest
    image = load_image(manifest.entries[0].image)
    mask = load_mask(manifest.entries[0].mask)
    assert image.shape == (3, 64, 64) and mask.shape == (64, 64)
