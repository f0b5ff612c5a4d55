import math

import numpy as np
import pytest

from conncrack import connmaps as cm
from conncrack.errors import ConfigurationError, DimensionError, FormatError
from conncrack.nn.gradcheck import fd_gradient, max_rel_err


def neighbor_union(mask: np.ndarray) -> np.ndarray:
    """Oracle: pixels having at least one crack 8-neighbor."""
    out = np.zeros_like(mask)
    for off in cm.DIRECTIONS:
        out |= cm.shift(mask, off)
    return out


def strip_isolated(mask: np.ndarray) -> np.ndarray:
    """Oracle: mask minus crack pixels with no crack 8-neighbor."""
    return mask & neighbor_union(mask)


def all_3x3_masks():
    for bits in range(512):
        yield np.array([(bits >> i) & 1 for i in range(9)], dtype=np.uint8).reshape(3, 3)


# ------------------------------------------------------------------- encode


def test_all_zero_mask_encodes_to_all_zero_maps():
    maps = cm.encode(np.zeros((4, 4), dtype=np.uint8))
    assert maps.shape == (8, 4, 4)
    assert not maps.any()


def test_two_horizontal_pixels():
    maps = cm.encode(np.array([[1, 1]], dtype=np.uint8))
    east = cm.DIRECTION_NAMES.index("E")
    west = cm.DIRECTION_NAMES.index("W")
    assert maps[east, 0, 0] == 1 and maps[west, 0, 1] == 1
    total = maps.sum()
    assert total == 2  # nothing else set


def test_index_two_is_west_neighbor_rule():
    # 1-based channel 2 marks pixels whose left neighbor is also crack
    mask = np.array([[1, 1, 0]], dtype=np.uint8)
    maps = cm.encode(mask)
    assert cm.DIRECTION_NAMES[1] == "W"
    assert maps[1].tolist() == [[0, 1, 0]]


def test_isolated_center_pixel_encodes_to_zero():
    mask = np.zeros((3, 3), dtype=np.uint8)
    mask[1, 1] = 1
    assert not cm.encode(mask).any()


def test_encode_rejects_non_binary():
    with pytest.raises(ConfigurationError):
        cm.encode(np.array([[0, 2]], dtype=np.uint8))


def test_reciprocity_on_random_masks():
    rng = np.random.default_rng(5)
    for _ in range(50):
        mask = (rng.random((12, 12)) < 0.4).astype(np.uint8)
        maps = cm.encode(mask)
        for k, (dr, dc) in enumerate(cm.DIRECTIONS):
            opp = cm.opposite(k)
            h, w = mask.shape
            for r in range(h):
                for c in range(w):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        assert maps[k, r, c] == maps[opp, rr, cc]


# ------------------------------------------------------------------- decode


def test_decode_all_zero_maps():
    assert not cm.decode(np.zeros((8, 5, 5), dtype=np.float32)).any()


def test_roundtrip_exhaustive_3x3():
    for mask in all_3x3_masks():
        decoded = cm.decode(cm.encode(mask).astype(np.float32), 0.5)
        assert np.array_equal(decoded, strip_isolated(mask))


def test_roundtrip_random_16x16():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        mask = (rng.random((16, 16)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
        decoded = cm.decode(cm.encode(mask).astype(np.float32), 0.5)
        assert np.array_equal(decoded, strip_isolated(mask))


def test_roundtrip_is_identity_without_isolated_pixels():
    rng = np.random.default_rng(9)
    for _ in range(200):
        mask = strip_isolated((rng.random((8, 8)) < 0.5).astype(np.uint8))
        # every crack pixel of `mask` now has a crack neighbor
        decoded = cm.decode(cm.encode(mask).astype(np.float32), 0.5)
        assert np.array_equal(decoded, mask)


def test_reciprocal_mode_matches_plain_on_encoded_truth():
    rng = np.random.default_rng(11)
    for _ in range(100):
        mask = (rng.random((10, 10)) < 0.35).astype(np.uint8)
        maps = cm.encode(mask).astype(np.float32)
        assert np.array_equal(cm.decode(maps, 0.5), cm.decode(maps, 0.5, reciprocal=True))


def test_decode_validates_inputs():
    with pytest.raises(DimensionError):
        cm.decode(np.zeros((7, 4, 4)))
    with pytest.raises(ConfigurationError):
        cm.decode(np.zeros((8, 4, 4)), tau=0.0)


# --------------------------------------------------------------- content loss


def test_saturated_match_has_tiny_loss():
    y = np.array([[[1.0, 0.0], [0.0, 1.0]]] * 8, dtype=np.float32)
    z = np.where(y > 0, 30.0, -30.0).astype(np.float32)
    assert cm.content_loss(z, y).value < 1e-10


def test_zero_logits_give_ln2_for_any_target():
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = (rng.random((8, 4, 4)) < 0.5).astype(np.float32)
        value = cm.content_loss(np.zeros((8, 4, 4), dtype=np.float32), y).value
        assert value == pytest.approx(math.log(2), rel=1e-6)


def test_single_element_quarter_probability():
    # sigmoid(z) = 0.25 at z = ln(1/3); with y = 1 the loss is -ln 0.25
    z = np.full((1, 1, 1), math.log(1 / 3))
    y = np.ones((1, 1, 1))
    assert cm.content_loss(z, y, reduction="sum").value == pytest.approx(1.386294, abs=1e-6)


def test_sum_reduction_is_elementcount_times_mean():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((8, 3, 3))
    y = (rng.random((8, 3, 3)) < 0.5).astype(np.float64)
    mean = cm.content_loss(z, y, "mean")
    total = cm.content_loss(z, y, "sum")
    assert total.value == pytest.approx(mean.value * z.size, rel=1e-12)
    np.testing.assert_allclose(total.gradient, mean.gradient * z.size, rtol=1e-12)


def test_loss_nonnegative_and_positive_off_saturation():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((8, 4, 4))
    y = (rng.random((8, 4, 4)) < 0.5).astype(np.float64)
    assert cm.content_loss(z, y).value > 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    z = rng.standard_normal((8, 4, 4))
    y = (rng.random((8, 4, 4)) < 0.5).astype(np.float64)
    for reduction in ("mean", "sum"):
        analytic = cm.content_loss(z, y, reduction).gradient
        fd = fd_gradient(lambda: cm.content_loss(z, y, reduction).value, z, step=1e-3)
        assert max_rel_err(analytic, fd) < 1e-5


def test_shape_mismatch_rejected():
    with pytest.raises(DimensionError):
        cm.content_loss(np.zeros((8, 2, 2)), np.zeros((8, 3, 3)))


def test_probability_domain_loss_clamps():
    y = np.ones((8, 2, 2))
    val = cm.content_loss_probs(np.zeros((8, 2, 2)), y)  # p = 0 would be log(0)
    assert np.isfinite(val) and val > 0


# ------------------------------------------------------------------ CMAP1 IO


def test_map_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    maps = rng.random((8, 6, 5)).astype(np.float32)
    path = tmp_path / "maps.cmap"
    cm.save_maps(path, maps)
    loaded = cm.load_maps(path)
    assert np.array_equal(loaded, maps)
    header = path.read_bytes()[:5]
    assert header == b"CMAP1"


def test_map_dump_rejects_truncation(tmp_path):
    maps = np.zeros((8, 4, 4), dtype=np.float32)
    path = tmp_path / "maps.cmap"
    cm.save_maps(path, maps)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(FormatError):
        cm.load_maps(path)
