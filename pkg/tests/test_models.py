import numpy as np
import pytest

from conncrack.errors import ConfigurationError, DimensionError
from conncrack.models import (CriticConfig, GeneratorConfig, build_critic,
                              build_generator, configs_from_json,
                              configs_to_json, critic_input,
                              critic_out_extent, generator_forward,
                              receptive_field)


def conv_extent(extent, kernel, stride, padding):
    return (extent + 2 * padding - kernel) // stride + 1


# ---------------------------------------------------------------- generator


def test_desk_generator_shape_and_range():
    g = build_generator(GeneratorConfig.desk(), seed=1)
    x = np.random.default_rng(0).random((3, 64, 64), dtype=np.float32)
    out = generator_forward(g, x)
    assert out.shape == (8, 64, 64)
    assert 0.0 < out.min() and out.max() < 1.0


def test_desk_generator_at_128():
    g = build_generator(GeneratorConfig.desk(), seed=1)
    x = np.random.default_rng(1).random((3, 128, 128), dtype=np.float32)
    out = generator_forward(g, x)
    assert out.shape == (8, 128, 128)
    assert 0.0 < out.min() and out.max() < 1.0


def test_paper_scale_generator_at_256():
    g = build_generator(GeneratorConfig(), seed=0)
    x = np.random.default_rng(2).random((3, 256, 256), dtype=np.float32)
    out = generator_forward(g, x)
    assert out.shape == (8, 256, 256)
    assert 0.0 < out.min() and out.max() < 1.0


def test_paper_scale_encoder_channel_walk():
    # stem 64 -> blocks of 6/12/24/16 components at growth 32 with halving
    # transitions: 256, 512, 1024, 1024 channels
    g = build_generator(GeneratorConfig(), seed=0)
    x = np.random.default_rng(3).random((3, 64, 64), dtype=np.float32)
    generator_forward(g, x)
    assert g.buffers["block1.out"].shape[0] == 256
    assert g.buffers["block2.out"].shape[0] == 512
    assert g.buffers["block3.out"].shape[0] == 1024
    assert g.buffers["block4.out"].shape[0] == 1024


def test_generator_feature_pyramid_extents():
    g = build_generator(GeneratorConfig.desk(), seed=1)
    x = np.zeros((3, 64, 64), dtype=np.float32)
    generator_forward(g, x)
    assert g.buffers["block2.out"].shape[1:] == (8, 8)    # 1/8
    assert g.buffers["block3.out"].shape[1:] == (4, 4)    # 1/16
    assert g.buffers["block4.out"].shape[1:] == (2, 2)    # 1/32
    assert g.buffers["logits"].shape == (8, 64, 64)


def test_shape_algebra_predicts_every_buffer_extent():
    # every node's extent formula must predict the runtime activation shape
    g = build_generator(GeneratorConfig.desk(), seed=2)
    x = np.zeros((3, 64, 96), dtype=np.float32)
    generator_forward(g, x)
    extents = {"image": (64, 96)}
    for node in g.nodes:
        predicted = node.out_extent(extents[node.inputs[0]])
        extents[node.output] = predicted
        assert g.buffers[node.output].shape[1:] == predicted, node.name


def test_same_seed_same_parameters():
    a = build_generator(GeneratorConfig.desk(), seed=5)
    b = build_generator(GeneratorConfig.desk(), seed=5)
    assert a.param_checksum() == b.param_checksum()
    c = build_generator(GeneratorConfig.desk(), seed=6)
    assert a.param_checksum() != c.param_checksum()


def test_generator_rejects_bad_extents():
    g = build_generator(GeneratorConfig.desk(), seed=1)
    with pytest.raises(DimensionError):
        generator_forward(g, np.zeros((3, 60, 64), dtype=np.float32))


def test_generator_config_validation():
    with pytest.raises(ConfigurationError):
        GeneratorConfig(block_components=(2, 2, 2)).validate()
    with pytest.raises(ConfigurationError):
        GeneratorConfig(growth_rate=0).validate()
    with pytest.raises(ConfigurationError):
        GeneratorConfig(fusion_taps=(1,)).validate()


def test_fusion_taps_configurable():
    cfg = GeneratorConfig(block_components=(1, 1, 1, 1), growth_rate=2,
                          stem_channels=4, head_channels=4, fusion_taps=())
    g = build_generator(cfg, seed=0)
    out = generator_forward(g, np.zeros((3, 32, 32), dtype=np.float32))
    assert out.shape == (8, 32, 32)
    assert not any(node.name.endswith(".proj") for node in g.nodes)


# ------------------------------------------------------------------- critic


def test_default_critic_markovian_grid():
    c = build_critic(CriticConfig(), seed=0)
    x = np.random.default_rng(3).random((11, 256, 256), dtype=np.float32)
    out = c.forward({"x": x})
    assert out.shape == (1, 30, 30)


def test_default_critic_receptive_field_is_70():
    assert receptive_field(CriticConfig()) == 70


def test_receptive_field_recursion():
    one = CriticConfig(widths=(1, 1, 1, 1, 1), kernel=3, strides=(1, 1, 1, 1, 1))
    # r grows by (k-1)*j per layer: 3, 5, 7, 9, 11
    assert receptive_field(one) == 11


def test_desk_critic_extents_match_formula():
    cfg = CriticConfig.desk()
    c = build_critic(cfg, seed=1)
    for size in (64, 96, 256):
        x = np.zeros((11, size, size), dtype=np.float32)
        out = c.forward({"x": x})
        expected = size
        for stride, pad in zip(cfg.strides, cfg.paddings):
            expected = conv_extent(expected, cfg.kernel, stride, pad)
        assert out.shape == (1, expected, expected)
        assert critic_out_extent(cfg, size) == expected


def test_critic_scores_unbounded_sign():
    # no output nonlinearity: scores take both signs on random input
    c = build_critic(CriticConfig.desk(), seed=2)
    rng = np.random.default_rng(4)
    scores = [c.forward({"x": rng.random((11, 64, 64), dtype=np.float32) * 4 - 2})
              for _ in range(4)]
    allvals = np.concatenate([s.ravel() for s in scores])
    assert (allvals < 0).any() and (allvals > 0).any()


def test_critic_input_concatenation():
    img = np.zeros((3, 8, 8), dtype=np.float32)
    maps = np.ones((8, 8, 8), dtype=np.float32)
    x = critic_input(img, maps)
    assert x.shape == (11, 8, 8)
    assert not x[:3].any() and x[3:].all()
    with pytest.raises(DimensionError):
        critic_input(img, np.ones((8, 4, 4), dtype=np.float32))


def test_critic_config_validation():
    with pytest.raises(ConfigurationError):
        CriticConfig(widths=(64, 128, 1)).validate()
    with pytest.raises(ConfigurationError):
        CriticConfig(widths=(64, 128, 256, 512, 2)).validate()


# ------------------------------------------------------------------ configs


def test_config_json_roundtrip():
    gen = GeneratorConfig.desk()
    crit = CriticConfig.desk()
    doc = configs_to_json(gen, crit)
    gen2, crit2 = configs_from_json(doc)
    assert gen2 == gen and crit2 == crit


def test_config_json_defaults_and_errors():
    gen, crit = configs_from_json({})
    assert gen == GeneratorConfig() and crit == CriticConfig()
    with pytest.raises(ConfigurationError):
        configs_from_json({"generator": {"bogus_field": 3}})
