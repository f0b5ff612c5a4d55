"""Generator and critic assembly.

Generator: a densely connected encoder (stem conv stride 2, max pool stride 2,
four dense blocks separated by three transition blocks) produces features at
1/8, 1/16 and 1/32 of the input resolution; a head of three stride-2
transposed convolutions walks 1/32 -> 1/4 while fusing the 1/16 and 1/8
encoder features (1x1 projection + element-wise add), and a final stride-4
transposed convolution followed by a 1x1 convolution and sigmoid emits 8
connectivity-map channels at full resolution.

Critic: five stride-patterned 4x4 convolutions over the channel-concatenation
of an image patch and its connectivity maps.  With the default widths and
strides (2,2,2,1,1) a 256x256 input yields a 30x30 score grid and every score
covers a 70x70 receptive field.  No output nonlinearity: scores are unbounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .connmaps import N_MAPS
from .errors import ConfigurationError, DimensionError
from .nn.blocks import dense_block, transition_block
from .nn.graph import ModelGraph
from .nn.layers import Add, Concat, Conv2d, Deconv2d, LeakyReLU, MaxPool2, Sigmoid

LEAKY_SLOPE = 0.2
ENCODER_STRIDE = 32  # total downsample factor; inputs must be divisible by this


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 3
    block_components: tuple[int, int, int, int] = (6, 12, 24, 16)
    growth_rate: int = 32
    stem_channels: int = 64
    head_channels: int = 64
    # which dense-block outputs feed the fusion head; blocks 2 and 3 sit at
    # 1/8 and 1/16 of the input resolution
    fusion_taps: tuple[int, ...] = (2, 3)
    out_maps: int = N_MAPS

    @staticmethod
    def desk() -> "GeneratorConfig":
        return GeneratorConfig(block_components=(2, 2, 2, 2), growth_rate=8,
                               stem_channels=16, head_channels=16)

    def validate(self) -> "GeneratorConfig":
        if len(self.block_components) != 4 or any(n < 0 for n in self.block_components):
            raise ConfigurationError("generator needs exactly 4 dense blocks")
        if min(self.growth_rate, self.stem_channels, self.head_channels,
               self.in_channels, self.out_maps) < 1:
            raise ConfigurationError("generator channel counts must be >= 1")
        if any(t not in (2, 3) for t in self.fusion_taps):
            raise ConfigurationError(f"fusion taps must be drawn from blocks 2/3, got {self.fusion_taps}")
        return self


@dataclass(frozen=True)
class CriticConfig:
    in_channels: int = 3 + N_MAPS
    widths: tuple[int, ...] = (64, 128, 256, 512, 1)
    kernel: int = 4
    strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    paddings: tuple[int, ...] = (1, 1, 1, 1, 1)

    @staticmethod
    def desk() -> "CriticConfig":
        return CriticConfig(widths=(32, 64, 128, 256, 1))

    def validate(self) -> "CriticConfig":
        if len(self.widths) != 5:
            raise ConfigurationError(f"critic must have exactly 5 layers, got {len(self.widths)}")
        if len(self.strides) != 5 or len(self.paddings) != 5:
            raise ConfigurationError("critic needs 5 strides and 5 paddings")
        if min(self.widths) < 1 or self.widths[-1] != 1:
            raise ConfigurationError("critic widths must be >= 1 and end in a 1-channel score map")
        if self.kernel < 1 or min(self.strides) < 1 or min(self.paddings) < 0:
            raise ConfigurationError("invalid critic kernel/stride/padding")
        return self


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> ModelGraph:
    """Deterministically initialized generator graph.

    Buffers of note: input "image", pre-sigmoid "logits", output "maps".
    Input spatial extents must be divisible by 32.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    nodes = []

    nodes.append(Conv2d("stem.conv", ["image"], "stem.c", cfg.in_channels,
                        cfg.stem_channels, 7, stride=2, padding=3, rng=rng))
    nodes.append(LeakyReLU("stem.act", ["stem.c"], "stem.out", LEAKY_SLOPE))
    nodes.append(MaxPool2("stem.pool", ["stem.out"], "enc4"))
    channels = cfg.stem_channels

    block_out: dict[int, tuple[str, int]] = {}
    buf = "enc4"
    for i, n_comp in enumerate(cfg.block_components, start=1):
        bnodes, channels = dense_block(f"block{i}", buf, f"block{i}.out",
                                       channels, cfg.growth_rate, n_comp, rng)
        nodes += bnodes
        block_out[i] = (f"block{i}.out", channels)
        if i < 4:
            tnodes, channels = transition_block(f"trans{i}", f"block{i}.out",
                                                f"trans{i}.out", channels,
                                                max(channels // 2, 1), rng)
            nodes += tnodes
            buf = f"trans{i}.out"

    hc = cfg.head_channels
    buf, channels = block_out[4]  # 1/32 resolution
    for stage, tap_block in ((1, 3), (2, 2)):  # 1/32->1/16 fusing block 3; 1/16->1/8 fusing block 2
        nodes.append(Deconv2d(f"up{stage}.deconv", [buf], f"up{stage}.d",
                              channels, hc, 4, stride=2, padding=1, rng=rng))
        merged = f"up{stage}.d"
        if tap_block in cfg.fusion_taps:
            tap_buf, tap_ch = block_out[tap_block]
            nodes.append(Conv2d(f"up{stage}.proj", [tap_buf], f"up{stage}.p",
                                tap_ch, hc, 1, rng=rng))
            nodes.append(Add(f"up{stage}.fuse", [f"up{stage}.d", f"up{stage}.p"],
                             f"up{stage}.f"))
            merged = f"up{stage}.f"
        nodes.append(LeakyReLU(f"up{stage}.act", [merged], f"up{stage}.out", LEAKY_SLOPE))
        buf, channels = f"up{stage}.out", hc

    nodes.append(Deconv2d("up3.deconv", [buf], "up3.d", hc, hc, 4, stride=2,
                          padding=1, rng=rng))
    nodes.append(LeakyReLU("up3.act", ["up3.d"], "up3.out", LEAKY_SLOPE))
    # final learned x4 upsample back to full resolution (kernel 8 overlaps
    # neighboring cells, avoiding blocky seams)
    nodes.append(Deconv2d("up4.deconv", ["up3.out"], "up4.d", hc, hc, 8,
                          stride=4, padding=2, rng=rng))
    nodes.append(LeakyReLU("up4.act", ["up4.d"], "up4.out", LEAKY_SLOPE))
    nodes.append(Conv2d("head.conv", ["up4.out"], "logits", hc, cfg.out_maps, 1, rng=rng))
    nodes.append(Sigmoid("head.sigmoid", ["logits"], "maps"))
    return ModelGraph(["image"], nodes, "maps")


def generator_forward(generator: ModelGraph, image: np.ndarray) -> np.ndarray:
    """Forward with the divisibility precondition checked up front."""
    if image.ndim != 3:
        raise DimensionError(f"generator input must be (C, H, W), got {image.shape}")
    if image.shape[1] % ENCODER_STRIDE or image.shape[2] % ENCODER_STRIDE:
        raise DimensionError(
            f"generator input extents must be divisible by {ENCODER_STRIDE}, "
            f"got {image.shape[1]}x{image.shape[2]}")
    return generator.forward({"image": image})


def build_critic(cfg: CriticConfig, seed: int = 0) -> ModelGraph:
    """Five-layer fully convolutional critic over concat(image, maps)."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    nodes = []
    channels = cfg.in_channels
    buf = "x"
    for i, (width, stride, pad) in enumerate(zip(cfg.widths, cfg.strides, cfg.paddings), start=1):
        out_buf = "score" if i == len(cfg.widths) else f"l{i}.c"
        nodes.append(Conv2d(f"l{i}.conv", [buf], out_buf, channels, width,
                            cfg.kernel, stride=stride, padding=pad, rng=rng))
        if i < len(cfg.widths):
            nodes.append(LeakyReLU(f"l{i}.act", [out_buf], f"l{i}.out", LEAKY_SLOPE))
            buf = f"l{i}.out"
        channels = width
    return ModelGraph(["x"], nodes, "score")


def critic_input(image: np.ndarray, maps: np.ndarray) -> np.ndarray:
    if image.shape[1:] != maps.shape[1:]:
        raise DimensionError(
            f"image {image.shape} and maps {maps.shape} spatial extents differ")
    return np.concatenate([image, maps.astype(image.dtype, copy=False)], axis=0)


def critic_out_extent(cfg: CriticConfig, extent: int) -> int:
    """Spatial output extent of the critic for a square input extent."""
    for stride, pad in zip(cfg.strides, cfg.paddings):
        extent = (extent + 2 * pad - cfg.kernel) // stride + 1
    return extent


def receptive_field(cfg: CriticConfig) -> int:
    """Input pixels covered by one output score: r += (k-1)*j, j *= s."""
    cfg.validate()
    r, j = 1, 1
    for stride in cfg.strides:
        r += (cfg.kernel - 1) * j
        j *= stride
    return r


# ------------------------------------------------------------- JSON config IO


def configs_from_json(doc: dict) -> tuple[GeneratorConfig, CriticConfig]:
    """Parse {"generator": {...}, "critic": {...}} into validated configs."""

    def build(cls, obj, tuple_fields):
        kwargs = dict(obj)
        for key in tuple_fields:
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs).validate()
        except TypeError as exc:
            raise ConfigurationError(f"bad {cls.__name__} field: {exc}") from exc

    gen = build(GeneratorConfig, doc.get("generator", {}),
                ("block_components", "fusion_taps"))
    crit = build(CriticConfig, doc.get("critic", {}),
                 ("widths", "strides", "paddings"))
    return gen, crit


def configs_to_json(gen: GeneratorConfig, crit: CriticConfig) -> dict:
    from dataclasses import asdict

    return {"generator": asdict(gen), "critic": asdict(crit)}


def load_model_configs(path) -> tuple[GeneratorConfig, CriticConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return configs_from_json(json.load(fh))
