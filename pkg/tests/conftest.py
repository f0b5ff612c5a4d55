"""Shared fixtures, including the desk-scale training smoke run.

The smoke run is expensive (~2 min), so it is session-scoped and executed
twice with the same seed: once as the primary run and once to check
bit-for-bit reproducibility.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from conncrack.connmaps import encode
from conncrack.data import SynthSpec, synth_sample
from conncrack.models import (CriticConfig, GeneratorConfig, build_critic,
                              build_generator)
from conncrack.pipeline import DetectParams, detect
from conncrack.training import TrainConfig, train

# frozen smoke-run recipe: 64 train + 16 held-out synthetic 64x64 images,
# tiny generator (blocks 2/2/2/2, growth 8), 2000 iterations
SMOKE_DATA_SEED = 11
SMOKE_TRAIN_IMAGES = 64
SMOKE_HELDOUT_IMAGES = 16
SMOKE_CFG = TrainConfig(lr_generator=5e-4, lr_critic=5e-4, lam=0.01,
                        iterations=2000, seed=7, patch_size=64)
SMOKE_DETECT = DetectParams(patch_size=64, overlap=0, tau=0.35, min_area=24)


@dataclass
class SmokeRun:
    out_dir: Path
    log: object
    generator: object
    masks: list[np.ndarray]
    elapsed_s: float


@pytest.fixture(scope="session")
def smoke_dataset():
    spec = SynthSpec(seed=SMOKE_DATA_SEED)
    train_set = []
    for i in range(SMOKE_TRAIN_IMAGES):
        image, mask = synth_sample(spec, i)
        train_set.append((image, encode(mask).astype(np.float32)))
    heldout = [synth_sample(spec, i) for i in
               range(SMOKE_TRAIN_IMAGES, SMOKE_TRAIN_IMAGES + SMOKE_HELDOUT_IMAGES)]
    return train_set, heldout


def _run_smoke(train_set, heldout, out_dir: Path) -> SmokeRun:
    generator = build_generator(GeneratorConfig.desk(), seed=1)
    critic = build_critic(CriticConfig.desk(), seed=2)
    t0 = time.perf_counter()
    log = train(train_set, generator, critic, SMOKE_CFG, out_dir=out_dir)
    elapsed = time.perf_counter() - t0
    masks = [detect(image, generator, SMOKE_DETECT).mask for image, _ in heldout]
    return SmokeRun(out_dir, log, generator, masks, elapsed)


@pytest.fixture(scope="session")
def smoke_run_a(smoke_dataset, tmp_path_factory) -> SmokeRun:
    train_set, heldout = smoke_dataset
    return _run_smoke(train_set, heldout, tmp_path_factory.mktemp("smoke_a"))


@pytest.fixture(scope="session")
def smoke_run_b(smoke_dataset, tmp_path_factory) -> SmokeRun:
    train_set, heldout = smoke_dataset
    return _run_smoke(train_set, heldout, tmp_path_factory.mktemp("smoke_b"))
