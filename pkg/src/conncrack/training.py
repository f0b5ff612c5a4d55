"""Alternating Wasserstein adversarial training with weight clipping.

Per iteration: ``n_critic`` critic updates, then one generator update.

The critic maximizes  E[D(x, y)] - E[D(x, G(x))]  (implemented as descending
the negation) and is clipped to [-C, C] after every update to keep it
Lipschitz.  The generator descends

    lam * (-E[D(x, G(x))]) + content_loss(G(x), y)

where the real-pair term is constant in G and contributes no gradient.  The
logged g_wgan_loss is -E[D(x, G(x))]; d_wgan_loss is
E[D(x, G(x))] - E[D(x, y)], which starts strongly negative while the critic
wins and rises toward 0 as the generator catches up.  The critic exists only
to shape the generator's gradients; inference keeps the generator alone.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .connmaps import content_loss
from .errors import ConfigurationError, TrainingDivergedError
from .ioutil import write_text_atomic
from .models import critic_input
from .nn.graph import ModelGraph, save_checkpoint
from .nn.optim import RMSProp, clip_params

Batch = list[tuple[np.ndarray, np.ndarray]]  # (image patch, {0,1} gt maps)


@dataclass
class TrainConfig:
    lr_generator: float = 1e-5
    lr_critic: float = 1e-5
    lam: float = 1.0          # cWGAN weight; 1.0 suits mean reduction,
    reduction: str = "mean"   # use lam ~ 5e-6 with reduction="sum"
    clip_c: float = 0.01
    n_critic: int = 1
    iterations: int = 1000
    seed: int = 0
    patch_size: int = 256
    batch_size: int = 1
    rmsprop_decay: float = 0.9
    checkpoint_interval: int = 0  # 0 = final checkpoint only

    def validate(self) -> "TrainConfig":
        if min(self.lr_generator, self.lr_critic) <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if self.clip_c <= 0:
            raise ConfigurationError("clip bound must be > 0")
        if self.n_critic < 1:
            raise ConfigurationError("n_critic must be >= 1")
        if self.lam < 0:
            raise ConfigurationError("lambda must be >= 0")
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigurationError("iterations must be >= 0 and batch size >= 1")
        if self.reduction not in ("mean", "sum"):
            raise ConfigurationError(f"unknown reduction {self.reduction!r}")
        return self


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    # running post-clip maximum of |critic parameter| over the whole run
    max_abs_critic_param: float = 0.0

    def append(self, iteration: int, content: float, g_wgan: float, d_wgan: float,
               wall_ms: float) -> None:
        self.rows.append((iteration, content, g_wgan, d_wgan, wall_ms))

    def column(self, name: str) -> np.ndarray:
        idx = {"iter": 0, "content_loss": 1, "g_wgan_loss": 2, "d_wgan_loss": 3,
               "wall_ms": 4}[name]
        return np.array([r[idx] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["iter", "content_loss", "g_wgan_loss", "d_wgan_loss", "wall_ms"])
        for it, c, gw, dw, ms in self.rows:
            writer.writerow([it, f"{c:.9e}", f"{gw:.9e}", f"{dw:.9e}", f"{ms:.3f}"])
        return buf.getvalue()


def _score_mean(score: np.ndarray) -> float:
    return float(score.mean())


def critic_step(batch: Batch, generator: ModelGraph, critic: ModelGraph,
                cfg: TrainConfig, optimizer: RMSProp) -> float:
    """One critic update on ``batch``; returns the minimized Wasserstein loss
    E[D(x, G(x))] - E[D(x, y)].  Generator parameters are untouched."""
    critic.zero_grad()
    n = len(batch)
    mean_real = 0.0
    mean_fake = 0.0
    for image, gt_maps in batch:
        fake_maps = generator.forward({"image": image})

        score = critic.forward({"x": critic_input(image, gt_maps)})
        cells = score.size
        mean_real += _score_mean(score) / n
        critic.backward({"score": np.full_like(score, -1.0 / (cells * n))})

        score = critic.forward({"x": critic_input(image, fake_maps)})
        mean_fake += _score_mean(score) / n
        critic.backward({"score": np.full_like(score, 1.0 / (cells * n))})
    d_loss = mean_fake - mean_real
    if not np.isfinite(d_loss):
        raise TrainingDivergedError("critic loss is not finite", iteration=-1)
    optimizer.step()
    clip_params(critic, cfg.clip_c)
    return d_loss


def generator_step(batch: Batch, generator: ModelGraph, critic: ModelGraph,
                   cfg: TrainConfig, optimizer: RMSProp) -> tuple[float, float]:
    """One generator update; returns (g_wgan_loss, content_loss_value).

    Critic parameters are untouched: the critic only relays gradients from
    its score grid back to the generated maps.
    """
    generator.zero_grad()
    n = len(batch)
    g_wgan = 0.0
    content = 0.0
    for image, gt_maps in batch:
        fake_maps = generator.forward({"image": image})
        logits = generator.buffers["logits"]

        seeds: dict[str, np.ndarray] = {}
        if cfg.lam > 0:
            score = critic.forward({"x": critic_input(image, fake_maps)})
            g_wgan += -_score_mean(score) / n
            # d(lam * -mean(score)) / d(score)
            seed = np.full_like(score, -cfg.lam / (score.size * n))
            input_grads = critic.backward({"score": seed}, accumulate_param_grads=False)
            seeds["maps"] = input_grads["x"][image.shape[0]:]
        loss = content_loss(logits, gt_maps, cfg.reduction)
        content += loss.value / n
        seeds["logits"] = loss.gradient / logits.dtype.type(n)
        generator.backward(seeds)
    if not (np.isfinite(g_wgan) and np.isfinite(content)):
        raise TrainingDivergedError("generator loss is not finite", iteration=-1)
    optimizer.step()
    return g_wgan, content


def train(
    dataset: list[tuple[np.ndarray, np.ndarray]],
    generator: ModelGraph,
    critic: ModelGraph,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainLog:
    """Run the alternating loop; optionally write train_log.csv and checkpoints.

    ``dataset`` is an in-memory list of (patch, gt_maps) pairs; batches are
    drawn by a generator seeded from cfg.seed, so a fixed seed and dataset
    order reproduce the run bit for bit.  On divergence the last finite-loss
    parameters are saved as *_lastgood.ckpt before the error propagates.
    """
    cfg.validate()
    if not dataset:
        raise ConfigurationError("training dataset is empty")
    for image, gt_maps in dataset:
        if image.shape[1:] != (cfg.patch_size, cfg.patch_size):
            raise ConfigurationError(
                f"dataset patch {image.shape[1:]} does not match cfg.patch_size "
                f"{cfg.patch_size}")
        if gt_maps.shape[1:] != image.shape[1:]:
            raise ConfigurationError("patch and gt maps extents differ")

    rng = np.random.default_rng(cfg.seed)
    opt_g = RMSProp(generator, cfg.lr_generator, cfg.rmsprop_decay)
    opt_d = RMSProp(critic, cfg.lr_critic, cfg.rmsprop_decay)
    log = TrainLog()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def draw_batch() -> Batch:
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        return [dataset[int(i)] for i in idx]

    def save(tag: str) -> None:
        if out is None:
            return
        save_checkpoint(out / f"gen_{tag}.ckpt", generator.state_dict())
        save_checkpoint(out / f"crit_{tag}.ckpt", critic.state_dict())

    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        try:
            d_loss = 0.0
            for _ in range(cfg.n_critic):
                d_loss = critic_step(draw_batch(), generator, critic, cfg, opt_d)
                post_clip_max = critic.max_abs_param()
                assert post_clip_max <= cfg.clip_c, "clipping invariant violated"
                log.max_abs_critic_param = max(log.max_abs_critic_param, post_clip_max)
            g_wgan, content = generator_step(draw_batch(), generator, critic,
                                             cfg, opt_g)
        except TrainingDivergedError as exc:
            save("lastgood")
            raise TrainingDivergedError(exc.message, iteration=it) from None
        wall_ms = (time.perf_counter() - t0) * 1e3
        log.append(it, content, g_wgan, d_loss, wall_ms)
        if out is not None and cfg.checkpoint_interval and (it + 1) % cfg.checkpoint_interval == 0:
            save(f"{it + 1:06d}")

    save("final")
    if out is not None:
        write_text_atomic(out / "train_log.csv", log.to_csv())
    return log
