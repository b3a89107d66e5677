"""Training loop: per-epoch random crops, staged LR, momentum SGD with L2.

Every source of per-epoch randomness (shuffle order, crop starts) is drawn
from a generator derived from (seed, epoch), so a run resumed from a
checkpoint continues bit-identically to an uninterrupted one. Training
entries are canonicalized by path before the seeded shuffle, which makes
the whole run invariant to manifest row order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import ops
from .audio import AudioClip, load_clip_file, random_crop
from .checkpoint import Checkpoint, save_checkpoint
from .datasets import DatasetManifest, ManifestEntry, fold_split
from .errors import ConfigError
from .model import Model, ModelConfig, build_model
from .optim import sgd_step
from .tensor import backward, zero_grads


@dataclass
class TrainConfig:
    """Optimization protocol; defaults reproduce the full-scale recipe."""
    epochs: int = 160
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_stages: tuple[tuple[int, float], ...] = (
        (60, 1e-2), (60, 1e-3), (20, 1e-4), (20, 1e-5))
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        self.lr_stages = tuple((int(s), float(lr)) for s, lr in self.lr_stages)
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit an unsigned 64-bit int, got {self.seed}")
        if sum(s for s, _ in self.lr_stages) != self.epochs:
            raise ConfigError(
                f"lr stage spans {[s for s, _ in self.lr_stages]} must sum to epochs={self.epochs}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lr_stages": [[s, lr] for s, lr in self.lr_stages],
            "seed": self.seed,
            "deterministic": self.deterministic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_stages" in d:
            d["lr_stages"] = tuple((s, lr) for s, lr in d["lr_stages"])
        return cls(**d)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Stagewise-constant learning rate for a 0-based epoch index."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} out of range 0..{config.epochs - 1}")
    cursor = 0
    for span, lr in config.lr_stages:
        cursor += span
        if epoch < cursor:
            return lr
    raise AssertionError("unreachable: stage spans sum to epochs")


def _epoch_rng(seed: int, epoch: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, purpose]))


def train_epoch(model: Model, entries: list[ManifestEntry],
                clips: dict[str, AudioClip], epoch: int,
                config: TrainConfig) -> dict:
    """One pass: fresh random crop per entry, seeded shuffle, SGD per batch.

    Returns {"epoch", "lr", "loss", "train_acc", "n_examples"}; loss is the
    mean per-crop cross-entropy over the epoch.
    """
    if not entries:
        raise ValueError("training set is empty")
    lr = lr_at(config, epoch)
    shuffle_rng = _epoch_rng(config.seed, epoch, 0)
    crop_rng = _epoch_rng(config.seed, epoch, 1)

    order = shuffle_rng.permutation(len(entries))
    params = model.parameters()
    window = model.config.window_length

    total_loss = 0.0
    correct = 0
    for batch_lo in range(0, len(order), config.batch_size):
        batch = order[batch_lo:batch_lo + config.batch_size]
        zero_grads(params)
        losses = []
        for idx in batch:
            entry = entries[int(idx)]
            crop = random_crop(clips[entry.path], window, crop_rng, entry.label)
            logits = model.forward(crop.samples)
            if int(np.argmax(logits.data)) == entry.label:
                correct += 1
            losses.append(ops.softmax_cross_entropy(logits, entry.label))
        loss = losses[0]
        for extra in losses[1:]:
            loss = ops.add(loss, extra)
        loss = ops.scale(loss, 1.0 / len(batch))
        backward(loss)
        sgd_step(params, lr=lr, momentum=config.momentum,
                 weight_decay=config.weight_decay)
        total_loss += loss.item() * len(batch)

    n = len(entries)
    return {"epoch": epoch, "lr": lr, "loss": total_loss / n,
            "train_acc": correct / n, "n_examples": n}


def _default_clip_loader(target_rate: int) -> Callable[[str], AudioClip]:
    def load(path: str) -> AudioClip:
        return load_clip_file(path, target_rate=target_rate, normalize=True)
    return load


def train(model_config: ModelConfig, train_config: TrainConfig,
          manifest: DatasetManifest, test_fold: int,
          clips: Optional[dict[str, AudioClip]] = None,
          out_path: Optional[str | Path] = None,
          checkpoint_every: Optional[int] = None,
          resume_from: Optional[Checkpoint] = None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> Checkpoint:
    """Run the full protocol on the train split of ``test_fold``.

    ``clips`` may supply preloaded audio keyed by manifest path; otherwise
    clips are decoded from disk, resampled to the model rate, and
    peak-normalized once up front. Returns the final checkpoint (also
    written to ``out_path`` when given, plus every ``checkpoint_every``
    epochs).
    """
    train_entries, _ = fold_split(manifest, test_fold)
    if not train_entries:
        raise ValueError(f"no training entries outside fold {test_fold}")
    # Canonical order: shuffle permutation then depends only on (seed, epoch).
    train_entries = sorted(train_entries, key=lambda e: e.path)

    if clips is None:
        loader = _default_clip_loader(model_config.sample_rate)
        clips = {e.path: loader(e.path) for e in train_entries}

    if resume_from is not None:
        if resume_from.model_config != model_config:
            raise ConfigError("checkpoint model config differs from the requested one")
        model = resume_from.restore_model()
        history = list(resume_from.metrics_history)
        start_epoch = resume_from.epoch
    else:
        model = build_model(model_config, seed=train_config.seed)
        history = []
        start_epoch = 0

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint.from_model(model, train_config, epoch, history,
                                     rng_state=(train_config.seed, epoch))

    for epoch in range(start_epoch, train_config.epochs):
        metrics = train_epoch(model, train_entries, clips, epoch, train_config)
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
        done = epoch + 1
        if out_path and checkpoint_every and done % checkpoint_every == 0 \
                and done < train_config.epochs:
            save_checkpoint(snapshot(done), out_path)

    final = snapshot(train_config.epochs)
    if out_path:
        save_checkpoint(final, out_path)
    return final
