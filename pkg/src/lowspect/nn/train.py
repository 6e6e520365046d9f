"""Seeded training loop: shuffled mini-batches, SSIM loss, Adam updates,
per-epoch validation SSIM and best-validation checkpointing.

Runs are deterministic: the shuffle order, dropout masks and weight
initialization all derive from the config seed, and reductions keep a fixed
order, so identical configs give identical histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..datasets import DatasetIndex, split_dataset
from ..io import load_array
from ..metrics import SsimConfig, ssim
from ..rng import Rng, child_seed
from .checkpoint import save_checkpoint
from .loss import SsimLossConfig, ssim_loss
from .model import CnnrModel, normalize_and_pad
from .optim import Adam


class TrainingDivergedError(Exception):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_fraction: float = 0.9
    seed: int = 0
    loss_window: int = 8
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_ssim: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_ssim: float = float("-inf")

    def to_dict(self):
        return {
            "train_loss": self.train_loss,
            "val_ssim": self.val_ssim,
            "best_epoch": self.best_epoch,
            "best_val_ssim": self.best_val_ssim,
        }


def _load_pairs(dataset):
    """Materialize (sinogram, image) arrays from an index or array pairs."""
    if isinstance(dataset, DatasetIndex):
        return [
            (load_array(sino).astype(np.float64), load_array(img).astype(np.float64))
            for sino, img in dataset.pairs
        ]
    return [
        (np.asarray(s, dtype=np.float64), np.asarray(i, dtype=np.float64))
        for s, i in dataset
    ]


def _preprocess(pairs, model: CnnrModel):
    """Normalize inputs by their own maximum and scale targets to match.

    The projector is linear, so dividing both sides by the sinogram maximum
    keeps the mapping consistent; the fixed output gain lifts targets to
    unit order.  Inference inverts gain and scale.
    """
    inputs, targets, scales, truths = [], [], [], []
    gain = model.output_gain
    for sino, img in pairs:
        padded, scale = normalize_and_pad(sino, model.n_angles, model.n_bins)
        eff = scale if scale > 0 else 1.0
        inputs.append(padded)
        targets.append(img * (gain / eff))
        scales.append(eff)
        truths.append(img)
    return inputs, targets, scales, truths


def _validation_ssim(model, val_data, window):
    inputs, _, scales, truths = val_data
    if not inputs:
        return float("nan")
    total = 0.0
    for x, scale, truth in zip(inputs, scales, truths):
        out = model.forward(x[None], training=False)[0, 0]
        recon = np.maximum(out * (scale / model.output_gain), 0.0)
        span = max(float(truth.max() - truth.min()), 1e-3)
        total += ssim(
            truth, recon, SsimConfig(dynamic_range=span, mode="window", window=window)
        )
    return total / len(inputs)


def train(model: CnnrModel, dataset, config: TrainConfig, val_dataset=None):
    """Fit the model; returns (model, TrainHistory).

    Without an explicit ``val_dataset`` the dataset splits by
    ``config.train_fraction`` /  ``config.seed``; passing one trains on the
    whole ``dataset`` (memorization and benchmark harnesses do this).
    """
    pairs = _load_pairs(dataset)
    if not pairs:
        raise ValueError("empty dataset")
    if val_dataset is None:
        train_pairs, val_pairs = split_dataset(pairs, config.train_fraction, config.seed)
    else:
        train_pairs, val_pairs = pairs, _load_pairs(val_dataset)

    train_data = _preprocess(train_pairs, model)
    val_data = _preprocess(val_pairs, model)
    inputs, targets, _, _ = train_data
    n_train = len(inputs)

    model.reseed_dropout(config.seed)
    optimizer = Adam(
        model.named_params(),
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    loss_config = SsimLossConfig(window=config.loss_window)
    shuffle_rng = Rng(child_seed(config.seed, 1))
    history = TrainHistory()

    for epoch in range(config.epochs):
        order = list(range(n_train))
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, n_train, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            x = np.stack([inputs[i] for i in batch_idx])
            t = np.stack([targets[i] for i in batch_idx])
            out = model.forward(x, training=True)
            loss, dloss = ssim_loss(out, t[:, None], loss_config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            model.zero_grads()
            model.backward(dloss.astype(model.dtype, copy=False))
            optimizer.step(model.named_grads())
            epoch_loss += loss * len(batch_idx)
        history.train_loss.append(epoch_loss / n_train)

        val_value = _validation_ssim(model, val_data, config.loss_window)
        history.val_ssim.append(val_value)
        if val_value == val_value and val_value > history.best_val_ssim:
            history.best_val_ssim = val_value
            history.best_epoch = epoch
            if config.checkpoint_path:
                save_checkpoint(model, config.checkpoint_path)

    if config.checkpoint_path and history.best_epoch < 0:
        save_checkpoint(model, config.checkpoint_path)
    return model, history
