"""One training loop shared by the attribute judge and the diagnosis model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import TrainingDiverged
from .augment import AugmentConfig, augment_batch
from .debias import TrainStrategy, balanced_indices, cross_group_partners, mix_features, mixup_batch, sample_lambda


@dataclass
class FitResult:
    epoch_losses: list[float] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    snapshot_epochs: list[int] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def state_copy(model: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def fit_classifier(
    model: nn.Module,
    images: np.ndarray,
    targets: np.ndarray,
    *,
    lr: float,
    batch_size: int,
    epochs: int,
    seed: int,
    augment: AugmentConfig,
    pos_weight: np.ndarray | None = None,
    strategy: TrainStrategy | None = None,
    groups: np.ndarray | None = None,
    keep_last: int = 0,
    weight_decay: float = 0.0,
    on_epoch: Callable[[int, float], None] | None = None,
) -> FitResult:
    """Minibatch Adam on BCE-with-logits; returns per-epoch losses and snapshots.

    ``strategy`` hooks: ``balanced`` re-draws a group-balanced subset every
    epoch, ``mixup`` blends each sample with a partner from the other group,
    ``manifold_mixup`` does the same on the penultimate feature map.
    Snapshots (state dicts) of the last ``keep_last`` epochs are returned; with
    ``epochs == 0`` the initial weights are the single snapshot.
    """
    strategy = strategy or TrainStrategy.original()
    torch.manual_seed(seed)
    data_gen = torch.Generator().manual_seed(seed + 1)
    rng = np.random.default_rng(seed + 2)
    x_all = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
    y_all = torch.from_numpy(np.ascontiguousarray(targets, dtype=np.float32))
    pw = None if pos_weight is None else torch.as_tensor(pos_weight, dtype=torch.float32)
    if strategy.kind in ("balanced", "mixup", "manifold_mixup") and groups is None:
        raise ValueError(f"strategy {strategy.kind!r} needs group labels")
    opt = torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)

    result = FitResult()
    if epochs == 0:
        result.snapshots.append(state_copy(model))
        result.snapshot_epochs.append(0)
        return result

    for epoch in range(1, epochs + 1):
        model.train()
        if strategy.kind == "balanced":
            pool = balanced_indices(groups, seed=int(rng.integers(2**31)))
        else:
            pool = np.arange(len(x_all))
        order = pool[torch.randperm(len(pool), generator=data_gen).numpy()]
        total, count = 0.0, 0
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            x, y = x_all[idx], y_all[idx]
            if augment is not None:
                x = augment_batch(x, augment, data_gen)
            if strategy.kind in ("mixup", "manifold_mixup"):
                partner = cross_group_partners(groups, idx, rng)
                xb, yb = x_all[partner], y_all[partner]
                if augment is not None:
                    xb = augment_batch(xb, augment, data_gen)
                lam = sample_lambda(strategy.beta_param, rng)
                if strategy.kind == "mixup":
                    x, y = mixup_batch((x, y), (xb, yb), lam)
                    logits = model(x)
                else:
                    h = mix_features(model.penultimate(x), model.penultimate(xb), lam)
                    y = lam * y + (1 - lam) * yb
                    logits = model.head(h)
            else:
                logits = model(x)
            loss = F.binary_cross_entropy_with_logits(logits, y, pos_weight=pw)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite classifier loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        result.epoch_losses.append(total / max(count, 1))
        if epoch > epochs - keep_last:
            result.snapshots.append(state_copy(model))
            result.snapshot_epochs.append(epoch)
        if on_epoch:
            on_epoch(epoch, result.epoch_losses[-1])
    if not result.snapshots:
        result.snapshots.append(state_copy(model))
        result.snapshot_epochs.append(epochs)
    model.eval()
    return result


@torch.no_grad()
def predict_logits(model: nn.Module, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    was = model.training
    model.eval()
    out = []
    for s in range(0, len(images), batch_size):
        x = torch.from_numpy(np.ascontiguousarray(images[s:s + batch_size], dtype=np.float32))
        out.append(model(x).double().numpy())
    model.train(was)
    if not out:
        return np.zeros((0, 0))
    return np.concatenate(out)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # numerically safe in both tails
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))
