"""Debiasing baselines: group mixup (image or feature level) and balanced sampling."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from ..errors import EmptyGroup, InvalidAlpha, ShapeError

STRATEGY_KINDS = ("original", "neutralized", "balanced", "mixup", "manifold_mixup")


@dataclass
class TrainStrategy:
    kind: str = "original"
    alpha: float | None = None
    encoder_kind: str | None = None
    group_attr: str | None = None
    beta_param: float | None = None
    smoothness_penalty: float = 0.0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "neutralized":
            if self.alpha is None:
                self.alpha = 0.5
            if not 0.0 <= self.alpha <= 1.0:
                raise InvalidAlpha(f"alpha {self.alpha} outside [0, 1]")
            self.encoder_kind = self.encoder_kind or "vit"
        if self.kind in ("balanced", "mixup", "manifold_mixup"):
            self.group_attr = self.group_attr or "sex"
        if self.kind in ("mixup", "manifold_mixup") and self.beta_param is None:
            self.beta_param = 1.0

    @property
    def name(self) -> str:
        if self.kind == "neutralized":
            return f"neutralized-{self.encoder_kind}"
        return self.kind

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def original(cls):
        return cls("original")

    @classmethod
    def neutralized(cls, alpha=0.5, encoder_kind="vit"):
        return cls("neutralized", alpha=alpha, encoder_kind=encoder_kind)

    @classmethod
    def balanced(cls, group_attr="sex"):
        return cls("balanced", group_attr=group_attr)

    @classmethod
    def mixup(cls, beta_param=1.0, group_attr="sex"):
        return cls("mixup", beta_param=beta_param, group_attr=group_attr)

    @classmethod
    def manifold_mixup(cls, beta_param=1.0, group_attr="sex"):
        return cls("manifold_mixup", beta_param=beta_param, group_attr=group_attr)


def mixup_batch(batch_a, batch_b, lambda_mix: float):
    """Convex combination ``lam * a + (1 - lam) * b`` of two (images, labels) batches."""
    xa, ya = batch_a
    xb, yb = batch_b
    if tuple(xa.shape) != tuple(xb.shape) or tuple(ya.shape) != tuple(yb.shape):
        raise ShapeError("mixup batches must have identical shapes")
    lam = float(lambda_mix)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda_mix {lam} outside [0, 1]")
    if lam == 1.0:
        return xa, ya
    if lam == 0.0:
        return xb, yb
    return lam * xa + (1 - lam) * xb, lam * ya + (1 - lam) * yb


def sample_lambda(beta_param: float, rng: np.random.Generator) -> float:
    return float(rng.beta(beta_param, beta_param))


def cross_group_partners(groups: np.ndarray, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """For each index, a random partner drawn from the opposite group."""
    groups = np.asarray(groups)
    pools = {g: np.flatnonzero(groups == g) for g in (0, 1)}
    if any(len(p) == 0 for p in pools.values()):
        raise EmptyGroup("mixup needs both groups present")
    partners = np.empty_like(idx)
    for g in (0, 1):
        mine = groups[idx] == g
        other = pools[1 - g]
        partners[mine] = other[rng.integers(0, len(other), size=int(mine.sum()))]
    return partners


def balanced_indices(groups: Sequence[int], seed: int = 0) -> np.ndarray:
    """Indices after downsampling the majority group to the minority size, sorted."""
    groups = np.asarray(groups)
    pools = [np.flatnonzero(groups == g) for g in np.unique(groups)]
    if len(pools) < 2 or any(len(p) == 0 for p in pools):
        raise EmptyGroup("balanced sampling needs two non-empty groups")
    size = min(len(p) for p in pools)
    rng = np.random.default_rng(seed)
    keep = [p if len(p) == size else rng.choice(p, size=size, replace=False) for p in pools]
    return np.sort(np.concatenate(keep))


def balanced_resample(records: Sequence, group_attr: str, seed: int = 0) -> list:
    """Uniform downsample (without replacement) of the majority group.

    Keeps every minority record and never duplicates one.
    """
    groups = [r.attribute(group_attr) for r in records]
    if len(set(groups)) < 2:
        raise EmptyGroup(f"only one {group_attr} group present")
    return [records[i] for i in balanced_indices(groups, seed)]


def mix_features(h_a: torch.Tensor, h_b: torch.Tensor, lam: float) -> torch.Tensor:
    return lam * h_a + (1 - lam) * h_b
