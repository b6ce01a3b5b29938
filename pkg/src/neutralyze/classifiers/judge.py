"""Attribute-recognition auditor: two sigmoid outputs (sex, age bin)."""
from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..archive import load_archive, save_archive
from ..dataio import ImageRecord, attribute_vector, stack_pixels
from ..errors import DegenerateLabels, EmptyDataset, FormatError, ShapeError, UndefinedAuc
from ..metrics import auc, confusion_metrics
from .augment import AugmentConfig
from .harness import fit_classifier, predict_logits, sigmoid
from .networks import build_backbone

JUDGE_OUTPUTS = ("sex", "age")
LEAKAGE_COLUMNS = ("alpha", "auc", "acc", "sen", "spe", "f1")


@dataclass
class JudgeHyper:
    lr: float = 5e-4
    batch_size: int = 120
    epochs: int = 100
    seed: int = 0
    backbone: str = "convnext_tiny"
    weights_path: str | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeHyper":
        d = dict(d)
        if isinstance(d.get("augment"), dict):
            d["augment"] = AugmentConfig.from_dict(d["augment"])
        return cls(**d)


@dataclass
class JudgeCheckpoint:
    model: nn.Module
    hyper: JudgeHyper
    image_size: int
    epoch: int = 0
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")

    def save(self, path) -> None:
        spec = {
            "kind": "judge",
            "outputs": list(JUDGE_OUTPUTS),
            "image_size": self.image_size,
            "epoch": self.epoch,
            "seed": self.hyper.seed,
            "hyper": self.hyper.to_dict(),
            "epoch_losses": self.epoch_losses,
        }
        save_archive(path, spec, {"model": self.model.state_dict()})

    @classmethod
    def load(cls, path) -> "JudgeCheckpoint":
        meta, states = load_archive(path)
        if meta.get("kind") != "judge":
            raise FormatError(f"{path} is not a judge checkpoint")
        hyper = JudgeHyper.from_dict(meta["hyper"])
        model = build_backbone(hyper.backbone, len(JUDGE_OUTPUTS))
        try:
            model.load_state_dict(states["model"])
        except RuntimeError as exc:
            raise ShapeError(f"judge weights do not fit backbone {hyper.backbone}: {exc}") from exc
        model.eval()
        return cls(model, hyper, int(meta["image_size"]), int(meta["epoch"]), list(meta.get("epoch_losses", [])))


def _check_labels(y: np.ndarray, name: str) -> None:
    if len(np.unique(y)) < 2:
        raise DegenerateLabels(f"training labels for {name} contain a single class")


def train_judge(records: Sequence[ImageRecord], hyper: JudgeHyper | None = None, progress=None) -> JudgeCheckpoint:
    """Fit the two-output auditor on original images; deterministic per seed."""
    hyper = hyper or JudgeHyper()
    if not records:
        raise EmptyDataset("no training records")
    images = stack_pixels(records)
    targets = np.stack([attribute_vector(records, a) for a in JUDGE_OUTPUTS], axis=1).astype(np.float32)
    for j, name in enumerate(JUDGE_OUTPUTS):
        _check_labels(targets[:, j], name)
    model = _seeded_backbone(hyper.backbone, hyper.seed, hyper.weights_path)
    fit = fit_classifier(
        model,
        images,
        targets,
        lr=hyper.lr,
        batch_size=hyper.batch_size,
        epochs=hyper.epochs,
        seed=hyper.seed,
        augment=hyper.augment,
        on_epoch=progress,
    )
    model.load_state_dict(fit.snapshots[-1])
    model.eval()
    return JudgeCheckpoint(model, hyper, images.shape[-1], hyper.epochs, fit.epoch_losses)


def _seeded_backbone(name, seed, weights_path, n_outputs=len(JUDGE_OUTPUTS)):
    torch.manual_seed(seed)
    return build_backbone(name, n_outputs, weights_path)


def predict_proba(judge: JudgeCheckpoint, images, attribute: str | None = None, batch_size: int = 256) -> np.ndarray:
    """Sigmoid outputs, (N, 2); a single column when ``attribute`` is given."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[1] != 1:
        raise ShapeError(f"expected (N, 1, H, W), got {images.shape}")
    probs = sigmoid(predict_logits(judge.model, images, batch_size)) if len(images) else np.zeros((0, 2))
    if attribute is None:
        return probs
    return probs[:, JUDGE_OUTPUTS.index("age" if attribute == "age_bin" else attribute)]


def leakage_row(alpha: float, scores, labels) -> dict:
    labels = np.asarray(labels)
    try:
        a = auc(scores, labels)
    except UndefinedAuc:
        warnings.warn(f"alpha {alpha}: labels contain one class, AUC reported as null", stacklevel=2)
        a = None
    m = confusion_metrics(scores, labels, threshold=0.5)
    return {"alpha": float(alpha), "auc": a, "acc": m["ACC"], "sen": m["SEN"], "spe": m["SPE"], "f1": m["F1"]}


def evaluate_leakage(judge: JudgeCheckpoint, edited, labels=None) -> list[dict]:
    """One row of AUC/ACC/SEN/SPE/F1 per alpha for the edited attribute."""
    labels = edited.labels if labels is None else np.asarray(labels)
    if labels is None or len(labels) != len(edited):
        raise ShapeError("labels must align with the edited index")
    rows = []
    for alpha in edited.alphas:
        scores = predict_proba(judge, edited.stack(alpha), edited.attribute)
        rows.append(leakage_row(alpha, scores, labels))
    return rows


def write_leakage_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LEAKAGE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in LEAKAGE_COLUMNS})
