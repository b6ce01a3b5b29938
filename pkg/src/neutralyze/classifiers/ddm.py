"""Multi-label disease diagnosis model with last-epoch snapshot ensembling."""
from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..archive import load_archive, save_archive
from ..dataio import FINDINGS, N_FINDINGS
from ..errors import EmptyDataset, FormatError, ShapeError, UndefinedAuc, UndefinedPrAuc
from ..metrics import auc, confusion_metrics, pr_auc
from .augment import AugmentConfig
from .debias import TrainStrategy
from .harness import fit_classifier, predict_logits, sigmoid
from .networks import build_backbone

MAX_SNAPSHOTS = 20
METRIC_KEYS = ("roc_auc", "pr_auc", "acc", "sen", "spe", "f1")
ENSEMBLE_MODES = ("prob_avg", "metric_avg")


@dataclass
class DdmHyper:
    lr: float = 5e-4
    batch_size: int = 120
    epochs: int = 100
    extra_ensemble_epochs: int = 20
    seed: int = 0
    backbone: str = "convnext_tiny"
    weights_path: str | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    max_pos_weight: float = 1e4
    ensemble: str = "prob_avg"

    def __post_init__(self):
        if self.ensemble not in ENSEMBLE_MODES:
            raise ValueError(f"ensemble must be one of {ENSEMBLE_MODES}")

    @property
    def total_epochs(self) -> int:
        return self.epochs + self.extra_ensemble_epochs

    @property
    def n_snapshots(self) -> int:
        return max(1, min(MAX_SNAPSHOTS, self.extra_ensemble_epochs, self.total_epochs))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DdmHyper":
        d = dict(d)
        if isinstance(d.get("augment"), dict):
            d["augment"] = AugmentConfig.from_dict(d["augment"])
        return cls(**d)


def positive_weights(findings: np.ndarray, max_weight: float = 1e4) -> np.ndarray:
    """Per-finding ``N_neg / N_pos``; findings without positives get ``max_weight``."""
    y = np.asarray(findings)
    pos = y.sum(axis=0).astype(np.float64)
    neg = len(y) - pos
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(pos > 0, neg / np.maximum(pos, 1), max_weight)
    capped = (pos == 0) | (w > max_weight)
    if capped.any():
        names = [FINDINGS[i] if y.shape[1] == N_FINDINGS else str(i) for i in np.flatnonzero(capped)]
        warnings.warn(f"positive weight capped at {max_weight:g} for: {', '.join(names)}", stacklevel=2)
    return np.minimum(w, max_weight)


@dataclass
class DdmCheckpoint:
    backbone: str
    snapshots: list[dict]
    snapshot_epochs: list[int]
    pos_weight: np.ndarray
    hyper: DdmHyper
    strategy: TrainStrategy
    image_size: int
    epoch_losses: list[float] = field(default_factory=list)
    _models: list[nn.Module] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.snapshots:
            raise ValueError("a diagnosis checkpoint needs at least one snapshot")
        if len(self.snapshots) > MAX_SNAPSHOTS:
            raise ValueError(f"at most {MAX_SNAPSHOTS} snapshots are retained")

    def models(self) -> list[nn.Module]:
        if self._models is None:
            self._models = []
            for state in self.snapshots:
                m = build_backbone(self.backbone, N_FINDINGS)
                m.load_state_dict(state)
                self._models.append(m.eval())
        return self._models

    def save(self, path) -> None:
        spec = {
            "kind": "ddm",
            "backbone": self.backbone,
            "n_outputs": N_FINDINGS,
            "image_size": self.image_size,
            "snapshot_epochs": self.snapshot_epochs,
            "pos_weight": [float(w) for w in self.pos_weight],
            "hyper": self.hyper.to_dict(),
            "strategy": self.strategy.to_dict(),
            "epoch_losses": self.epoch_losses,
            "seed": self.hyper.seed,
        }
        save_archive(path, spec, {f"snapshot_{i}": s for i, s in enumerate(self.snapshots)})

    @classmethod
    def load(cls, path) -> "DdmCheckpoint":
        meta, states = load_archive(path)
        if meta.get("kind") != "ddm":
            raise FormatError(f"{path} is not a diagnosis-model checkpoint")
        snaps = [states[f"snapshot_{i}"] for i in range(len(meta["snapshot_epochs"]))]
        ck = cls(
            backbone=meta["backbone"],
            snapshots=snaps,
            snapshot_epochs=list(meta["snapshot_epochs"]),
            pos_weight=np.asarray(meta["pos_weight"]),
            hyper=DdmHyper.from_dict(meta["hyper"]),
            strategy=TrainStrategy(**meta["strategy"]),
            image_size=int(meta["image_size"]),
            epoch_losses=list(meta.get("epoch_losses", [])),
        )
        try:
            ck.models()
        except RuntimeError as exc:
            raise ShapeError(f"snapshot weights do not fit backbone {ck.backbone}: {exc}") from exc
        return ck


def train_ddm(
    images,
    findings,
    strategy: TrainStrategy | None = None,
    hyper: DdmHyper | None = None,
    groups=None,
    progress=None,
) -> DdmCheckpoint:
    """Weighted multi-label BCE training; keeps the last epochs as an ensemble.

    For the neutralized strategy ``images`` are expected to be the edited
    stack already (see the editing module); ``groups`` carries the protected
    attribute bits required by the balanced and mixup strategies.
    """
    strategy = strategy or TrainStrategy.original()
    hyper = hyper or DdmHyper()
    images = np.asarray(images, dtype=np.float32)
    findings = np.asarray(findings)
    if len(images) == 0:
        raise EmptyDataset("no training images")
    if findings.shape != (len(images), N_FINDINGS):
        raise ShapeError(f"findings must be ({len(images)}, {N_FINDINGS}), got {findings.shape}")
    pw = positive_weights(findings, hyper.max_pos_weight)
    torch.manual_seed(hyper.seed)
    model = build_backbone(hyper.backbone, N_FINDINGS, hyper.weights_path)
    fit = fit_classifier(
        model,
        images,
        findings.astype(np.float32),
        lr=hyper.lr,
        batch_size=hyper.batch_size,
        epochs=hyper.total_epochs,
        seed=hyper.seed,
        augment=hyper.augment,
        pos_weight=pw,
        strategy=strategy,
        groups=None if groups is None else np.asarray(groups),
        keep_last=hyper.n_snapshots,
        on_epoch=progress,
    )
    return DdmCheckpoint(
        backbone=hyper.backbone,
        snapshots=fit.snapshots,
        snapshot_epochs=fit.snapshot_epochs,
        pos_weight=pw,
        hyper=hyper,
        strategy=strategy,
        image_size=images.shape[-1],
        epoch_losses=fit.epoch_losses,
    )


def snapshot_probabilities(checkpoint: DdmCheckpoint, images, batch_size: int = 256) -> np.ndarray:
    """(S, N, 15) sigmoid outputs, one slice per retained snapshot."""
    images = np.asarray(images, dtype=np.float32)
    return np.stack([sigmoid(predict_logits(m, images, batch_size)) for m in checkpoint.models()])


def ensemble_probabilities(snapshot_probs) -> np.ndarray:
    return np.asarray(snapshot_probs, dtype=np.float64).mean(axis=0)


@dataclass
class MetricReport:
    per_finding: dict[str, dict]
    macro: dict[str, float | None]
    ensemble: str = "prob_avg"
    n_snapshots: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("finding",) + METRIC_KEYS)
            for name, m in list(self.per_finding.items()) + [("macro", self.macro)]:
                w.writerow([name] + ["" if m[k] is None else m[k] for k in METRIC_KEYS])


def finding_metrics(scores, labels) -> dict:
    labels = np.asarray(labels)
    try:
        roc = auc(scores, labels)
    except UndefinedAuc:
        roc = None
    try:
        pr = pr_auc(scores, labels)
    except UndefinedPrAuc:
        pr = None
    if roc is None:
        # finding absent (or universal) in the test set: every metric is undefined
        return {k: None for k in METRIC_KEYS}
    m = confusion_metrics(scores, labels, threshold=0.5)
    return {"roc_auc": roc, "pr_auc": pr, "acc": m["ACC"], "sen": m["SEN"], "spe": m["SPE"], "f1": m["F1"]}


def _macro(per_finding: dict[str, dict]) -> dict:
    out = {}
    for k in METRIC_KEYS:
        vals = [m[k] for m in per_finding.values() if m[k] is not None and np.isfinite(m[k])]
        out[k] = float(np.mean(vals)) if vals else None
    return out


def report_from_probabilities(probs, findings, names=FINDINGS) -> MetricReport:
    probs = np.asarray(probs)
    findings = np.asarray(findings)
    per = {}
    for j, name in enumerate(names):
        per[name] = finding_metrics(probs[:, j], findings[:, j])
        if per[name]["roc_auc"] is None:
            warnings.warn(f"{name}: one class only in the test set, excluded from macro", stacklevel=2)
    return MetricReport(per_finding=per, macro=_macro(per))


def evaluate_ddm(checkpoint: DdmCheckpoint, images, findings, ensemble: str | None = None) -> MetricReport:
    """Per-finding and macro metrics of the snapshot ensemble.

    ``prob_avg`` averages probabilities across snapshots before scoring;
    ``metric_avg`` scores each snapshot and averages the metric values.
    """
    ensemble = ensemble or checkpoint.hyper.ensemble
    if ensemble not in ENSEMBLE_MODES:
        raise ValueError(f"ensemble must be one of {ENSEMBLE_MODES}")
    findings = np.asarray(findings)
    snaps = snapshot_probabilities(checkpoint, images)
    if ensemble == "prob_avg":
        report = report_from_probabilities(ensemble_probabilities(snaps), findings)
    else:
        reports = [report_from_probabilities(p, findings) for p in snaps]
        per = {}
        for name in FINDINGS:
            per[name] = {}
            for k in METRIC_KEYS:
                vals = [r.per_finding[name][k] for r in reports]
                per[name][k] = None if any(v is None for v in vals) else float(np.mean(vals))
        report = MetricReport(per_finding=per, macro=_macro(per))
    report.ensemble = ensemble
    report.n_snapshots = len(snaps)
    return report
