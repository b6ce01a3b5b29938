"""Classification metrics and patch-wise SSIM."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import PatchTooLarge, ShapeError, UndefinedAuc, UndefinedPrAuc


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for row in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class SsimResult:
    mean_ssim: float
    per_patch: list[float] = field(default_factory=list)
    patch_size: int = 100


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} differ")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return s, y.astype(bool)


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of ROC-AUC, ties credited one half."""
    s, y = _binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAuc("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels) -> RocCurve:
    """Full ROC curve with one point per distinct score, starting at (0, 0)."""
    s, y = _binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos, n_neg = y.sum(), (~y).sum()
    tpr = np.r_[0.0, tps / n_pos] if n_pos else np.r_[0.0, np.zeros_like(tps, dtype=float)]
    fpr = np.r_[0.0, fps / n_neg] if n_neg else np.r_[0.0, np.zeros_like(fps, dtype=float)]
    thresholds = np.r_[np.inf, s[distinct]]
    area = float(np.trapezoid(tpr, fpr)) if n_pos and n_neg else float("nan")
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=area)


def confusion_counts(scores, labels, threshold: float = 0.5) -> tuple[int, int, int, int]:
    s, y = _binary(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    return tp, fp, fn, tn


def metrics_from_counts(tp, fp, fn, tn) -> dict[str, float]:
    def ratio(a, b):
        return a / b if b else 0.0

    sen = ratio(tp, tp + fn)
    prec = ratio(tp, tp + fp)
    f1 = 2 * prec * sen / (prec + sen) if prec + sen > 0 else 0.0
    return {
        "ACC": ratio(tp + tn, tp + fp + fn + tn),
        "SEN": sen,
        "SPE": ratio(tn, tn + fp),
        "F1": f1,
    }


def confusion_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """ACC, SEN, SPE and F1 with predictions ``score >= threshold``.

    Empty denominators give 0, and F1 is 0 when precision + recall is 0.
    """
    return metrics_from_counts(*confusion_counts(scores, labels, threshold))


def pr_auc(scores, labels) -> float:
    """Area under the precision-recall step function (average precision).

    Tied scores form a single operating point.
    """
    s, y = _binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedPrAuc("PR-AUC needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[distinct].astype(np.float64)
    precision = tps / (distinct + 1)
    recall = tps / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# --------------------------------------------------------------------------
# SSIM


def _tile_ssim(a, b, c1, c2) -> float:
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(num / den)


def _gaussian_ssim(a, b, data_range) -> float:
    from skimage.metrics import structural_similarity

    return float(
        structural_similarity(
            a, b, data_range=data_range, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
        )
    )


def ssim_patchwise(img_a, img_b, patch: int = 100, data_range: float = 2.0, window: str = "tile") -> SsimResult:
    """Mean SSIM over non-overlapping ``patch`` x ``patch`` tiles; partial tiles are dropped.

    ``window="tile"`` uses whole-tile statistics; ``"gaussian"`` runs an
    11x11, sigma 1.5 Gaussian-window SSIM inside each tile.
    """
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes {a.shape} and {b.shape} differ")
    a, b = np.squeeze(a), np.squeeze(b)
    if a.ndim != 2:
        raise ShapeError("SSIM expects single-channel 2-D images")
    h, w = a.shape
    if patch > h or patch > w:
        raise PatchTooLarge(f"patch {patch} exceeds image {a.shape}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    values = []
    for i in range(0, h - patch + 1, patch):
        for j in range(0, w - patch + 1, patch):
            ta, tb = a[i:i + patch, j:j + patch], b[i:i + patch, j:j + patch]
            if window == "tile":
                values.append(_tile_ssim(ta, tb, c1, c2))
            elif window == "gaussian":
                values.append(_gaussian_ssim(ta, tb, data_range))
            else:
                raise ValueError(f"unknown window {window!r}")
    return SsimResult(mean_ssim=float(np.mean(values)), per_patch=values, patch_size=patch)
