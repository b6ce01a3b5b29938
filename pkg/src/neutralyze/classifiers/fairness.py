"""Subgroup fairness summaries over per-finding predictions."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..dataio import FINDINGS
from ..errors import FairnessUndefined, UndefinedAuc
from ..metrics import auc

TABLE4_COLUMNS = ("method", "attribute", "worst_case_auc", "auc_gap", "auc_sd")


@dataclass
class FindingFairness:
    finding: str
    group_aucs: dict
    min_auc: float
    gap: float
    sd: float


@dataclass
class FairnessReport:
    per_finding: list[FindingFairness] = field(default_factory=list)
    undefined: list[str] = field(default_factory=list)

    def _median(self, attr):
        vals = [getattr(f, attr) for f in self.per_finding]
        return float(np.median(vals)) if vals else None

    @property
    def median_min_auc(self):
        return self._median("min_auc")

    @property
    def median_gap(self):
        return self._median("gap")

    @property
    def median_sd(self):
        return self._median("sd")

    def table4_row(self, method: str, attribute: str) -> dict:
        return {
            "method": method,
            "attribute": attribute,
            "worst_case_auc": self.median_min_auc,
            "auc_gap": self.median_gap,
            "auc_sd": self.median_sd,
        }

    def to_dict(self) -> dict:
        return {
            "per_finding": [
                {
                    "finding": f.finding,
                    "group_aucs": {str(k): v for k, v in f.group_aucs.items()},
                    "min_auc": f.min_auc,
                    "gap": f.gap,
                    "sd": f.sd,
                }
                for f in self.per_finding
            ],
            "undefined": self.undefined,
            "median": {"min_auc": self.median_min_auc, "gap": self.median_gap, "sd": self.median_sd},
        }


def summarize_group_aucs(group_aucs) -> tuple[float, float, float]:
    """(min, max - min, sample standard deviation) of per-group AUCs."""
    v = np.asarray(list(group_aucs), dtype=np.float64)
    if v.size < 2:
        raise FairnessUndefined("need at least two groups")
    return float(v.min()), float(v.max() - v.min()), float(v.std(ddof=1))


def finding_fairness(scores, labels, groups, finding: str = "") -> FindingFairness:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    per_group = {}
    for g in np.unique(groups):
        mask = groups == g
        try:
            per_group[g.item()] = auc(scores[mask], labels[mask])
        except UndefinedAuc:
            warnings.warn(f"{finding or 'finding'}: group {g} has one class only and is excluded", stacklevel=2)
    if len(per_group) < 2:
        raise FairnessUndefined(f"{finding or 'finding'}: fewer than two groups with both classes")
    lo, gap, sd = summarize_group_aucs(per_group.values())
    return FindingFairness(finding=finding, group_aucs=per_group, min_auc=lo, gap=gap, sd=sd)


def subgroup_fairness(probs, labels, group_bits, finding_names=None) -> FairnessReport:
    """Per-finding worst-case AUC, gap and SD across groups, plus medians.

    ``probs`` and ``labels`` are (N,) or (N, F); ``group_bits`` is (N,).
    Findings without two valid groups are listed under ``undefined``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim == 1:
        return FairnessReport(per_finding=[finding_fairness(probs, labels, group_bits, finding="finding")])
    names = list(finding_names or (FINDINGS if probs.shape[1] == len(FINDINGS) else range(probs.shape[1])))
    report = FairnessReport()
    for j, name in enumerate(names):
        try:
            report.per_finding.append(finding_fairness(probs[:, j], labels[:, j], group_bits, str(name)))
        except FairnessUndefined:
            report.undefined.append(str(name))
    return report


def write_table4(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE4_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in TABLE4_COLUMNS})
