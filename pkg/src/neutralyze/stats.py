"""Hypothesis tests: Pearson, DeLong, Benjamini-Hochberg, paired bootstrap,
Friedman and Nemenyi."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from .errors import (
    InvalidP,
    ResamplingExhausted,
    ShapeError,
    TooFewMethods,
    UndefinedAuc,
    UndefinedCorrelation,
    UnsupportedK,
)


@dataclass
class TestResult:
    estimate: float
    ci_lo: float
    ci_hi: float
    p_value: float
    n: int
    method: str
    flags: list[str] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# correlation


def pearson_r(x, y) -> tuple[float, float]:
    """Sample Pearson r with a two-sided p-value from Student's t on n-2 dof."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("x and y must be equal-length vectors")
    n = x.size
    if n < 3:
        raise UndefinedCorrelation("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("zero variance")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    p = float(2 * sps.t.sf(abs(t), n - 2))
    return r, min(1.0, p)


# --------------------------------------------------------------------------
# DeLong


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = x.size
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def delong_components(scores: np.ndarray, labels: np.ndarray):
    """AUCs and structural components for k score vectors on shared instances.

    Returns ``(aucs, v10, v01)`` where v10 is (k, m) over positives and v01 is
    (k, n) over negatives.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    y = np.asarray(labels).astype(bool)
    pos, neg = scores[:, y], scores[:, ~y]
    m, n = pos.shape[1], neg.shape[1]
    if m == 0 or n == 0:
        raise UndefinedAuc("DeLong needs both classes")
    k = scores.shape[0]
    tx = np.empty((k, m))
    ty = np.empty((k, n))
    tz = np.empty((k, m + n))
    for r in range(k):
        tx[r] = _midranks(pos[r])
        ty[r] = _midranks(neg[r])
        tz[r] = _midranks(np.concatenate([pos[r], neg[r]]))
    aucs = tz[:, :m].sum(axis=1) / (m * n) - (m + 1.0) / (2.0 * n)
    v10 = (tz[:, :m] - tx) / n
    v01 = 1.0 - (tz[:, m:] - ty) / m
    return aucs, v10, v01


def delong_covariance(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    aucs, v10, v01 = delong_components(scores, labels)
    m, n = v10.shape[1], v01.shape[1]
    s10 = np.atleast_2d(np.cov(v10)) if m > 1 else np.zeros((aucs.size, aucs.size))
    s01 = np.atleast_2d(np.cov(v01)) if n > 1 else np.zeros((aucs.size, aucs.size))
    return aucs, s10 / m + s01 / n


def delong_test(scores_a, scores_b, labels, confidence: float = 0.95) -> TestResult:
    """Two-sided DeLong test for the difference of two correlated AUCs."""
    a = np.asarray(scores_a, dtype=np.float64).ravel()
    b = np.asarray(scores_b, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if not (a.shape == b.shape == y.shape):
        raise ShapeError("scores and labels must be aligned")
    aucs, cov = delong_covariance(np.vstack([a, b]), y)
    delta = float(aucs[0] - aucs[1])
    var = float(cov[0, 0] + cov[1, 1] - 2 * cov[0, 1])
    var = max(var, 0.0)
    z_crit = sps.norm.ppf(0.5 + confidence / 2)
    flags = []
    if var <= 1e-15:
        var = 0.0
        p = 1.0 if delta == 0 else 0.0
        if delta != 0:
            flags.append("DegenerateVariance")
    else:
        z = delta / math.sqrt(var)
        p = float(2 * sps.norm.sf(abs(z)))
    half = z_crit * math.sqrt(var)
    return TestResult(
        estimate=delta,
        ci_lo=delta - half,
        ci_hi=delta + half,
        p_value=min(1.0, p),
        n=int(y.size),
        method="delong",
        flags=flags,
    )


# --------------------------------------------------------------------------
# multiplicity


def benjamini_hochberg(pvals) -> np.ndarray:
    """Step-up BH adjusted p-values, returned in input order."""
    p = np.asarray(pvals, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError("expected a vector of p-values")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidP("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="mergesort")
    ranked = p[order] * m / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(ranked, 1.0)
    return np.maximum(out, p)


# --------------------------------------------------------------------------
# bootstrap


def sign_test_p(deltas) -> float:
    """Two-sided sign test around zero; exact zeros count half to each side."""
    d = np.asarray(deltas, dtype=np.float64)
    n = d.size
    pos = np.sum(d > 0) + 0.5 * np.sum(d == 0)
    neg = n - pos
    k = math.floor(min(pos, neg))
    return float(min(1.0, 2 * sps.binom.cdf(k, n, 0.5)))


def bootstrap_paired(
    metric: Callable,
    preds_a,
    preds_b,
    labels,
    n_boot: int = 1000,
    seed: int = 0,
    confidence: float = 0.95,
) -> TestResult:
    """Paired image-level bootstrap of ``metric(a) - metric(b)``.

    Each resample draws images with replacement, the same draw for both
    models. Resamples on which the metric is undefined are redrawn.
    """
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    y = np.asarray(labels)
    if a.shape != b.shape or a.shape[0] != y.shape[0]:
        raise ShapeError("predictions and labels must be aligned along axis 0")
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    n = y.shape[0]
    deltas = np.empty(n_boot)
    attempts = 0
    for i in range(n_boot):
        j = 0
        while True:
            attempts += 1
            if attempts > 10 * n_boot:
                raise ResamplingExhausted(f"metric undefined on too many resamples ({attempts - 1})")
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))
            idx = rng.integers(0, n, size=n)
            try:
                d = float(metric(a[idx], y[idx])) - float(metric(b[idx], y[idx]))
            except (UndefinedAuc, ValueError, ZeroDivisionError):
                d = float("nan")
            if math.isfinite(d):
                deltas[i] = d
                break
            j += 1
    tail = (1 - confidence) / 2 * 100
    lo, hi = np.percentile(deltas, [tail, 100 - tail])
    return TestResult(
        estimate=float(deltas.mean()),
        ci_lo=float(lo),
        ci_hi=float(hi),
        p_value=sign_test_p(deltas),
        n=int(n),
        method="bootstrap_sign",
    )


# --------------------------------------------------------------------------
# rank tests


@dataclass
class RankTable:
    """Performance values with methods as columns and tasks as rows."""

    values: np.ndarray
    methods: list[str]
    tasks: list[str] | None = None
    higher_is_better: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.methods):
            raise ShapeError("values must be (tasks, methods)")

    @property
    def ranks(self) -> np.ndarray:
        """Per-task ranks, 1 = best, averaged on ties."""
        v = -self.values if self.higher_is_better else self.values
        return np.vstack([sps.rankdata(row) for row in v])

    @property
    def average_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def n_tasks(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def friedman(table: RankTable) -> tuple[float, float]:
    """Friedman chi-square on average ranks (no tie correction) and its p-value."""
    k, n = table.k, table.n_tasks
    if k < 3:
        raise TooFewMethods("Friedman needs at least 3 methods")
    if n < 2:
        raise ValueError("Friedman needs at least 2 tasks")
    rank_sums = table.ranks.sum(axis=0)
    chi2 = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    chi2 = max(0.0, float(chi2))
    return chi2, float(sps.chi2.sf(chi2, k - 1))


# Studentized range quantiles divided by sqrt(2), infinite dof, k = 2..10.
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass
class NemenyiResult:
    methods: list[str]
    average_ranks: np.ndarray
    critical_difference: float
    rank_difference: np.ndarray
    significant: np.ndarray
    cliques: list[list[str]]

    def to_json(self) -> str:
        return json.dumps(cd_payload(self), indent=2)


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    if alpha not in NEMENYI_Q:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if k < 2 or k > 10:
        raise UnsupportedK(f"q table covers k = 2..10, got {k}")
    q = NEMENYI_Q[alpha][k - 2]
    return q * math.sqrt(k * (k + 1) / (6.0 * n))


def _cliques(names, ranks, cd) -> list[list[str]]:
    order = np.argsort(ranks, kind="mergesort")
    r = ranks[order]
    groups = []
    for i in range(len(r)):
        j = i
        while j + 1 < len(r) and r[j + 1] - r[i] <= cd:
            j += 1
        if j > i:
            span = (i, j)
            if not any(a <= span[0] and span[1] <= b for a, b in groups):
                groups.append(span)
    return [[names[order[t]] for t in range(a, b + 1)] for a, b in groups]


def nemenyi(table: RankTable, alpha: float = 0.05) -> NemenyiResult:
    k, n = table.k, table.n_tasks
    cd = nemenyi_cd(k, n, alpha)
    avg = table.average_ranks
    diff = avg[:, None] - avg[None, :]
    sig = np.abs(diff) > cd
    return NemenyiResult(
        methods=list(table.methods),
        average_ranks=avg,
        critical_difference=cd,
        rank_difference=diff,
        significant=sig,
        cliques=_cliques(list(table.methods), avg, cd),
    )


def cd_payload(result: NemenyiResult) -> dict:
    """JSON-ready critical-difference description for plotting."""
    return {
        "critical_difference": result.critical_difference,
        "methods": [
            {"method": m, "avg_rank": float(r)} for m, r in zip(result.methods, result.average_ranks)
        ],
        "cliques": result.cliques,
        "significant_pairs": [
            [result.methods[i], result.methods[j]]
            for i in range(len(result.methods))
            for j in range(i + 1, len(result.methods))
            if result.significant[i, j]
        ],
    }
