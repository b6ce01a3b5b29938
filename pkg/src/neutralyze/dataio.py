"""Manifests, preprocessing, patient-level splits, cohort statistics and the
synthetic desk-scale dataset."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import stats

from . import arrayio
from .errors import (
    DegenerateExpected,
    EmptySample,
    EmptyTable,
    FormatError,
    InvalidAge,
    InvalidImage,
    InvalidRatios,
    InvalidSize,
)

# NIH ChestX-ray14 label set: 14 pathologies plus "No Finding", alphabetical.
FINDINGS: tuple[str, ...] = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "No Finding",
    "Nodule",
    "Pleural_Thickening",
    "Pneumonia",
    "Pneumothorax",
)
N_FINDINGS = len(FINDINGS)
NO_FINDING = FINDINGS.index("No Finding")
AGE_THRESHOLD = 60.0
MANIFEST_COLUMNS = ("image", "patient_id", "sex", "age", "labels")


@dataclass
class ImageRecord:
    image_id: str
    patient_id: str
    pixels: np.ndarray | None
    sex: int
    age_bin: int
    findings: np.ndarray
    age_years: float | None = None

    def __post_init__(self):
        self.findings = np.asarray(self.findings, dtype=np.int64)
        if self.findings.shape != (N_FINDINGS,):
            raise ValueError(f"findings must have length {N_FINDINGS}")
        if self.sex not in (0, 1) or self.age_bin not in (0, 1):
            raise ValueError("sex and age_bin must be 0 or 1")
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.float32)
            if self.pixels.size and (self.pixels.min() < -1.0 or self.pixels.max() > 1.0):
                raise InvalidImage("pixels must lie in [-1, 1]")

    def attribute(self, name: str) -> int:
        if name == "sex":
            return self.sex
        if name in ("age", "age_bin"):
            return self.age_bin
        raise KeyError(name)


@dataclass
class DatasetSplit:
    train: list[ImageRecord]
    val: list[ImageRecord]
    test: list[ImageRecord]
    seed: int

    def items(self):
        return (("train", self.train), ("val", self.val), ("test", self.test))

    def assignment(self) -> dict[str, str]:
        """image_id -> split name."""
        return {r.image_id: name for name, recs in self.items() for r in recs}


@dataclass
class CohortStats:
    counts: dict[str, dict[int, int]]
    chi2: float
    p_value: float
    wilson_lo: float
    wilson_hi: float
    cramers_v: float
    proportion: float = field(default=float("nan"))


# --------------------------------------------------------------------------
# preprocessing


def preprocess_image(raw, target_size: int = 256) -> np.ndarray:
    """Bilinear resize to ``target_size`` square, then map [0, 255] linearly to [-1, 1]."""
    arr = np.asarray(raw, dtype=np.float32)
    if arr.size == 0:
        raise InvalidImage("empty image")
    if arr.ndim == 3:
        # RGB(A) input: luminance only
        arr = arr[..., :3].mean(axis=-1)
    if arr.ndim != 2:
        raise InvalidImage(f"expected a 2-D grid, got shape {arr.shape}")
    if target_size < 16 or target_size % 16:
        raise InvalidSize(f"target_size {target_size} must be >= 16 and divisible by 16")
    if arr.shape != (target_size, target_size):
        img = Image.fromarray(arr, mode="F")
        arr = np.asarray(img.resize((target_size, target_size), Image.BILINEAR), dtype=np.float32)
    out = arr / 127.5 - 1.0
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def load_image(path, target_size: int = 256) -> np.ndarray:
    with Image.open(path) as img:
        raw = np.asarray(img.convert("L"), dtype=np.float32)
    return preprocess_image(raw, target_size)


def bin_age(age_years: float) -> int:
    age = float(age_years)
    if math.isnan(age) or math.isinf(age) or age < 0:
        raise InvalidAge(f"invalid age {age_years!r}")
    return int(age >= AGE_THRESHOLD)


def parse_labels(field_value: str) -> np.ndarray:
    """Pipe-separated finding names to a 15-bit vector.

    Tokens may carry a ``:value`` suffix; blank, ``0``, ``-1`` and ``uncertain``
    values all map to 0.
    """
    vec = np.zeros(N_FINDINGS, dtype=np.int64)
    for token in (field_value or "").split("|"):
        token = token.strip()
        if not token:
            continue
        name, _, value = token.partition(":")
        name = name.strip()
        if name not in FINDINGS:
            raise FormatError(f"unknown finding {name!r}")
        value = value.strip().lower()
        if value in ("", "1", "1.0", "positive"):
            vec[FINDINGS.index(name)] = 1
    return vec


def format_labels(findings) -> str:
    return "|".join(name for name, bit in zip(FINDINGS, findings) if bit)


def parse_sex(value) -> int:
    v = str(value).strip().lower()
    if v in ("1", "m", "male"):
        return 1
    if v in ("0", "f", "female"):
        return 0
    raise FormatError(f"non-binary sex value {value!r}")


def read_manifest(path) -> list[dict]:
    """Rows of the canonical manifest with parsed ``sex``, ``age_bin`` and ``findings``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"manifest {path} lacks columns {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                age = float(row["age"])
                rows.append(
                    {
                        "image": row["image"],
                        "patient_id": row["patient_id"],
                        "sex": parse_sex(row["sex"]),
                        "age": age,
                        "age_bin": bin_age(age),
                        "findings": parse_labels(row["labels"]),
                        "split": (row.get("split") or "").strip() or None,
                    }
                )
            except (FormatError, InvalidAge, ValueError) as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return rows


def write_manifest(records: Sequence[ImageRecord], path, splits: dict[str, str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS + (("split",) if splits else ()))
        for r in records:
            age = r.age_years if r.age_years is not None else (70.0 if r.age_bin else 40.0)
            row = [r.image_id, r.patient_id, r.sex, f"{age:.1f}", format_labels(r.findings)]
            if splits:
                row.append(splits.get(r.image_id, ""))
            writer.writerow(row)


def ingest_manifest(manifest_path, image_root, target_size: int = 256) -> list[ImageRecord]:
    """Load every image listed in a manifest and preprocess it."""
    records = []
    for row in read_manifest(manifest_path):
        pixels = load_image(Path(image_root) / row["image"], target_size)
        records.append(
            ImageRecord(
                image_id=row["image"],
                patient_id=row["patient_id"],
                pixels=pixels,
                sex=row["sex"],
                age_bin=row["age_bin"],
                findings=row["findings"],
                age_years=row["age"],
            )
        )
    return records


def save_dataset(records: Sequence[ImageRecord], out_dir, split: DatasetSplit | None = None) -> Path:
    """Persist records as ``images.npy`` plus ``manifest.csv`` (with a split column)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if records:
        stack = np.stack([r.pixels for r in records])[:, None]
    else:
        stack = np.zeros((0, 1, 0, 0), dtype=np.float32)
    arrayio.write_array(stack, out / "images.npy")
    write_manifest(records, out / "manifest.csv", split.assignment() if split else None)
    return out


def load_dataset(manifest_path) -> tuple[list[ImageRecord], dict[str, str]]:
    """Inverse of :func:`save_dataset`; returns records and image_id -> split."""
    manifest_path = Path(manifest_path)
    rows = read_manifest(manifest_path)
    stack = arrayio.read_array(manifest_path.parent / "images.npy")
    if stack.shape[0] != len(rows):
        raise FormatError(f"images.npy has {stack.shape[0]} images, manifest lists {len(rows)}")
    records, splits = [], {}
    for row, pix in zip(rows, stack):
        records.append(
            ImageRecord(
                image_id=row["image"],
                patient_id=row["patient_id"],
                pixels=pix[0],
                sex=row["sex"],
                age_bin=row["age_bin"],
                findings=row["findings"],
                age_years=row["age"],
            )
        )
        if row["split"]:
            splits[row["image"]] = row["split"]
    return records, splits


# --------------------------------------------------------------------------
# splitting


def split_by_patient(records: Sequence[ImageRecord], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(f"ratios {ratios} must be three nonnegative values summing to 1")
    patients = sorted({r.patient_id for r in records})
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]
    n = len(order)
    n_train = int(round(ratios[0] * n))
    n_val = int(round((ratios[0] + ratios[1]) * n)) - n_train
    bucket = {}
    for i, pid in enumerate(order):
        bucket[pid] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    parts = {"train": [], "val": [], "test": []}
    for r in records:
        parts[bucket[r.patient_id]].append(r)
    return DatasetSplit(seed=seed, **parts)


def split_from_assignment(records: Sequence[ImageRecord], assignment: dict[str, str], seed: int = 0) -> DatasetSplit:
    parts = {"train": [], "val": [], "test": []}
    for r in records:
        parts[assignment[r.image_id]].append(r)
    return DatasetSplit(seed=seed, **parts)


# --------------------------------------------------------------------------
# cohort statistics


def chi_squared_gof(observed, expected) -> tuple[float, float]:
    o = np.asarray(observed, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    if o.shape != e.shape or o.ndim != 1 or o.size < 2:
        raise ValueError("observed and expected must be equal-length vectors of length >= 2")
    if np.any(e <= 0):
        raise DegenerateExpected("every expected count must be positive")
    chi2 = float(np.sum((o - e) ** 2 / e))
    # regularized upper incomplete gamma Q(k/2, x/2)
    from scipy.special import gammaincc

    p = float(gammaincc((o.size - 1) / 2.0, chi2 / 2.0))
    return chi2, p


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        raise EmptySample("n must be at least 1")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, n={n}]")
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def contingency_chi2(table) -> float:
    t = np.asarray(table, dtype=np.float64)
    total = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / total
    mask = expected > 0
    return float(np.sum((t[mask] - expected[mask]) ** 2 / expected[mask]))


def cramers_v(table) -> float:
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or min(t.shape) < 2:
        raise ValueError("table must be at least 2x2")
    if np.any(t < 0):
        raise ValueError("counts must be nonnegative")
    total = t.sum()
    if total <= 0:
        raise EmptyTable("table is all zeros")
    chi2 = contingency_chi2(t)
    v = math.sqrt(chi2 / (total * (min(t.shape) - 1)))
    return min(1.0, v)


def cohort_stats(records: Iterable[ImageRecord], confidence: float = 0.95) -> CohortStats:
    """Imbalance summary for a cohort.

    chi2/p test the age bins against equal frequencies, the Wilson interval
    covers the share of the smallest sex x age cell, and Cramer's V measures
    the sex-age association.
    """
    recs = list(records)
    sex = np.array([r.sex for r in recs])
    age = np.array([r.age_bin for r in recs])
    n = len(recs)
    if n == 0:
        raise EmptySample("empty cohort")
    age_counts = np.bincount(age, minlength=2)
    chi2, p = chi_squared_gof(age_counts, np.full(2, n / 2.0))
    table = np.zeros((2, 2), dtype=np.int64)
    np.add.at(table, (sex, age), 1)
    k = int(table.min())
    lo, hi = wilson_interval(k, n, confidence)
    try:
        v = cramers_v(table)
    except EmptyTable:
        v = 0.0
    return CohortStats(
        counts={
            "sex": {0: int((sex == 0).sum()), 1: int((sex == 1).sum())},
            "age_bin": {0: int(age_counts[0]), 1: int(age_counts[1])},
        },
        chi2=chi2,
        p_value=p,
        wilson_lo=lo,
        wilson_hi=hi,
        cramers_v=v,
        proportion=k / n,
    )


# --------------------------------------------------------------------------
# synthetic dataset

# Pathologies ordered from most to least frequent in ChestX-ray14.
_FREQUENCY_ORDER = (
    "Infiltration",
    "Effusion",
    "Atelectasis",
    "Nodule",
    "Mass",
    "Pneumothorax",
    "Consolidation",
    "Pleural_Thickening",
    "Cardiomegaly",
    "Emphysema",
    "Edema",
    "Fibrosis",
    "Pneumonia",
    "Hernia",
)
PATHOLOGY_PREVALENCE = dict(zip(_FREQUENCY_ORDER, np.geomspace(0.17, 0.01, len(_FREQUENCY_ORDER))))
MALE_FRACTION = 0.57
OLD_FRACTION = 0.24

# Blob centres (row, col) as fractions of image size; keeps clear of the
# upper-left sex cue and the lower-third age band.
_BLOB_CENTRES = (
    (0.15, 0.62), (0.15, 0.85), (0.38, 0.62), (0.38, 0.85),
    (0.55, 0.15), (0.55, 0.38), (0.50, 0.62), (0.50, 0.85),
    (0.62, 0.15), (0.62, 0.38), (0.62, 0.62), (0.62, 0.85),
    (0.90, 0.30), (0.90, 0.70),
)
SEX_DISC = {"centre": (0.22, 0.22), "radius": 0.11, "gain": 0.4}
AGE_BAND = {"rows": (0.74, 0.80), "gain": 0.35}


def _grid(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    return (yy + 0.5) / size, (xx + 0.5) / size


def _anatomy(size, rng):
    yy, xx = _grid(size)
    body = 0.5 + 0.02 * rng.standard_normal()
    img = np.full((size, size), body, dtype=np.float32)
    for cx in (0.32, 0.68):
        cx = cx + 0.02 * rng.standard_normal()
        lung = ((yy - 0.48) / 0.30) ** 2 + ((xx - cx) / 0.15) ** 2
        img -= 0.25 * np.exp(-lung ** 2)
    img += 0.03 * rng.standard_normal((size, size)).astype(np.float32)
    return img


def render_synthetic(size, sex, age_bin, findings, rng) -> np.ndarray:
    """Draw one image in [-1, 1] with the attribute cues and finding blobs."""
    yy, xx = _grid(size)
    img = _anatomy(size, rng)
    if sex:
        cy, cx = SEX_DISC["centre"]
        jitter = 0.015 * rng.standard_normal(2)
        d2 = (yy - cy - jitter[0]) ** 2 + (xx - cx - jitter[1]) ** 2
        img += SEX_DISC["gain"] * (d2 <= SEX_DISC["radius"] ** 2)
    if age_bin:
        r0, r1 = AGE_BAND["rows"]
        img += AGE_BAND["gain"] * ((yy >= r0) & (yy < r1))
    pathologies = [f for f in FINDINGS if f != "No Finding"]
    for j, name in enumerate(pathologies):
        if findings[FINDINGS.index(name)]:
            cy, cx = _BLOB_CENTRES[j]
            cy, cx = cy + 0.02 * rng.standard_normal(), cx + 0.02 * rng.standard_normal()
            blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.035 ** 2))
            img += 0.35 * blob
    return np.clip(img * 2.0 - 1.0, -1.0, 1.0).astype(np.float32)


def make_synthetic_dataset(n_images: int, image_size: int = 64, seed: int = 0) -> list[ImageRecord]:
    if n_images < 8:
        raise ValueError("n_images must be at least 8")
    if image_size < 16 or image_size % 16:
        raise InvalidSize(f"image_size {image_size} must be divisible by 16")
    # patient-level attributes from one stream, pixels from per-image streams
    top = np.random.default_rng(seed)
    records = []
    pathologies = [f for f in FINDINGS if f != "No Finding"]
    prevalence = np.array([PATHOLOGY_PREVALENCE[f] for f in pathologies])
    patient = 0
    while len(records) < n_images:
        n_imgs = min(int(top.integers(1, 4)), n_images - len(records))
        sex = int(top.random() < MALE_FRACTION)
        base_age = float(top.uniform(60, 90) if top.random() < OLD_FRACTION else top.uniform(18, 59))
        for _ in range(n_imgs):
            idx = len(records)
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
            age = base_age
            findings = np.zeros(N_FINDINGS, dtype=np.int64)
            hits = rng.random(len(pathologies)) < prevalence
            for name, hit in zip(pathologies, hits):
                findings[FINDINGS.index(name)] = int(hit)
            findings[NO_FINDING] = int(not hits.any())
            age_bin = bin_age(age)
            records.append(
                ImageRecord(
                    image_id=f"syn_{idx:06d}.png",
                    patient_id=f"P{patient:06d}",
                    pixels=render_synthetic(image_size, sex, age_bin, findings, rng),
                    sex=sex,
                    age_bin=age_bin,
                    findings=findings,
                    age_years=round(age, 1),
                )
            )
        patient += 1
    return records


def disc_intensity(pixels) -> np.ndarray:
    """Mean intensity over the sex-cue quadrant, for a batch ``(N, H, W)`` or single image."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    arr = arr.reshape(arr.shape[0], arr.shape[-2], arr.shape[-1])
    h, w = arr.shape[-2:]
    return arr[:, : h // 2, : w // 2].mean(axis=(1, 2))


def stack_pixels(records: Sequence[ImageRecord]) -> np.ndarray:
    return np.stack([r.pixels for r in records]).astype(np.float32)[:, None]


def attribute_vector(records: Sequence[ImageRecord], attribute: str) -> np.ndarray:
    return np.array([r.attribute(attribute) for r in records], dtype=np.int64)


def findings_matrix(records: Sequence[ImageRecord]) -> np.ndarray:
    return np.stack([r.findings for r in records]).astype(np.int64)


def dataset_dir_for(manifest_path) -> str:
    return os.fspath(Path(manifest_path).parent)
