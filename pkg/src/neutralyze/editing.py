"""Alpha-sweep generation and the on-disk edited-image container.

Layout: ``{root}/{attribute}/{split}/alpha_{a:.1f}.npy`` plus ``index.json``
listing the image ids, their source split and the alphas present.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .arrayio import read_array, write_array
from .dataio import ImageRecord, attribute_vector, stack_pixels
from .errors import FormatError, InvalidAlpha, ShapeError
from .neutralizer.networks import Generator, blend_attribute

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(11))

__all__ = [
    "DEFAULT_ALPHAS",
    "EditedImageSet",
    "alpha_filename",
    "alpha_sweep",
    "read_array",
    "read_edited",
    "write_array",
    "write_edited",
]


def alpha_filename(alpha: float) -> str:
    return f"alpha_{alpha:.1f}.npy" if round(alpha, 1) == alpha else f"alpha_{alpha:g}.npy"


@dataclass
class EditedImageSet:
    arrays: dict[float, np.ndarray]
    alphas: list[float]
    index: list[tuple[str, str]]
    attribute: str = "sex"
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.alphas = [float(a) for a in self.alphas]
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise InvalidAlpha(f"alphas must be strictly increasing: {self.alphas}")
        if set(self.arrays) != set(self.alphas):
            raise ShapeError("one stack per alpha is required")
        n = len(self.index)
        for a in self.alphas:
            if self.arrays[a].shape[0] != n:
                raise ShapeError(f"alpha {a}: {self.arrays[a].shape[0]} images, index has {n}")

    def __len__(self) -> int:
        return len(self.index)

    def stack(self, alpha: float) -> np.ndarray:
        for a in self.alphas:
            if abs(a - alpha) < 1e-9:
                return self.arrays[a]
        raise KeyError(f"alpha {alpha} not in {self.alphas}")

    @property
    def image_ids(self) -> list[str]:
        return [i for i, _ in self.index]


def _as_batch(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


@torch.no_grad()
def alpha_sweep(
    generator: Generator,
    records: Sequence[ImageRecord],
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    attribute: str = "sex",
    batch_size: int = 64,
    splits: dict[str, str] | None = None,
) -> EditedImageSet:
    """Edit every record at each alpha; alpha 0 emits the originals verbatim."""
    if hasattr(generator, "generator"):
        generator = generator.generator
    size = generator.spec.image_size
    pixels = stack_pixels(records) if records else np.zeros((0, 1, size, size), np.float32)
    if pixels.shape[1:] != (1, size, size):
        raise ShapeError(f"records are {pixels.shape[1:]}, checkpoint expects (1, {size}, {size})")
    attrs = attribute_vector(records, attribute).astype(np.float32).reshape(-1, 1) if records else np.zeros((0, 1))
    was_training = generator.training
    generator.eval()
    arrays = {}
    for alpha in alphas:
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise InvalidAlpha(f"alpha {alpha} outside [0, 1]")
        if alpha == 0.0:
            arrays[alpha] = pixels.copy()
            continue
        out = np.empty_like(pixels)
        for s in range(0, len(pixels), batch_size):
            x = _as_batch(pixels[s:s + batch_size])
            target = blend_attribute(_as_batch(attrs[s:s + batch_size]), alpha)
            out[s:s + batch_size] = generator(x, target).numpy()
        arrays[alpha] = out
    generator.train(was_training)
    splits = splits or {}
    index = [(r.image_id, splits.get(r.image_id, "")) for r in records]
    labels = attribute_vector(records, attribute) if records else np.zeros(0, dtype=np.int64)
    return EditedImageSet(arrays=arrays, alphas=list(map(float, alphas)), index=index, attribute=attribute, labels=labels)


def write_edited(edited: EditedImageSet, root, split: str) -> Path:
    out = Path(root) / edited.attribute / split
    out.mkdir(parents=True, exist_ok=True)
    for a in edited.alphas:
        write_array(edited.arrays[a], out / alpha_filename(a))
    meta = {
        "attribute": edited.attribute,
        "alphas": edited.alphas,
        "files": [alpha_filename(a) for a in edited.alphas],
        "index": [{"image_id": i, "source_split": s} for i, s in edited.index],
    }
    if edited.labels is not None:
        meta["labels"] = [int(v) for v in edited.labels]
    tmp = out / "index.json.tmp"
    tmp.write_text(json.dumps(meta, indent=1))
    os.replace(tmp, out / "index.json")
    return out


def read_edited(directory) -> EditedImageSet:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "index.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{directory}: unreadable index.json ({exc})") from exc
    alphas = [float(a) for a in meta["alphas"]]
    arrays = {a: read_array(directory / f) for a, f in zip(alphas, meta["files"])}
    index = [(e["image_id"], e["source_split"]) for e in meta["index"]]
    labels = np.asarray(meta["labels"]) if "labels" in meta else None
    return EditedImageSet(arrays=arrays, alphas=alphas, index=index, attribute=meta["attribute"], labels=labels)
