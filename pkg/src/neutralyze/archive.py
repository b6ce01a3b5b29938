"""Checkpoint archive: a zip holding ``spec.json`` and ``weights.pt``."""
from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile

import torch

from .errors import FormatError


def save_archive(path, spec: dict, weights: dict) -> None:
    buf = io.BytesIO()
    torch.save(weights, buf)
    tmp = f"{os.fspath(path)}.tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        # fixed timestamps keep archives byte-identical across runs
        info = zipfile.ZipInfo("spec.json", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(spec, indent=2, sort_keys=True))
        info = zipfile.ZipInfo("weights.pt", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)


def load_archive(path) -> tuple[dict, dict]:
    try:
        with zipfile.ZipFile(path) as zf:
            spec = json.loads(zf.read("spec.json"))
            weights = torch.load(io.BytesIO(zf.read("weights.pt")), map_location="cpu", weights_only=True)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a valid checkpoint archive ({exc})") from exc
    return spec, weights


def state_hash(state) -> str:
    buf = io.BytesIO()
    torch.save(state, buf)
    return hashlib.sha256(buf.getvalue()).hexdigest()
