"""Versioned reference tables from the full-scale study, with schema checks.

Each CSV is pinned by sha256 in ``manifest.json``; loading verifies the hash,
the header and the value types before returning typed rows.
"""
from __future__ import annotations

import csv
import hashlib
import json
from importlib import resources
from pathlib import Path

from ..errors import FormatError

FIXTURE_VERSION = "1.0.0"

# column -> type; "str" columns are keys, "float?" may be blank
SCHEMAS: dict[str, dict[str, str]] = {
    "table1": {"attribute": "str", "direction": "str", "encoder": "str", "r": "float", "p": "float"},
    "table2": {
        "attribute": "str", "alpha": "float", "encoder": "str", "source": "str",
        "auc": "float", "acc": "float?", "sen": "float?", "spe": "float?", "f1": "float?",
    },
    "table3": {
        "attribute": "str", "metric": "str", "cnn": "float", "vit": "float",
        "delta": "float", "ci_low": "float", "ci_high": "float",
    },
    "table4": {"method": "str", "attribute": "str", "worst_case_auc": "float", "auc_gap": "float", "auc_sd": "float"},
    "table_macro": {
        "method": "str", "attribute": "str", "roc_auc": "float", "acc": "float",
        "sen": "float", "spe": "float", "f1": "float", "pr_auc": "float",
    },
    "friedman": {"metric": "str", "chi2": "float", "p": "float", "k_methods": "int"},
    "cohort": {"quantity": "str", "value": "float"},
}

# columns bounded to [0, 1]
_UNIT = {"auc", "acc", "sen", "spe", "f1", "worst_case_auc", "auc_gap", "auc_sd", "roc_auc", "pr_auc", "p", "alpha"}


def fixture_dir() -> Path:
    return Path(str(resources.files(__name__)))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_manifest(directory: Path | None = None) -> dict:
    directory = directory or fixture_dir()
    return {
        "version": FIXTURE_VERSION,
        "files": {f"{name}.csv": _sha256(directory / f"{name}.csv") for name in SCHEMAS},
    }


def write_manifest(directory: Path | None = None) -> Path:
    directory = directory or fixture_dir()
    path = directory / "manifest.json"
    path.write_text(json.dumps(build_manifest(directory), indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory: Path | None = None) -> dict:
    directory = directory or fixture_dir()
    try:
        return json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"fixture manifest unreadable: {exc}") from exc


def _convert(value: str, kind: str, where: str):
    if kind == "str":
        if not value:
            raise FormatError(f"{where}: empty key")
        return value
    if kind == "float?" and value == "":
        return None
    try:
        return int(value) if kind == "int" else float(value)
    except ValueError as exc:
        raise FormatError(f"{where}: {value!r} is not a number") from exc


def load_fixture(name: str, directory: Path | None = None, verify: bool = True) -> list[dict]:
    """Typed rows of one reference table; raises FormatError on any mismatch."""
    if name not in SCHEMAS:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(SCHEMAS)}")
    directory = directory or fixture_dir()
    path = directory / f"{name}.csv"
    if verify:
        expected = read_manifest(directory)["files"].get(path.name)
        if expected != _sha256(path):
            raise FormatError(f"{path.name}: checksum does not match manifest")
    schema = SCHEMAS[name]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(schema):
            raise FormatError(f"{path.name}: header {reader.fieldnames} != {list(schema)}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            row = {k: _convert(raw[k] or "", t, f"{path.name}:{lineno}:{k}") for k, t in schema.items()}
            for k in _UNIT & row.keys():
                if row[k] is not None and not 0.0 <= row[k] <= 1.0:
                    raise FormatError(f"{path.name}:{lineno}: {k}={row[k]} outside [0, 1]")
            rows.append(row)
    return rows


def lookup(name: str, **keys) -> dict:
    """The single row whose key columns equal ``keys``."""
    hits = [r for r in load_fixture(name) if all(r.get(k) == v for k, v in keys.items())]
    if len(hits) != 1:
        raise KeyError(f"{name}: {len(hits)} rows match {keys}")
    return hits[0]


def headers(name: str) -> tuple[str, ...]:
    return tuple(SCHEMAS[name])
