"""``neutralyze`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
3 missing upstream artifact (the message names the producing subcommand).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path

from filelock import FileLock, Timeout

from . import pipeline
from .config import PRESETS, RunConfig, apply_overrides, load_config, load_preset
from .errors import ConfigError, MissingArtifact, NeutralyzeError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3
DEVICE_ENV = "NEUTRALYZE_DEVICE"

log = logging.getLogger("neutralyze")


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=10, check=True,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", help="TOML run configuration")
    src.add_argument("--preset", choices=PRESETS, help="named preset (default: vit-paper)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set judge.epochs=5 (repeatable)")
    common.add_argument("--run-dir", help="run directory (default: paths.output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="neutralyze", description="Attribute-neutralization pipeline for chest X-rays.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="ingest a manifest + images, split by patient")
    s = sub.add_parser("synth", parents=[common], help="generate the synthetic cohort")
    s.add_argument("--n", type=int, help="number of images")
    s.add_argument("--seed", type=int, help="generator seed")
    sub.add_parser("train-neutralizer", parents=[common], help="train the attribute neutralizer")
    g = sub.add_parser("generate", parents=[common], help="alpha-sweep every split")
    g.add_argument("--checkpoint")
    g.add_argument("--manifest")
    g.add_argument("--attribute", choices=("sex", "age"))
    g.add_argument("--out", help="root directory for edited stacks")
    sub.add_parser("train-judge", parents=[common], help="train the attribute judge on originals")
    sub.add_parser("audit", parents=[common], help="judge leakage per alpha on the edited test split")
    for name in ("train-ddm", "eval-ddm"):
        d = sub.add_parser(name, parents=[common], help=f"{name.split('-')[0]} diagnosis models")
        d.add_argument("--strategy", action="append", default=[], help="restrict to one strategy (repeatable)")
    sub.add_parser("stats", parents=[common], help="DeLong, bootstrap, Friedman/Nemenyi, SSIM-alpha")
    sub.add_parser("gradcam", parents=[common], help="judge heat maps across alpha")
    r = sub.add_parser("report", parents=[common], help="consolidate JSON + plot-data CSVs")
    r.add_argument("--plots", action="store_true", help="also render PNG plots")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else load_preset(args.preset or "vit-paper")
    cfg = apply_overrides(cfg, args.overrides)
    if getattr(args, "attribute", None):
        cfg = apply_overrides(cfg, [f'attribute="{args.attribute}"'])
    return cfg


def _check_device() -> None:
    device = os.environ.get(DEVICE_ENV, "cpu").strip().lower()
    if device != "cpu":
        raise ConfigError(f"{DEVICE_ENV}={device!r}: only 'cpu' is supported by this build")


STAGES = {
    "preprocess": lambda cfg, lay, a: pipeline.preprocess(cfg, lay),
    "synth": lambda cfg, lay, a: pipeline.synth(cfg, lay, a.n, a.seed),
    "train-neutralizer": lambda cfg, lay, a: pipeline.train_neutralizer_stage(cfg, lay),
    "generate": lambda cfg, lay, a: pipeline.generate(cfg, lay, a.checkpoint, a.manifest, a.attribute, a.out),
    "train-judge": lambda cfg, lay, a: pipeline.train_judge_stage(cfg, lay),
    "audit": lambda cfg, lay, a: pipeline.audit(cfg, lay),
    "train-ddm": lambda cfg, lay, a: pipeline.train_ddm_stage(cfg, lay, a.strategy),
    "eval-ddm": lambda cfg, lay, a: pipeline.eval_ddm_stage(cfg, lay, a.strategy),
    "stats": lambda cfg, lay, a: pipeline.stats_stage(cfg, lay),
    "gradcam": lambda cfg, lay, a: pipeline.gradcam_stage(cfg, lay),
    "report": lambda cfg, lay, a: pipeline.report(cfg, lay, a.plots),
}


def write_run_manifest(layout, command, cfg, seed, wall, outputs, argv) -> Path:
    path = layout.manifests / f"{command}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "subcommand": command,
        "config_hash": cfg.hash(),
        "seed": seed,
        "git_describe": git_describe(),
        "wall_time_s": round(wall, 3),
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "argv": list(argv),
        "outputs": outputs,
        "config": cfg.to_dict(),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _check_device()
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    layout = pipeline.RunLayout(args.run_dir or cfg.paths.output_dir)
    layout.root.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(layout.root / ".neutralyze.lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        print(f"error: another neutralyze process is writing to {layout.root}", file=sys.stderr)
        return EXIT_FAIL
    start = time.perf_counter()
    try:
        outputs = STAGES[args.command](cfg, layout, args)
        seed = getattr(args, "seed", None)
        write_run_manifest(layout, args.command, cfg, cfg.seed if seed is None else seed,
                           time.perf_counter() - start, outputs, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NeutralyzeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        lock.release()
    if args.command == "synth":
        import hashlib

        digest = hashlib.sha256(layout.data_manifest.read_bytes()).hexdigest()
        print(f"manifest sha256 {digest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
