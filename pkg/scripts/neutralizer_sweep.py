"""Train the neutralizer under a few settings and audit leakage per alpha.

Each setting is a JSON object with optional ``spec``, ``loss`` and ``train``
blocks overriding the desk preset. The judge is trained once on originals.

Usage:
    python scripts/neutralizer_sweep.py --out sweep.json \
        --setting '{"loss": {"lambda_cls_G": 30}}' --setting '{"train": {"batch_size": 8}}'
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from neutralyze.classifiers import evaluate_leakage, train_judge
from neutralyze.config import load_preset
from neutralyze.dataio import make_synthetic_dataset, split_by_patient
from neutralyze.editing import alpha_sweep
from neutralyze.neutralizer import GeneratorSpec, LossWeights, epoch_means, train_neutralizer


@dataclass
class SweepConfig:
    n_images: int = 1000
    image_size: int = 64
    seed: int = 0
    alphas: tuple[float, ...] = (0.0, 0.3, 0.5, 0.7, 1.0)
    settings: list[dict] = field(default_factory=lambda: [{}])


def run_setting(setting: dict, split, judge, cfg: SweepConfig) -> dict:
    base = load_preset("desk")
    spec = GeneratorSpec.from_dict({**base.generator_spec().to_dict(), **setting.get("spec", {})})
    weights = LossWeights(**{**base.neutralizer.loss.to_dict(), **setting.get("loss", {})})
    hyper = replace(base.neutralizer_hyper(), seed=cfg.seed, **setting.get("train", {}))
    start = time.perf_counter()
    ck = train_neutralizer(split.train, spec, weights, hyper)
    edited = alpha_sweep(ck.generator, split.test, alphas=cfg.alphas)
    rows = evaluate_leakage(judge, edited)
    original = edited.stack(0.0)
    for r in rows:
        r["mean_abs_change"] = float(np.abs(edited.stack(r["alpha"]) - original).mean())
    return {
        "setting": setting,
        "train_seconds": round(time.perf_counter() - start, 1),
        "rec_by_epoch": epoch_means(ck.loss_log),
        "leakage": rows,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--setting", action="append", default=[], help="JSON override block (repeatable)")
    ap.add_argument("--n", type=int, default=SweepConfig.n_images)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="neutralizer_sweep.json")
    args = ap.parse_args()
    cfg = SweepConfig(n_images=args.n, seed=args.seed, settings=[json.loads(s) for s in args.setting] or [{}])

    split = split_by_patient(make_synthetic_dataset(cfg.n_images, cfg.image_size, cfg.seed), seed=cfg.seed)
    judge = train_judge(split.train, load_preset("desk").judge_hyper())
    results = []
    for setting in cfg.settings:
        res = run_setting(setting, split, judge, cfg)
        aucs = " ".join(f"{r['alpha']:.1f}:{r['auc']:.3f}" for r in res["leakage"])
        print(f"{json.dumps(setting)}  judge AUC by alpha  {aucs}", flush=True)
        results.append(res)
    with open(args.out, "w") as fh:
        json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
