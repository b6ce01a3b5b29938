"""Imbalance statistics for a cohort: the full-scale counts and a synthetic cohort.

Usage: python scripts/cohort_stats.py [--n 1000] [--seed 0]
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass

from neutralyze.dataio import chi_squared_gof, cohort_stats, make_synthetic_dataset, wilson_interval


@dataclass
class CohortConfig:
    n_images: int = 112120
    old_fraction: float = 0.2358
    smallest_cell: int = 10551  # women aged 60 or older
    synthetic_n: int = 1000
    seed: int = 0


def full_scale(cfg: CohortConfig) -> dict:
    old = round(cfg.old_fraction * cfg.n_images)
    half = cfg.n_images / 2
    chi2, p = chi_squared_gof([old, cfg.n_images - old], [half, half])
    lo, hi = wilson_interval(cfg.smallest_cell, cfg.n_images)
    return {
        "age_chi2": chi2,
        "age_p": p,
        "smallest_cell_share": cfg.smallest_cell / cfg.n_images,
        "wilson_95": [lo, hi],
    }


def synthetic(cfg: CohortConfig) -> dict:
    stats = cohort_stats(make_synthetic_dataset(cfg.synthetic_n, 16, cfg.seed))
    return asdict(stats)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=CohortConfig.synthetic_n)
    ap.add_argument("--seed", type=int, default=CohortConfig.seed)
    args = ap.parse_args()
    cfg = CohortConfig(synthetic_n=args.n, seed=args.seed)
    print(json.dumps({"config": asdict(cfg), "full_scale": full_scale(cfg), "synthetic": synthetic(cfg)},
                     indent=2, default=str))


if __name__ == "__main__":
    main()
