"""Monte-Carlo size and power of the DeLong test on simulated paired scores.

Usage: python scripts/delong_calibration.py [--reps 200] [--n 500]
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from neutralyze.stats import delong_test


@dataclass
class CalibrationConfig:
    reps: int = 200
    n: int = 500
    level: float = 0.05
    effects: tuple[float, ...] = (0.0, 0.1, 0.2, 0.4)
    seed: int = 0


def rejection_rate(cfg: CalibrationConfig, effect: float) -> float:
    rng = np.random.default_rng(cfg.seed)
    hits = 0
    for _ in range(cfg.reps):
        y = rng.integers(0, 2, cfg.n)
        a = (1.0 + effect) * y + rng.standard_normal(cfg.n)
        b = y + rng.standard_normal(cfg.n)
        hits += delong_test(a, b, y).p_value < cfg.level
    return hits / cfg.reps


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=CalibrationConfig.reps)
    ap.add_argument("--n", type=int, default=CalibrationConfig.n)
    ap.add_argument("--seed", type=int, default=CalibrationConfig.seed)
    args = ap.parse_args()
    cfg = CalibrationConfig(reps=args.reps, n=args.n, seed=args.seed)
    rates = {f"{e:g}": rejection_rate(cfg, e) for e in cfg.effects}
    print(json.dumps({"config": asdict(cfg), "rejection_rate": rates}, indent=2))


if __name__ == "__main__":
    main()
