"""Batched, seeded image augmentation for classifier training."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F


@dataclass
class AugmentConfig:
    hflip: bool = True
    rotation_deg: float = 10.0
    blur_prob: float = 0.5
    blur_sigma: tuple[float, float] = (0.1, 1.0)
    translate: float = 0.05
    scale: tuple[float, float] = (0.95, 1.05)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blur_sigma"] = list(self.blur_sigma)
        d["scale"] = list(self.scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        for key in ("blur_sigma", "scale"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def none(cls) -> "AugmentConfig":
        return cls(hflip=False, rotation_deg=0.0, blur_prob=0.0, translate=0.0, scale=(1.0, 1.0))


def _uniform(lo, hi, n, gen):
    return lo + (hi - lo) * torch.rand(n, generator=gen)


def _gaussian_blur(x, sigma, ksize=5):
    b = x.shape[0]
    r = torch.arange(ksize, dtype=x.dtype) - (ksize - 1) / 2
    k1 = torch.exp(-(r[None] ** 2) / (2 * sigma[:, None] ** 2))
    k1 = k1 / k1.sum(dim=1, keepdim=True)
    k2 = (k1[:, :, None] * k1[:, None, :])[:, None]
    out = F.conv2d(F.pad(x.reshape(1, b, *x.shape[2:]), [ksize // 2] * 4, mode="reflect"), k2, groups=b)
    return out.reshape(x.shape)


def augment_batch(x: torch.Tensor, cfg: AugmentConfig, gen: torch.Generator) -> torch.Tensor:
    """Random flip, rotation + scale + translation (one affine warp), then blur."""
    b = x.shape[0]
    angle = _uniform(-cfg.rotation_deg, cfg.rotation_deg, b, gen) * math.pi / 180
    scale = _uniform(cfg.scale[0], cfg.scale[1], b, gen)
    tx = _uniform(-cfg.translate, cfg.translate, b, gen) * 2
    ty = _uniform(-cfg.translate, cfg.translate, b, gen) * 2
    flip = torch.ones(b)
    if cfg.hflip:
        flip = torch.where(torch.rand(b, generator=gen) < 0.5, -1.0, 1.0)
    cos, sin = torch.cos(angle) / scale, torch.sin(angle) / scale
    theta = torch.stack(
        [torch.stack([cos * flip, -sin, tx], 1), torch.stack([sin * flip, cos, ty], 1)], 1
    ).to(x.dtype)
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    out = F.grid_sample(x, grid, mode="bilinear", padding_mode="border", align_corners=False)
    if cfg.blur_prob > 0:
        sigma = _uniform(cfg.blur_sigma[0], cfg.blur_sigma[1], b, gen).to(x.dtype)
        blurred = _gaussian_blur(out, sigma)
        use = (torch.rand(b, generator=gen) < cfg.blur_prob).view(-1, 1, 1, 1)
        out = torch.where(use, blurred, out)
    return out
