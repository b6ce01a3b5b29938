"""Gradient-weighted class activation maps for the judge and diagnosis models."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from .errors import InvalidLayer, ShapeError


@dataclass
class HeatMap:
    grid: np.ndarray
    target_class: int
    model_probability: float
    raw: np.ndarray

    @property
    def peak(self) -> tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.grid), self.grid.shape))


def resolve_layer(model: nn.Module, layer) -> nn.Module:
    if layer is None:
        layer = getattr(model, "cam_layer", None)
        if layer is None:
            raise InvalidLayer("model has no default cam_layer; pass one explicitly")
        return layer
    if isinstance(layer, nn.Module):
        return layer
    try:
        return model.get_submodule(layer)
    except AttributeError as exc:
        raise InvalidLayer(f"no layer named {layer!r}") from exc


def normalize_map(m: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant map becomes all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if not hi - lo > 1e-12 * max(1.0, abs(hi)):
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def _as_input(image) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(image, dtype=np.float32))
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"expected one image, got shape {tuple(x.shape)}")
    return x


def gradcam(model: nn.Module, image, target_class: int = 0, layer=None) -> HeatMap:
    """Grad-CAM for one image and one output logit.

    Channel weights are the spatial mean of the logit gradient; the map is
    ReLU of the weighted channel sum, bilinearly upsampled to the input size
    and min-max normalized per map.
    """
    module = resolve_layer(model, layer)
    # gradient on the input keeps the target activation on the graph even when
    # no parameters precede it
    x = _as_input(image).requires_grad_(True)
    captured = {}

    def hook(_, __, out):
        if not isinstance(out, torch.Tensor) or out.ndim != 4:
            shape = tuple(out.shape) if isinstance(out, torch.Tensor) else type(out).__name__
            raise InvalidLayer(f"layer output {shape} is not a spatial (B, C, H, W) map")
        out.retain_grad()
        captured["act"] = out

    handle = module.register_forward_hook(hook)
    was = model.training
    model.eval()
    try:
        with torch.enable_grad():
            logits = model(x)
            if "act" not in captured:
                raise InvalidLayer("target layer did not run in the forward pass")
            logit = logits.reshape(-1)[target_class]
            model.zero_grad(set_to_none=True)
            logit.backward()
    finally:
        handle.remove()
        model.train(was)
    act, grad = captured["act"].detach(), captured["act"].grad
    weights = grad.mean(dim=(2, 3), keepdim=True)
    raw = F.relu((weights * act).sum(dim=1, keepdim=True))
    up = F.interpolate(raw, size=tuple(x.shape[-2:]), mode="bilinear", align_corners=False)
    prob = float(torch.sigmoid(logit.detach()))
    return HeatMap(
        grid=normalize_map(up[0, 0].double().numpy()),
        target_class=int(target_class),
        model_probability=prob,
        raw=raw[0, 0].double().numpy(),
    )


def overlay(image, heat: HeatMap, strength: float = 0.45, cmap: str = "jet") -> np.ndarray:
    """RGB uint8 overlay of the heat map on a [-1, 1] grey image."""
    from matplotlib import colormaps

    grey = np.clip((np.asarray(image, dtype=np.float64).squeeze() + 1) / 2, 0, 1)
    colour = colormaps[cmap](heat.grid)[..., :3]
    blend = (1 - strength) * grey[..., None] + strength * colour
    return np.round(blend * 255).astype(np.uint8)


def save_overlay(image, heat: HeatMap, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(overlay(image, heat)).save(path)
    return path
