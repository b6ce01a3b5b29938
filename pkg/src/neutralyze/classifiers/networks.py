"""Image-classifier backbones sharing one feature-extractor contract.

Every backbone exposes ``penultimate(x)`` (the feature map that manifold
mixup interpolates), ``head(h)`` (the rest of the network down to logits),
and ``cam_layer`` (the default Grad-CAM target, a module emitting a spatial map).
The final linear layer starts at zero, so an untrained model outputs 0.5 for
every image instead of an arbitrary random projection of the input.
"""
from __future__ import annotations

import torch
from torch import nn

BACKBONES = ("small", "convnext_tiny")


def _zero_linear(cin, cout) -> nn.Linear:
    fc = nn.Linear(cin, cout)
    nn.init.zeros_(fc.weight)
    nn.init.zeros_(fc.bias)
    return fc


def _block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class SmallConvNet(nn.Module):
    """Four conv blocks with 2x2 pooling between them, global average pool, linear head."""

    def __init__(self, n_outputs: int, widths=(16, 32, 64, 128), in_channels: int = 1):
        super().__init__()
        chans = (in_channels,) + tuple(widths)
        self.blocks = nn.ModuleList(_block(chans[i], chans[i + 1]) for i in range(len(widths)))
        self.pool = nn.MaxPool2d(2)
        self.fc = _zero_linear(widths[-1], n_outputs)

    @property
    def cam_layer(self) -> nn.Module:
        return self.blocks[-1]

    def penultimate(self, x):
        for blk in self.blocks[:-1]:
            x = self.pool(blk(x))
        return x

    def head(self, h):
        h = self.blocks[-1](h)
        return self.fc(h.mean(dim=(2, 3)))

    def forward(self, x):
        return self.head(self.penultimate(x))


class ConvNeXtBackbone(nn.Module):
    """torchvision ConvNeXt-Tiny with grey input repeated to three channels."""

    def __init__(self, n_outputs: int, weights_path: str | None = None):
        super().__init__()
        from torchvision.models import convnext_tiny

        net = convnext_tiny(weights=None)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            state = {k: v for k, v in state.items() if not k.startswith("classifier.2")}
            net.load_state_dict(state, strict=False)
        self.features = net.features
        self.norm = net.classifier[0]
        self.fc = _zero_linear(net.classifier[2].in_features, n_outputs)

    @property
    def cam_layer(self) -> nn.Module:
        return self.features[-1]

    def penultimate(self, x):
        x = x.expand(-1, 3, -1, -1)
        return self.features[:6](x)

    def head(self, h):
        h = self.features[6:](h)
        h = self.norm(h.mean(dim=(2, 3), keepdim=True)).flatten(1)
        return self.fc(h)

    def forward(self, x):
        return self.head(self.penultimate(x))


def build_backbone(name: str, n_outputs: int, weights_path: str | None = None) -> nn.Module:
    if name == "small":
        return SmallConvNet(n_outputs)
    if name == "convnext_tiny":
        return ConvNeXtBackbone(n_outputs, weights_path)
    raise ValueError(f"unknown backbone {name!r}; choose from {BACKBONES}")
