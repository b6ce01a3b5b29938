"""Generator (swappable ViT / U-Net encoder + attribute-conditioned decoder)
and the two-headed critic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidAlpha, InvalidSize, ShapeError

ENCODER_KINDS = ("unet", "vit")


@dataclass
class GeneratorSpec:
    encoder_kind: str = "vit"
    image_size: int = 256
    embed_dim: int = 384
    depth: int = 12
    heads: int = 6
    patch_size: int = 16
    mlp_ratio: float = 4.0
    decoder_stages: int = 4
    skip_connections: bool = False
    n_attrs: int = 1
    kernel_size: int = 6
    unet_channels: tuple[int, ...] = (64, 128, 256, 512, 1024)
    decoder_channels: tuple[int, ...] = (256, 128, 64)
    disc_channels: int = 64
    disc_fc: int = 1024

    def __post_init__(self):
        self.unet_channels = tuple(int(c) for c in self.unet_channels)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        self.validate()

    def validate(self) -> None:
        if self.encoder_kind not in ENCODER_KINDS:
            raise ValueError(f"encoder_kind must be one of {ENCODER_KINDS}")
        if self.image_size < 16 or self.image_size % 16:
            raise InvalidSize(f"image_size {self.image_size} must be divisible by 16")
        if self.kernel_size % 2:
            raise ValueError("kernel_size must be even for exact stride-2 resampling")
        if self.encoder_kind == "vit":
            if self.skip_connections:
                raise ValueError("the ViT encoder has no skip connections")
            if self.decoder_stages != 4:
                raise ValueError("the ViT decoder uses exactly 4 up-convolution stages")
            if self.patch_size != 16:
                raise ValueError("ViT patches are 16x16")
            if self.embed_dim % self.heads:
                raise ValueError("embed_dim must be divisible by heads")
            if len(self.decoder_channels) != self.decoder_stages - 1:
                raise ValueError("decoder_channels must list decoder_stages - 1 widths")
        else:
            if len(self.unet_channels) != self.depth:
                raise ValueError("unet_channels must have one entry per down-stage")
            if self.decoder_stages != self.depth:
                raise ValueError("U-Net decoder depth must equal encoder depth")
            if self.image_size % (2 ** self.depth):
                raise InvalidSize(f"image_size {self.image_size} not divisible by 2**{self.depth}")

    @property
    def latent_grid(self) -> int:
        if self.encoder_kind == "vit":
            return self.image_size // self.patch_size
        return self.image_size // 2 ** self.depth

    @property
    def latent_channels(self) -> int:
        return self.embed_dim if self.encoder_kind == "vit" else self.unet_channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unet_channels"] = list(self.unet_channels)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)

    @classmethod
    def vit(cls, image_size=256, **kw) -> "GeneratorSpec":
        return cls(encoder_kind="vit", image_size=image_size, **kw)

    @classmethod
    def unet(cls, image_size=256, depth=5, **kw) -> "GeneratorSpec":
        kw.setdefault("unet_channels", tuple(64 * 2 ** i for i in range(depth)))
        return cls(
            encoder_kind="unet",
            image_size=image_size,
            depth=depth,
            decoder_stages=depth,
            skip_connections=True,
            **kw,
        )


def blend_attribute(a, alpha: float):
    """Edit target ``(1 - alpha) * a + alpha * (1 - a)``.

    alpha = 0 keeps the attribute, 1 negates it, 0.5 gives 0.5 for either bit.
    Works on scalars, numpy arrays and tensors.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0 or math.isnan(alpha):
        raise InvalidAlpha(f"alpha {alpha} outside [0, 1]")
    return (1.0 - alpha) * a + alpha * (1 - a)


# --------------------------------------------------------------------------
# ViT encoder (DeiT-compatible parameter names)


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, n, c))


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim, heads, mlp_ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchEmbed(nn.Module):
    def __init__(self, patch, dim):
        super().__init__()
        self.proj = nn.Conv2d(3, dim, kernel_size=patch, stride=patch)

    def forward(self, x):
        return self.proj(x).flatten(2).transpose(1, 2)


class ViTEncoder(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        g = spec.latent_grid
        # learnable grey -> RGB lift so ImageNet weights fit
        self.to_rgb = nn.Conv2d(1, 3, kernel_size=1)
        self.patch_embed = PatchEmbed(spec.patch_size, spec.embed_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, 1 + g * g, spec.embed_dim))
        self.blocks = nn.ModuleList(Block(spec.embed_dim, spec.heads, spec.mlp_ratio) for _ in range(spec.depth))
        self.norm = nn.LayerNorm(spec.embed_dim, eps=1e-6)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        self.apply(_init_vit)
        with torch.no_grad():
            self.to_rgb.weight.fill_(1.0)
            self.to_rgb.bias.zero_()

    def forward(self, x):
        b = x.shape[0]
        tokens = self.patch_embed(self.to_rgb(x))
        tokens = torch.cat([self.cls_token.expand(b, -1, -1), tokens], dim=1) + self.pos_embed
        for blk in self.blocks:
            tokens = blk(tokens)
        tokens = self.norm(tokens)[:, 1:]
        g = self.spec.latent_grid
        return tokens.transpose(1, 2).reshape(b, self.spec.embed_dim, g, g)


def _init_vit(m):
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


def load_deit_weights(encoder: ViTEncoder, state: dict) -> list[str]:
    """Copy a DeiT-S / timm ViT state dict into ``encoder``.

    Position embeddings are resampled bicubically when the token grid differs
    and classifier heads are ignored. Returns the keys that were not used.
    """
    own = encoder.state_dict()
    unused = []
    for key, value in state.items():
        if key not in own:
            unused.append(key)
            continue
        if key == "pos_embed" and value.shape != own[key].shape:
            cls_tok, grid = value[:, :1], value[:, 1:]
            old = int(round(math.sqrt(grid.shape[1])))
            new = encoder.spec.latent_grid
            grid = grid.reshape(1, old, old, -1).permute(0, 3, 1, 2)
            grid = F.interpolate(grid, size=(new, new), mode="bicubic", align_corners=False)
            value = torch.cat([cls_tok, grid.permute(0, 2, 3, 1).reshape(1, new * new, -1)], dim=1)
        if value.shape != own[key].shape:
            raise ShapeError(f"{key}: checkpoint {tuple(value.shape)} vs model {tuple(own[key].shape)}")
        own[key] = value
    encoder.load_state_dict(own)
    return unused


# --------------------------------------------------------------------------
# U-Net encoder


def _down(cin, cout, k):
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride=2, padding=(k - 2) // 2),
        nn.BatchNorm2d(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


def _up(cin, cout, k, last=False):
    layers = [nn.ConvTranspose2d(cin, cout, k, stride=2, padding=(k - 2) // 2)]
    if last:
        layers.append(nn.Tanh())
    else:
        layers += [nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]
    return nn.Sequential(*layers)


class UNetEncoder(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        chans = (1,) + spec.unet_channels
        self.stages = nn.ModuleList(_down(chans[i], chans[i + 1], spec.kernel_size) for i in range(spec.depth))

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


@dataclass
class Latent:
    grid: torch.Tensor
    skips: list = field(default_factory=list)


class Decoder(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        k, a, n = spec.kernel_size, spec.n_attrs, spec.decoder_stages
        if spec.encoder_kind == "vit":
            outs = spec.decoder_channels + (1,)
            ins = (spec.embed_dim + a,) + spec.decoder_channels
        else:
            enc, d = spec.unet_channels, spec.depth
            outs = tuple(enc[d - 2 - i] for i in range(d - 1)) + (1,)
            widen = 2 if spec.skip_connections else 1
            ins = (enc[-1] + a,) + tuple(widen * c for c in outs[:-1])
        self.stages = nn.ModuleList(_up(ins[i], outs[i], k, last=(i == n - 1)) for i in range(n))

    def forward(self, latent: Latent, target: torch.Tensor):
        h = latent.grid
        b, _, g, _ = h.shape
        target = target.reshape(b, -1).to(h.dtype)
        h = torch.cat([h, target[:, :, None, None].expand(b, target.shape[1], g, g)], dim=1)
        skips = latent.skips
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if self.spec.skip_connections and i < len(self.stages) - 1:
                h = torch.cat([h, skips[-2 - i]], dim=1)
        return h


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.encoder = ViTEncoder(spec) if spec.encoder_kind == "vit" else UNetEncoder(spec)
        self.decoder = Decoder(spec)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected (B, 1, H, W), got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % 16 or w % 16:
            raise InvalidSize(f"image {h}x{w} is not divisible by 16")
        if h != self.spec.image_size or w != self.spec.image_size:
            raise ShapeError(f"image {h}x{w} does not match spec size {self.spec.image_size}")

    def encode(self, x: torch.Tensor) -> Latent:
        self.check_input(x)
        if self.spec.encoder_kind == "vit":
            return Latent(self.encoder(x))
        feats = self.encoder(x)
        return Latent(feats[-1], feats)

    def decode(self, latent: Latent | torch.Tensor, target) -> torch.Tensor:
        if isinstance(latent, torch.Tensor):
            if self.spec.skip_connections:
                raise ShapeError("U-Net decoding needs the skip tensors from encode()")
            latent = Latent(latent)
        g, c = self.spec.latent_grid, self.spec.latent_channels
        if latent.grid.ndim != 4 or tuple(latent.grid.shape[1:]) != (c, g, g):
            raise ShapeError(f"latent {tuple(latent.grid.shape)} does not match ({c}, {g}, {g})")
        target = torch.as_tensor(target, dtype=latent.grid.dtype, device=latent.grid.device)
        if target.ndim == 0:
            target = target.expand(latent.grid.shape[0])
        target = target.reshape(latent.grid.shape[0], -1)
        if target.shape[1] != self.spec.n_attrs:
            raise ShapeError(f"attribute target has {target.shape[1]} entries, spec expects {self.spec.n_attrs}")
        if torch.any(target < 0) or torch.any(target > 1):
            raise ValueError("attribute targets must lie in [0, 1]")
        return self.decoder(latent, target)

    def forward(self, x, target):
        return self.decode(self.encode(x), target)


class Discriminator(nn.Module):
    """Critic with an adversarial head and an attribute-classification head (logits)."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        n_stages = min(5, int(math.log2(spec.image_size)) - 2)
        layers, cin = [], 1
        for i in range(n_stages):
            cout = min(spec.disc_channels * 2 ** i, 1024)
            layers += [nn.Conv2d(cin, cout, 4, stride=2, padding=1), nn.GroupNorm(1, cout), nn.LeakyReLU(0.2)]
            cin = cout
        self.features = nn.Sequential(*layers)
        side = spec.image_size // 2 ** n_stages
        flat = cin * side * side
        self.adv = nn.Sequential(nn.Linear(flat, spec.disc_fc), nn.LeakyReLU(0.2), nn.Linear(spec.disc_fc, 1))
        self.cls = nn.Sequential(
            nn.Linear(flat, spec.disc_fc), nn.LeakyReLU(0.2), nn.Linear(spec.disc_fc, spec.n_attrs)
        )

    def forward(self, x):
        h = self.features(x).flatten(1)
        return self.adv(h).squeeze(1), self.cls(h)

    def critic(self, x):
        return self.forward(x)[0]


def encode(generator: Generator, image) -> Latent:
    return generator.encode(torch.as_tensor(image))


def decode(generator: Generator, latent, attribute_target) -> torch.Tensor:
    return generator.decode(latent, attribute_target)
