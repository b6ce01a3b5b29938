"""Generator / critic objectives and the WGAN-GP gradient penalty."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from ..errors import NumericalError, ShapeError


@dataclass
class LossWeights:
    lambda_rec: float = 100.0
    lambda_cls_G: float = 10.0
    lambda_adv: float = 10.0
    lambda_gp: float = 10.0
    lambda_cls_D: float = 10.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def cnn_paper(cls) -> "LossWeights":
        return cls(lambda_rec=100.0, lambda_cls_G=10.0, lambda_adv=1.0, lambda_gp=10.0, lambda_cls_D=10.0)

    @classmethod
    def vit_paper(cls) -> "LossWeights":
        return cls(lambda_rec=100.0, lambda_cls_G=10.0, lambda_adv=10.0, lambda_gp=10.0, lambda_cls_D=10.0)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_finite(*tensors):
    for t in tensors:
        if torch.is_tensor(t) and not torch.all(torch.isfinite(t)):
            raise NumericalError("non-finite value in loss input")


def generator_total(rec, cls, adv, w: LossWeights):
    return w.lambda_rec * rec + w.lambda_cls_G * cls + w.lambda_adv * adv


def discriminator_total(cls, adv, gp, w: LossWeights):
    return w.lambda_cls_D * cls + adv + w.lambda_gp * gp


def generator_loss(x, x_rec, d_adv_out, d_cls_out, target, w: LossWeights):
    """Weighted generator objective.

    ``d_adv_out`` is the critic score of the edited images and ``d_cls_out`` the
    attribute logits for them; ``target`` holds the requested attribute values.
    L1 reconstruction, BCE attribute loss, and ``-mean(critic)`` adversarial loss.
    """
    _check_finite(x, x_rec, d_adv_out, d_cls_out, target)
    if x.shape != x_rec.shape:
        raise ShapeError(f"x {tuple(x.shape)} vs x_rec {tuple(x_rec.shape)}")
    target = torch.as_tensor(target, dtype=d_cls_out.dtype).reshape(d_cls_out.shape)
    rec = (x - x_rec).abs().mean()
    cls = F.binary_cross_entropy_with_logits(d_cls_out, target)
    adv = -d_adv_out.mean()
    total = generator_total(rec, cls, adv, w)
    return total, {"rec": rec, "cls": cls, "adv": adv}


def discriminator_loss(d_real, d_fake, d_cls_real, true_attr, gp, w: LossWeights):
    """Weighted critic objective: ``lambda_cls_D * cls + (mean fake - mean real) + lambda_gp * gp``.

    The attribute loss uses real images only.
    """
    _check_finite(d_real, d_fake, d_cls_real, true_attr, gp)
    if torch.is_tensor(gp) and torch.any(gp < 0):
        raise ValueError("gradient penalty must be nonnegative")
    true_attr = torch.as_tensor(true_attr, dtype=d_cls_real.dtype).reshape(d_cls_real.shape)
    adv = d_fake.mean() - d_real.mean()
    cls = F.binary_cross_entropy_with_logits(d_cls_real, true_attr)
    total = discriminator_total(cls, adv, gp, w)
    return total, {"adv": adv, "cls": cls, "gp": gp}


def gradient_penalty(critic, x_real, x_fake, seed: int | None = None, generator: torch.Generator | None = None):
    """Mean of ``(||grad critic(x_hat)||_2 - 1)^2`` on random interpolates.

    ``x_hat = u * x_real + (1 - u) * x_fake`` with one ``u ~ U(0, 1)`` per sample.
    The graph is kept so the penalty can be back-propagated into the critic.
    """
    if x_real.shape != x_fake.shape:
        raise ShapeError("real and fake batches must match")
    if generator is None:
        generator = torch.Generator(device=x_real.device)
        generator.manual_seed(0 if seed is None else int(seed))
    b = x_real.shape[0]
    u = torch.rand((b,) + (1,) * (x_real.ndim - 1), generator=generator, dtype=x_real.dtype, device=x_real.device)
    x_hat = (u * x_real.detach() + (1 - u) * x_fake.detach()).requires_grad_(True)
    out = critic(x_hat)
    if out.requires_grad:
        (grad,) = torch.autograd.grad(out.sum(), x_hat, create_graph=True, allow_unused=True)
    else:
        grad = None
    if grad is None:
        grad = torch.zeros_like(x_hat)
    norms = grad.reshape(b, -1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()
