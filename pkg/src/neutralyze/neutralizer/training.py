"""Adversarial training loop for the attribute neutralizer."""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch

from ..archive import load_archive, save_archive, state_hash
from ..dataio import ImageRecord, attribute_vector, stack_pixels
from ..errors import EmptyDataset, ShapeError, TrainingDiverged
from .losses import LossWeights, discriminator_loss, generator_loss, gradient_penalty
from .networks import Discriminator, Generator, GeneratorSpec

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "step", "L_rec", "L_cls_G", "L_adv_G", "L_adv_D", "L_cls_D", "gp")


@dataclass
class NeutralizerHyper:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 150
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    warmup_epochs: float = 1.0
    seed: int = 0
    attribute: str = "sex"
    # critic-input noise; see README for the mean/std reading
    noise_mean: float = 0.0
    noise_std: float = 0.1
    label_flip: float = 0.05
    label_smoothing: float = 0.1
    hflip: bool = True
    n_critic: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NeutralizerHyper":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class NeutralizerCheckpoint:
    generator: Generator
    discriminator: Discriminator
    spec: GeneratorSpec
    weights: LossWeights
    hyper: NeutralizerHyper
    epoch: int = 0
    optimizer_hash: str = ""
    loss_log: list[dict] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.hyper.seed

    def metadata(self) -> dict:
        return {"epoch": self.epoch, "seed": self.hyper.seed, "optimizer_state_hash": self.optimizer_hash}

    def save(self, path) -> None:
        spec = {
            "kind": "neutralizer",
            "generator_spec": self.spec.to_dict(),
            "encoder_kind": self.spec.encoder_kind,
            "image_size": self.spec.image_size,
            "embed_dim": self.spec.embed_dim,
            "depth": self.spec.depth,
            "decoder_stages": self.spec.decoder_stages,
            "loss_weights": self.weights.to_dict(),
            "hyper": self.hyper.to_dict(),
            **self.metadata(),
        }
        save_archive(
            path,
            spec,
            {"generator": self.generator.state_dict(), "discriminator": self.discriminator.state_dict()},
        )

    @classmethod
    def load(cls, path) -> "NeutralizerCheckpoint":
        meta, states = load_archive(path)
        if meta.get("kind") != "neutralizer":
            raise ShapeError(f"{path} is not a neutralizer checkpoint")
        spec = GeneratorSpec.from_dict(meta["generator_spec"])
        gen, disc = Generator(spec), Discriminator(spec)
        try:
            gen.load_state_dict(states["generator"])
            disc.load_state_dict(states["discriminator"])
        except RuntimeError as exc:
            raise ShapeError(f"checkpoint does not fit its stored spec: {exc}") from exc
        gen.eval()
        disc.eval()
        return cls(
            generator=gen,
            discriminator=disc,
            spec=spec,
            weights=LossWeights(**meta["loss_weights"]),
            hyper=NeutralizerHyper.from_dict(meta["hyper"]),
            epoch=int(meta["epoch"]),
            optimizer_hash=meta.get("optimizer_state_hash", ""),
        )


def write_loss_log(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in LOG_COLUMNS})


def epoch_means(rows: Sequence[dict], column: str = "L_rec") -> list[float]:
    by_epoch: dict[int, list[float]] = {}
    for row in rows:
        by_epoch.setdefault(row["epoch"], []).append(row[column])
    return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def warmup_cosine(step: int, warmup_steps: int, total_steps: int) -> float:
    """LR multiplier: linear warm-up then cosine decay to zero."""
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def smooth_labels(t: torch.Tensor, amount: float) -> torch.Tensor:
    """Pull targets ``amount`` of the way toward 0.5 on each side (1 -> 1 - amount)."""
    return t * (1 - 2 * amount) + amount


def _hflip(x, gen):
    mask = torch.rand(x.shape[0], generator=gen) < 0.5
    out = x.clone()
    out[mask] = out[mask].flip(-1)
    return out


def _flip_real_fake(real, fake, rate, gen):
    swap = (torch.rand(real.shape[0], generator=gen) < rate).view(-1, *([1] * (real.ndim - 1)))
    return torch.where(swap, fake, real), torch.where(swap, real, fake)


def _noisy(x, hyper, gen):
    if hyper.noise_std == 0 and hyper.noise_mean == 0:
        return x
    return x + hyper.noise_mean + hyper.noise_std * torch.randn(x.shape, generator=gen)


def train_neutralizer(
    dataset: Sequence[ImageRecord],
    spec: GeneratorSpec,
    weights: LossWeights | None = None,
    hyper: NeutralizerHyper | None = None,
    progress=None,
) -> NeutralizerCheckpoint:
    """Train generator and critic; returns the final-epoch checkpoint.

    Per step the critic sees noisy inputs with a fraction of real/fake roles
    swapped, and the generator is trained to reconstruct with the true
    attribute and to fool the critic while matching a shuffled target.
    """
    weights = weights or (LossWeights.vit_paper() if spec.encoder_kind == "vit" else LossWeights.cnn_paper())
    hyper = hyper or NeutralizerHyper()
    if len(dataset) == 0:
        raise EmptyDataset("no training images")
    images = torch.from_numpy(stack_pixels(dataset))
    if images.shape[-1] != spec.image_size or images.shape[-2] != spec.image_size:
        raise ShapeError(f"images are {tuple(images.shape[-2:])}, spec expects {spec.image_size}")
    attrs = torch.from_numpy(attribute_vector(dataset, hyper.attribute)).float().view(-1, 1)

    torch.manual_seed(hyper.seed)
    gen_net, disc_net = Generator(spec), Discriminator(spec)
    data_rng = torch.Generator().manual_seed(hyper.seed + 1)
    gp_rng = torch.Generator().manual_seed(hyper.seed + 2)

    opt_g = torch.optim.AdamW(gen_net.parameters(), lr=hyper.lr, betas=hyper.betas, weight_decay=hyper.weight_decay)
    opt_d = torch.optim.AdamW(disc_net.parameters(), lr=hyper.lr, betas=hyper.betas, weight_decay=hyper.weight_decay)
    n = images.shape[0]
    steps_per_epoch = math.ceil(n / hyper.batch_size)
    total = steps_per_epoch * hyper.epochs
    warm = int(round(hyper.warmup_epochs * steps_per_epoch))
    sched_g = torch.optim.lr_scheduler.LambdaLR(opt_g, lambda s: warmup_cosine(s, warm, total))
    sched_d = torch.optim.lr_scheduler.LambdaLR(opt_d, lambda s: warmup_cosine(s, warm, total))

    def snapshot(epoch):
        return NeutralizerCheckpoint(
            generator=copy.deepcopy(gen_net).eval(),
            discriminator=copy.deepcopy(disc_net).eval(),
            spec=spec,
            weights=weights,
            hyper=hyper,
            epoch=epoch,
            optimizer_hash=state_hash({"g": opt_g.state_dict(), "d": opt_d.state_dict()}),
            loss_log=list(rows),
        )

    rows: list[dict] = []
    last_good = snapshot(0)
    step = 0
    for epoch in range(1, hyper.epochs + 1):
        gen_net.train()
        disc_net.train()
        order = torch.randperm(n, generator=data_rng)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            x = images[idx]
            a = attrs[idx]
            if hyper.hflip:
                x = _hflip(x, data_rng)
            b = a[torch.randperm(a.shape[0], generator=data_rng)]

            # critic step
            with torch.no_grad():
                x_fake = gen_net(x, b)
            real_in, fake_in = _flip_real_fake(x, x_fake, hyper.label_flip, data_rng)
            d_real, d_cls_real = disc_net(_noisy(real_in, hyper, data_rng))
            d_fake, _ = disc_net(_noisy(fake_in, hyper, data_rng))
            gp = gradient_penalty(disc_net.critic, real_in, fake_in, generator=gp_rng)
            # attribute head trains on genuine images only
            _, d_cls_x = disc_net(_noisy(x, hyper, data_rng))
            d_total, d_parts = discriminator_loss(
                d_real, d_fake, d_cls_x, smooth_labels(a, hyper.label_smoothing), gp, weights
            )
            opt_d.zero_grad(set_to_none=True)
            d_total.backward()
            opt_d.step()
            sched_d.step()

            row = {
                "epoch": epoch,
                "step": step,
                "L_adv_D": float(d_parts["adv"].detach()),
                "L_cls_D": float(d_parts["cls"].detach()),
                "gp": float(gp.detach()),
            }

            if (step + 1) % hyper.n_critic == 0:
                latent = gen_net.encode(x)
                x_fake = gen_net.decode(latent, b)
                x_rec = gen_net.decode(latent, a)
                g_adv, g_cls = disc_net(_noisy(x_fake, hyper, data_rng))
                g_total, g_parts = generator_loss(
                    x, x_rec, g_adv, g_cls, smooth_labels(b, hyper.label_smoothing), weights
                )
                opt_g.zero_grad(set_to_none=True)
                g_total.backward()
                opt_g.step()
                row.update(
                    L_rec=float(g_parts["rec"].detach()),
                    L_cls_G=float(g_parts["cls"].detach()),
                    L_adv_G=float(g_parts["adv"].detach()),
                )
            else:
                row.update(L_rec=float("nan"), L_cls_G=float("nan"), L_adv_G=float("nan"))
            sched_g.step()

            values = [row[k] for k in ("L_adv_D", "L_cls_D", "gp")]
            if (step + 1) % hyper.n_critic == 0:
                values += [row["L_rec"], row["L_cls_G"], row["L_adv_G"]]
            if not all(math.isfinite(v) for v in values):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}", checkpoint=last_good)
            rows.append(row)
            step += 1
        last_good = snapshot(epoch)
        if progress:
            progress(epoch, rows)
        log.info("epoch %d  L_rec %.4f", epoch, epoch_means(rows)[-1])
    return last_good
