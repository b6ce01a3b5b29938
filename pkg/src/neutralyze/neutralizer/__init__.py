"""Attribute neutralizer: encoder/decoder generator, critic, losses, training."""
from .losses import (
    LossWeights,
    discriminator_loss,
    discriminator_total,
    generator_loss,
    generator_total,
    gradient_penalty,
)
from .networks import (
    Discriminator,
    Generator,
    GeneratorSpec,
    Latent,
    blend_attribute,
    decode,
    encode,
    load_deit_weights,
)
from .training import (
    LOG_COLUMNS,
    NeutralizerCheckpoint,
    NeutralizerHyper,
    epoch_means,
    train_neutralizer,
    write_loss_log,
)

__all__ = [
    "Discriminator",
    "Generator",
    "GeneratorSpec",
    "Latent",
    "LOG_COLUMNS",
    "LossWeights",
    "NeutralizerCheckpoint",
    "NeutralizerHyper",
    "blend_attribute",
    "decode",
    "discriminator_loss",
    "discriminator_total",
    "encode",
    "epoch_means",
    "generator_loss",
    "generator_total",
    "gradient_penalty",
    "load_deit_weights",
    "train_neutralizer",
    "write_loss_log",
]
