import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from neutralyze.dataio import make_synthetic_dataset
from neutralyze.errors import EmptyDataset, InvalidAlpha, InvalidSize, NumericalError, ShapeError
from neutralyze.neutralizer import (
    Discriminator,
    Generator,
    GeneratorSpec,
    LossWeights,
    NeutralizerCheckpoint,
    NeutralizerHyper,
    blend_attribute,
    discriminator_loss,
    epoch_means,
    generator_loss,
    generator_total,
    gradient_penalty,
    train_neutralizer,
)

TINY_VIT = dict(embed_dim=48, depth=2, heads=2, decoder_channels=(32, 16, 8), disc_channels=8, disc_fc=32)


def tiny_spec(size=64):
    return GeneratorSpec.vit(size, **TINY_VIT)


# attribute blending


def test_blend_identities():
    assert blend_attribute(1, 0.0) == 1
    assert blend_attribute(1, 1.0) == 0
    assert blend_attribute(0, 0.5) == 0.5 and blend_attribute(1, 0.5) == 0.5
    with pytest.raises(InvalidAlpha):
        blend_attribute(1, 1.5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_blend_is_affine_in_alpha(a, alpha):
    out = blend_attribute(a, alpha)
    assert 0.0 <= out <= 1.0
    assert out == pytest.approx(a + alpha * (1 - 2 * a), abs=1e-12)


# geometry


def test_vit_latent_geometry_paper_size():
    gen = Generator(GeneratorSpec.vit(256, depth=1))
    with torch.no_grad():
        lat = gen.encode(torch.zeros(1, 1, 256, 256))
    assert tuple(lat.grid.shape) == (1, 384, 16, 16)
    with torch.no_grad():
        out = gen.decode(lat, torch.tensor([0.5]))
    assert tuple(out.shape) == (1, 1, 256, 256)


def test_vit_latent_geometry_desk_size():
    gen = Generator(GeneratorSpec.vit(64, depth=1))
    with torch.no_grad():
        lat = gen.encode(torch.zeros(1, 1, 64, 64))
    assert tuple(lat.grid.shape) == (1, 384, 4, 4)


def test_rejects_sizes_not_divisible_by_16():
    with pytest.raises(InvalidSize):
        GeneratorSpec.vit(250)
    gen = Generator(tiny_spec(64))
    with pytest.raises(InvalidSize):
        gen.encode(torch.zeros(1, 1, 60, 60))
    with pytest.raises(ShapeError):
        gen.decode(torch.zeros(1, 48, 3, 3), 0.5)


def test_unet_round_trip_shape_and_skips():
    spec = GeneratorSpec.unet(64, depth=4, unet_channels=(8, 16, 32, 64), disc_channels=8, disc_fc=16)
    gen = Generator(spec)
    with torch.no_grad():
        lat = gen.encode(torch.zeros(2, 1, 64, 64))
        out = gen.decode(lat, torch.tensor([0.0, 1.0]))
    assert tuple(lat.grid.shape) == (2, 64, 4, 4)
    assert tuple(out.shape) == (2, 1, 64, 64)
    assert out.abs().max() <= 1.0


def test_discriminator_heads():
    spec = tiny_spec(64)
    adv, cls = Discriminator(spec)(torch.zeros(3, 1, 64, 64))
    assert tuple(adv.shape) == (3,) and tuple(cls.shape) == (3, 1)


# losses


def test_generator_total_arithmetic():
    w = LossWeights(lambda_rec=100, lambda_cls_G=10, lambda_adv=1)
    assert generator_total(0.5, 0.2, 0.1, w) == pytest.approx(52.1, abs=1e-12)


def test_generator_loss_components():
    x = torch.rand(4, 1, 8, 8, dtype=torch.float64)
    d_adv = torch.tensor([0.3, -0.1, 0.2, 0.4], dtype=torch.float64)
    d_cls = torch.tensor([[0.5], [-1.0], [2.0], [0.0]], dtype=torch.float64)
    t = torch.tensor([1.0, 0.0, 0.5, 1.0], dtype=torch.float64)
    w = LossWeights()
    total, parts = generator_loss(x, x.clone(), d_adv, d_cls, t, w)
    assert parts["rec"] == 0
    bce = -(t * torch.log(torch.sigmoid(d_cls[:, 0])) + (1 - t) * torch.log(1 - torch.sigmoid(d_cls[:, 0]))).mean()
    assert float(parts["cls"]) == pytest.approx(float(bce), abs=1e-12)
    expected = w.lambda_rec * 0 + w.lambda_cls_G * float(bce) - w.lambda_adv * float(d_adv.mean())
    assert float(total) == pytest.approx(expected, abs=1e-9)
    with pytest.raises(NumericalError):
        generator_loss(x, x * float("nan"), d_adv, d_cls, t, w)


def test_discriminator_loss_formula():
    w = LossWeights()
    d_real = torch.tensor([1.0, 2.0], dtype=torch.float64)
    d_fake = torch.tensor([0.5, 0.5], dtype=torch.float64)
    d_cls = torch.tensor([[0.2], [-0.3]], dtype=torch.float64)
    attr = torch.tensor([1.0, 0.0], dtype=torch.float64)
    gp = torch.tensor(0.25, dtype=torch.float64)
    total, parts = discriminator_loss(d_real, d_fake, d_cls, attr, gp, w)
    assert float(parts["adv"]) == pytest.approx(0.5 - 1.5, abs=1e-12)
    expected = w.lambda_cls_D * float(parts["cls"]) + float(parts["adv"]) + w.lambda_gp * 0.25
    assert float(total) == pytest.approx(expected, abs=1e-9)
    same = torch.full((3,), 0.7, dtype=torch.float64)
    _, parts = discriminator_loss(same, same, d_cls[:1].repeat(3, 1), torch.ones(3), gp, w)
    assert float(parts["adv"]) == 0


def test_gradient_penalty_closed_forms():
    x = torch.rand(3, 1, 4, 4, dtype=torch.float64)
    y = torch.rand(3, 1, 4, 4, dtype=torch.float64)
    n = 16
    sum_critic = gradient_penalty(lambda z: z.flatten(1).sum(1), x, y, seed=0)
    assert float(sum_critic) == pytest.approx((math.sqrt(n) - 1) ** 2, abs=1e-12)
    unit = torch.zeros(n, dtype=torch.float64)
    unit[3] = 1.0
    assert float(gradient_penalty(lambda z: z.flatten(1) @ unit, x, y, seed=0)) == pytest.approx(0.0, abs=1e-12)
    const = gradient_penalty(lambda z: torch.zeros(z.shape[0], dtype=z.dtype), x, y, seed=0)
    assert float(const) == pytest.approx(1.0)


def _central_fd(fn, theta, eps=1e-6):
    grad = torch.zeros_like(theta)
    for i in range(theta.numel()):
        e = torch.zeros_like(theta)
        e[i] = eps
        grad[i] = (fn(theta + e) - fn(theta - e)) / (2 * eps)
    return grad


def _rel_err(a, b):
    return float((a - b).norm() / max(float(b.norm()), 1e-12))


def test_generator_loss_gradient_matches_finite_differences():
    torch.manual_seed(0)
    x = torch.rand(3, 1, 2, 2, dtype=torch.float64) * 2 - 1
    target = torch.tensor([1.0, 0.0, 0.5], dtype=torch.float64)
    w = LossWeights()

    def loss(theta):
        # 10 parameters: gen scale/shift (2), critic weights/bias (4 + 1), cls weights/bias (2 + 1)
        x_rec = torch.tanh(theta[0] * x + theta[1])
        flat = x_rec.flatten(1)
        d_adv = flat @ theta[2:6] + theta[6]
        d_cls = (theta[7] * flat.mean(1) + theta[8] * flat.std(1) + theta[9])[:, None]
        return generator_loss(x, x_rec, d_adv, d_cls, target, w)[0]

    theta = torch.randn(10, dtype=torch.float64, requires_grad=True)
    (analytic,) = torch.autograd.grad(loss(theta), theta)
    numeric = _central_fd(lambda t: loss(t).detach(), theta.detach())
    assert _rel_err(analytic, numeric) < 1e-4


def test_discriminator_loss_gradient_matches_finite_differences():
    torch.manual_seed(1)
    real = torch.rand(4, 1, 2, 2, dtype=torch.float64) * 2 - 1
    fake = torch.rand(4, 1, 2, 2, dtype=torch.float64) * 2 - 1
    attr = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
    w = LossWeights()

    def loss(theta):
        # nonlinear critic so the penalty depends on the parameters: 4 + 1 + 1 adv, 3 + 1 cls
        def critic(z):
            f = z.flatten(1)
            return torch.tanh(f @ theta[0:4] + theta[4]) * theta[5]

        def cls(z):
            f = z.flatten(1)
            return (theta[6] * f.mean(1) + theta[7] * f[:, 0] + theta[8] * f[:, 3] + theta[9])[:, None]

        gp = gradient_penalty(critic, real, fake, seed=0)
        return discriminator_loss(critic(real), critic(fake), cls(real), attr, gp, w)[0]

    theta = torch.randn(10, dtype=torch.float64, requires_grad=True)
    (analytic,) = torch.autograd.grad(loss(theta), theta)
    numeric = _central_fd(lambda t: loss(t).detach(), theta.detach())
    assert _rel_err(analytic, numeric) < 1e-4


def test_loss_weight_presets():
    assert LossWeights.vit_paper().lambda_adv == 10.0
    assert LossWeights.cnn_paper().lambda_adv == 1.0
    with pytest.raises(ValueError):
        LossWeights(lambda_rec=-1)


# training


@pytest.fixture(scope="module")
def synth256():
    return make_synthetic_dataset(256, 64, seed=0)


def _hyper(epochs, **kw):
    return NeutralizerHyper(lr=1e-3, batch_size=32, epochs=epochs, seed=0, warmup_epochs=0, **kw)


@pytest.mark.slow
def test_training_reduces_reconstruction_loss(synth256):
    ck = train_neutralizer(synth256, tiny_spec(), LossWeights(lambda_adv=1.0), _hyper(5))
    means = epoch_means(ck.loss_log)
    assert len(means) == 5 and ck.epoch == 5
    assert means[-1] < means[0]


def test_training_is_deterministic(synth256):
    a = train_neutralizer(synth256[:64], tiny_spec(), None, _hyper(2))
    b = train_neutralizer(synth256[:64], tiny_spec(), None, _hyper(2))
    for ra, rb in zip(a.loss_log, b.loss_log):
        for key in ("L_rec", "L_adv_D", "gp"):
            assert ra[key] == pytest.approx(rb[key], abs=1e-6)


def test_zero_epochs_returns_initialization(synth256):
    ck = train_neutralizer(synth256[:16], tiny_spec(), None, _hyper(0))
    torch.manual_seed(0)
    fresh = Generator(tiny_spec())
    for (k, v), (_, u) in zip(ck.generator.state_dict().items(), fresh.state_dict().items()):
        assert torch.equal(v, u), k
    assert ck.loss_log == [] and ck.epoch == 0


def test_training_errors(synth256):
    with pytest.raises(EmptyDataset):
        train_neutralizer([], tiny_spec(), None, _hyper(1))
    with pytest.raises(ShapeError):
        train_neutralizer(synth256[:4], tiny_spec(128), None, _hyper(1))


def test_checkpoint_round_trip(tmp_path, synth256):
    ck = train_neutralizer(synth256[:16], tiny_spec(), None, _hyper(1))
    ck.save(tmp_path / "n.nz")
    back = NeutralizerCheckpoint.load(tmp_path / "n.nz")
    x = torch.from_numpy(np.stack([r.pixels for r in synth256[:4]])[:, None])
    with torch.no_grad():
        assert torch.equal(ck.generator.encode(x).grid, back.generator.encode(x).grid)
    assert back.epoch == 1 and back.hyper == ck.hyper
