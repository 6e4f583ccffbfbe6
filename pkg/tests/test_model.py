import math

import pytest
import torch

from conftest import tiny_config
from pathogan.models.domain import LatentCode, Mode, ResidualOutput
from pathogan.models.pathogan import (
    DISCRIMINATOR_ROLES,
    GENERATOR_ROLES,
    ROLES,
    ZERO,
    ChannelMismatch,
    PathoGAN,
    activate_residual,
    blend,
    reparameterize,
)
from pathogan.services.netspec import ShapeMismatch


def test_builds_every_role(model):
    assert set(model.nets.keys()) == set(ROLES)
    generator_ids = {id(p) for p in model.generator_parameters()}
    discriminator_ids = {id(p) for p in model.discriminator_parameters()}
    assert generator_ids and discriminator_ids
    assert not generator_ids & discriminator_ids
    assert len(generator_ids) + len(discriminator_ids) == len(list(model.parameters()))


def test_roles_seeded_independently(config):
    first = PathoGAN.from_config(config, seed=5)
    second = PathoGAN.from_config(config, seed=5)
    for a, b in zip(first.parameters(), second.parameters()):
        assert torch.equal(a, b)
    # both encoders share an architecture but not their initial weights
    gamma = list(first.nets["gamma_enc"].parameters())
    delta = list(first.nets["delta_enc"].parameters())
    assert not torch.equal(gamma[0], delta[0])


def test_decoder_output_size_checked(tmp_path):
    config = tiny_config(tmp_path, arch={"decoder": "l(i*i)e,l(i*i),F2Q,c3-4,u4,C3-r"})
    with pytest.raises(ShapeMismatch):
        PathoGAN.from_config(config)


def test_discriminator_must_score_one_channel(tmp_path):
    config = tiny_config(tmp_path, arch={"discriminator": "S4-4l,C4-2"})
    with pytest.raises(ShapeMismatch):
        PathoGAN.from_config(config)


def test_generator_A_shapes(model, images):
    result = model.generator_A_forward(images, ZERO, Mode.TEST)
    assert result.output.shape == images.shape
    assert result.labelmap.shape == (2, 1, 8, 8)
    assert result.inpaintings.shape == images.shape
    assert result.latent_gamma.mean.shape == (2, 4)
    assert torch.equal(result.latent_delta.sample, torch.zeros((2, 4), dtype=images.dtype))


def test_test_mode_is_deterministic(model, images):
    first = model.generator_A_forward(images, ZERO, Mode.TEST)
    second = model.generator_A_forward(images, ZERO, Mode.TEST)
    assert torch.equal(first.output, second.output)
    third = model.generator_B_forward(images, Mode.TEST)
    fourth = model.generator_B_forward(images, Mode.TEST)
    assert torch.equal(third.labelmap, fourth.labelmap)


def test_train_mode_follows_generator(model, images):
    first = model.generator_A_forward(images, None, Mode.TRAIN, torch.Generator().manual_seed(1))
    second = model.generator_A_forward(images, None, Mode.TRAIN, torch.Generator().manual_seed(1))
    other = model.generator_A_forward(images, None, Mode.TRAIN, torch.Generator().manual_seed(2))
    assert torch.equal(first.output, second.output)
    assert not torch.equal(first.output, other.output)


def test_outputs_stay_in_range(model, images):
    for result in (model.generator_A_forward(images, None, Mode.TRAIN), model.generator_B_forward(images, Mode.TRAIN)):
        assert torch.all((result.labelmap > 0) & (result.labelmap < 1))
        assert torch.all(result.inpaintings.abs() <= 1)
        assert torch.all(result.output.abs() <= 1 + 1e-12)


def test_channel_mismatch(model):
    with pytest.raises(ChannelMismatch):
        model.generator_B_forward(torch.zeros((1, 3, 8, 8), dtype=torch.float64))


def test_cycles_return_both_legs(model, images):
    hat_a, tilde_a = model.cycle_A(images, Mode.TEST)
    hat_b, tilde_b = model.cycle_B(images, Mode.TEST)
    assert hat_a.latent_gamma is not None and tilde_a.latent_gamma is None
    assert tilde_b.latent_delta is not None
    assert tilde_b.output.shape == images.shape
    assert model.discriminate("disc_A", tilde_a.output).shape == (2, 1, 2, 2)


def test_encode_pathology_uses_masked_image(model, images):
    empty = torch.zeros((2, 1, 8, 8), dtype=images.dtype)
    code = model.encode_pathology(images, empty, Mode.TEST)
    blank = model.encode("delta_enc", torch.zeros_like(images), Mode.TEST)
    assert torch.allclose(code.mean, blank.mean)


def test_cycle_B_encodes_the_masked_input(model, images):
    seen = []
    handle = model.nets["delta_enc"].register_forward_hook(lambda module, inputs, output: seen.append(inputs[0]))
    try:
        hat, _ = model.cycle_B(images, Mode.TRAIN, torch.Generator().manual_seed(3))
    finally:
        handle.remove()
    assert len(seen) == 1
    assert torch.equal(seen[0], hat.labelmap * images)


def test_cycle_B_gradients_reach_every_generator(model, images):
    _, tilde = model.cycle_B(images, Mode.TRAIN, torch.Generator().manual_seed(4))
    tilde.output.sum().backward()
    for role in ("gamma_enc", "delta_enc", "decoder", "zb"):
        grads = [p.grad for p in model.nets[role].parameters()]
        assert all(g is not None for g in grads), role
        assert any(float(g.abs().sum()) > 0 for g in grads), role
    for role in DISCRIMINATOR_ROLES:
        assert all(p.grad is None for p in model.nets[role].parameters())


def test_blend_extremes():
    x = torch.full((1, 2, 3, 3), -0.5)
    inpaintings = torch.full((1, 2, 3, 3), 0.25)
    none = ResidualOutput(raw=torch.zeros(1, 3, 3, 3), labelmap=torch.zeros(1, 1, 3, 3), inpaintings=inpaintings)
    full = ResidualOutput(raw=torch.zeros(1, 3, 3, 3), labelmap=torch.ones(1, 1, 3, 3), inpaintings=inpaintings)
    assert torch.equal(blend(x, none), x)
    assert torch.equal(blend(x, full), inpaintings)


def test_blend_rejects_mismatched_shapes():
    residual = ResidualOutput(
        raw=torch.zeros(1, 3, 4, 4), labelmap=torch.zeros(1, 1, 4, 4), inpaintings=torch.zeros(1, 2, 4, 4)
    )
    with pytest.raises(ShapeMismatch):
        blend(torch.zeros(1, 2, 3, 3), residual)


def test_activate_residual_noise_only_in_training():
    raw = torch.zeros((1, 3, 4, 4))
    test = activate_residual(raw, Mode.TEST)
    assert torch.equal(test.labelmap, torch.full((1, 1, 4, 4), 0.5))
    assert torch.equal(test.inpaintings, torch.zeros((1, 2, 4, 4)))
    train = activate_residual(raw, Mode.TRAIN, torch.Generator().manual_seed(0))
    assert not torch.equal(train.labelmap, test.labelmap)


def test_reparameterize():
    mean, logvar = torch.ones(3, 4), torch.zeros(3, 4)
    assert torch.equal(reparameterize(mean, logvar, Mode.TEST), mean)
    with pytest.raises(ShapeMismatch):
        reparameterize(mean, torch.zeros(3, 5), Mode.TRAIN)


def test_reparameterize_moments():
    mean = torch.full((100_000, 1), 0.3, dtype=torch.float64)
    logvar = torch.full_like(mean, math.log(4.0))
    sample = reparameterize(mean, logvar, Mode.TRAIN, torch.Generator().manual_seed(0))
    assert float(sample.mean()) == pytest.approx(0.3, abs=0.03)
    assert float(sample.var()) == pytest.approx(4.0, abs=0.1)


def test_reparameterize_collapses_to_the_mean_at_tiny_variance():
    mean = torch.linspace(-1, 1, 12, dtype=torch.float64).reshape(3, 4)
    sample = reparameterize(mean, torch.full_like(mean, -60.0), Mode.TRAIN, torch.Generator().manual_seed(0))
    assert torch.all(torch.isfinite(sample))
    assert torch.allclose(sample, mean, rtol=0, atol=1e-12)


def test_sample_prior_is_standard(model):
    like = torch.zeros(1, dtype=torch.float64)
    code = model.sample_prior(4000, like, torch.Generator().manual_seed(0))
    assert isinstance(code, LatentCode)
    assert code.sample.shape == (4000, 4)
    assert abs(float(code.sample.mean())) < 0.05
    assert abs(float(code.sample.std()) - 1) < 0.05


def test_role_groups_cover_roles():
    assert set(GENERATOR_ROLES) | set(DISCRIMINATOR_ROLES) == set(ROLES)
