import numpy as np
import pytest
import torch

from railscan.model import (
    FEATURE_SHAPES,
    LATENT_DIM,
    NetworkSpec,
    ShapeError,
    build_networks,
    decode,
    decoder_layer_table,
    discriminate,
    encode,
    layer_output_shapes,
    network_parameters,
    reconstruct,
    to_dtype,
    validate_feature_stack,
)
from forward_reference import (
    decoder_forward,
    discriminator_forward,
    encoder_forward,
    numpy_params,
)

ENCODER_SHAPES = [(32, 62, 62), (64, 29, 29), (128, 14, 14), (256, 5, 5), (512, 1, 1)]
DECODER_SHAPES = [(256, 5, 5), (128, 14, 14), (64, 29, 29), (32, 62, 62), (3, 128, 128)]
DISCRIMINATOR_SHAPES = ENCODER_SHAPES[:4] + [(1, 1, 1)]


def all_tensors(net: NetworkSpec):
    for i, layer in enumerate(net.params):
        for key, t in layer.items():
            yield f"{net.name}.{i}.{key}", t


def test_build_networks_deterministic():
    nets_a = build_networks(0)
    nets_b = build_networks(0)
    for a, b in zip(nets_a, nets_b):
        for (name, ta), (_, tb) in zip(all_tensors(a), all_tensors(b)):
            assert torch.equal(ta, tb), name


def test_build_networks_seed_changes_weights():
    enc_a, _, _ = build_networks(0)
    enc_b, _, _ = build_networks(1)
    assert not torch.equal(enc_a.params[0]["weight"], enc_b.params[0]["weight"])


def test_discriminator_seed_only_reinitializes_discriminator():
    enc_a, dec_a, disc_a = build_networks(0, discriminator_seed=100)
    enc_b, dec_b, disc_b = build_networks(0, discriminator_seed=200)
    assert torch.equal(enc_a.params[0]["weight"], enc_b.params[0]["weight"])
    assert torch.equal(dec_a.params[0]["weight"], dec_b.params[0]["weight"])
    assert not torch.equal(disc_a.params[0]["weight"], disc_b.params[0]["weight"])


def test_probe_shapes_match_architecture_table(networks):
    encoder, decoder, discriminator = networks
    x = torch.zeros(1, 3, 128, 128)
    z = torch.zeros(1, LATENT_DIM, 1, 1)
    assert layer_output_shapes(encoder, x) == [(1,) + s for s in ENCODER_SHAPES]
    assert layer_output_shapes(decoder, z) == [(1,) + s for s in DECODER_SHAPES]
    assert layer_output_shapes(discriminator, x) == [(1,) + s for s in DISCRIMINATOR_SHAPES]


def test_transposed_stages_need_output_padding_one():
    sizes = [1, 5, 14, 29, 62]
    expected = [5, 14, 29, 62, 128]
    for spec, size_in, size_out in zip(decoder_layer_table(), sizes, expected):
        grown = (size_in - 1) * spec.stride - 2 * spec.padding + spec.kernel + spec.output_padding
        assert grown == size_out
        if spec.stride == 2:
            assert spec.output_padding == 1
            without = (size_in - 1) * spec.stride - 2 * spec.padding + spec.kernel
            assert without != size_out


def test_encode_outputs(networks):
    encoder, _, _ = networks
    x = torch.zeros(1, 3, 128, 128)
    z, features = encode(encoder, x, "eval")
    assert z.shape == (1, LATENT_DIM)
    validate_feature_stack(features)
    assert torch.isfinite(z).all()
    assert all(torch.isfinite(f).all() for f in features)


def test_feature_stack_shapes_constant():
    assert FEATURE_SHAPES == ((32, 62, 62), (64, 29, 29), (128, 14, 14), (256, 5, 5))


def test_encode_shape_error_names_expectation(networks):
    encoder, _, _ = networks
    with pytest.raises(ShapeError, match=r"128.*\(2, 3, 64, 64\)"):
        encode(encoder, torch.zeros(2, 3, 64, 64))


def test_decode_range_and_shape(networks, image_batch):
    _, decoder, _ = networks
    g = torch.Generator().manual_seed(7)
    z = torch.empty(3, LATENT_DIM).normal_(0, 3, generator=g)
    out = decode(decoder, z, "eval").detach()
    assert out.shape == (3, 3, 128, 128)
    assert float(out.abs().max()) <= 1.0


def test_decode_shape_error(networks):
    _, decoder, _ = networks
    with pytest.raises(ShapeError, match=r"512"):
        decode(decoder, torch.zeros(2, 100))


def test_discriminate_probabilities(networks, image_batch):
    _, _, discriminator = networks
    probs = discriminate(discriminator, image_batch, "eval")
    assert probs.shape == (4,)
    assert ((probs > 0) & (probs < 1)).all()


def test_discriminate_eval_repeatable_train_noisy(networks, image_batch):
    _, _, discriminator = networks
    a = discriminate(discriminator, image_batch, "eval")
    b = discriminate(discriminator, image_batch, "eval")
    assert torch.equal(a, b)
    torch.manual_seed(0)
    c = discriminate(discriminator, image_batch, "train")
    d = discriminate(discriminator, image_batch, "train")
    assert not torch.equal(c, d)  # dropout draws advance the RNG


def test_reconstruct_is_encode_then_decode(networks, image_batch):
    encoder, decoder, _ = networks
    x_hat, z, features = reconstruct(encoder, decoder, image_batch, "eval")
    z2, features2 = encode(encoder, image_batch, "eval")
    assert torch.equal(z, z2)
    assert torch.equal(x_hat, decode(decoder, z2, "eval"))
    assert all(torch.equal(a, b) for a, b in zip(features, features2))


def _randomized_double_networks(seed=5):
    """Double-precision copies with jittered affine/running stats so the
    eval and instance paths are distinguishable."""
    nets = build_networks(seed)
    g = torch.Generator().manual_seed(seed + 1)
    out = []
    for net in nets:
        net = to_dtype(net, torch.float64)
        with torch.no_grad():
            for layer in net.params:
                for key, t in layer.items():
                    noise = torch.empty_like(t).uniform_(-0.05, 0.05, generator=g)
                    t.add_(noise)
                if "running_var" in layer:
                    layer["running_var"].abs_().add_(0.1)
        out.append(net)
    return out


def _rel_err(actual: torch.Tensor, expected: np.ndarray) -> float:
    expected = torch.from_numpy(np.asarray(expected))
    denom = max(float(expected.abs().max()), 1e-12)
    return float((actual.detach() - expected).abs().max()) / denom


def test_encoder_matches_straight_line_oracle():
    encoder, _, _ = _randomized_double_networks()
    g = torch.Generator().manual_seed(9)
    x = torch.empty(2, 3, 128, 128, dtype=torch.float64).uniform_(-1, 1, generator=g)
    p = numpy_params(encoder)

    z, features = encode(encoder, x, "eval")
    z_ref, f_ref = encoder_forward(p, x.numpy(), "eval")
    assert _rel_err(z, z_ref) < 1e-5
    assert _rel_err(features[-1], f_ref) < 1e-5

    z1, _ = encode(encoder, x[:1], "eval")  # batch of 1: instance statistics
    z1_ref, _ = encoder_forward(p, x[:1].numpy(), "instance")
    assert _rel_err(z1, z1_ref) < 1e-5


def test_decoder_matches_straight_line_oracle():
    _, decoder, _ = _randomized_double_networks()
    g = torch.Generator().manual_seed(10)
    z = torch.empty(2, LATENT_DIM, dtype=torch.float64).normal_(0, 1, generator=g)
    out = decode(decoder, z, "eval")
    ref = decoder_forward(numpy_params(decoder), z.numpy(), "eval")
    assert _rel_err(out, ref) < 1e-5


def test_discriminator_matches_straight_line_oracle():
    _, _, discriminator = _randomized_double_networks()
    g = torch.Generator().manual_seed(11)
    x = torch.empty(2, 3, 128, 128, dtype=torch.float64).uniform_(-1, 1, generator=g)
    probs = discriminate(discriminator, x, "eval")
    ref = discriminator_forward(numpy_params(discriminator), x.numpy(), "eval")
    assert _rel_err(probs, ref) < 1e-5


def test_eval_mode_never_mutates_parameters(image_batch):
    encoder, decoder, discriminator = build_networks(2)
    snapshot = {
        name: t.detach().clone()
        for net in (encoder, decoder, discriminator)
        for name, t in all_tensors(net)
    }
    x_hat, z, _ = reconstruct(encoder, decoder, image_batch, "eval")
    discriminate(discriminator, x_hat, "eval")
    encode(encoder, image_batch[:1], "eval")
    for net in (encoder, decoder, discriminator):
        for name, t in all_tensors(net):
            assert torch.equal(t, snapshot[name]), name


def test_train_mode_updates_running_statistics(image_batch):
    encoder, _, _ = build_networks(2)
    before = encoder.params[0]["running_mean"].clone()
    encode(encoder, image_batch, "train")
    assert not torch.equal(encoder.params[0]["running_mean"], before)


def test_instance_mode_matches_batch_of_one(networks, image_batch):
    encoder, _, _ = networks
    z_batched, _ = encode(encoder, image_batch, "instance")
    for i in range(image_batch.shape[0]):
        z_single, _ = encode(encoder, image_batch[i : i + 1], "eval")
        assert torch.allclose(z_single[0], z_batched[i], atol=1e-5, rtol=1e-4)


def test_invalid_mode_rejected(networks, image_batch):
    encoder, _, _ = networks
    with pytest.raises(ValueError, match="mode"):
        encode(encoder, image_batch, "predict")


def test_xavier_weights_within_bound():
    encoder, _, _ = build_networks(0)
    w = encoder.params[0]["weight"]
    bound = np.sqrt(6.0 / ((3 + 32) * 25))
    assert float(w.abs().max()) <= bound
    assert float(w.abs().max()) > 0.5 * bound  # actually spread over the range
    assert torch.equal(encoder.params[0]["bias"], torch.zeros(32))


def test_trainable_parameter_listing(networks):
    encoder, _, _ = networks
    trainable = network_parameters(encoder)
    everything = network_parameters(encoder, trainable_only=False)
    assert len(everything) - len(trainable) == 8  # four BN layers' running stats
    assert all(t.requires_grad for t in trainable)
