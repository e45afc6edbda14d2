import importlib
import json

import numpy as np
import pytest
from sklearn.base import clone

from ghostforge.imaging import Image
from ghostforge.msgan import (
    MAFE,
    ArchitectureMismatch,
    DiscriminatorConfig,
    DynamicFusion,
    Generator,
    GeneratorConfig,
    LossWeights,
    MsGANRestorer,
    PatchDiscriminator,
    PerceptualExtractor,
    TrainConfig,
    TrainingAborted,
    discriminator_loss,
    fit_pairs,
    generator_losses,
    load_generator,
    losses,
    restore,
)
from ghostforge.msgan.losses import expected_total
from ghostforge.msgan.train import build_models
from ghostforge.tensor import NonFiniteError, ShapeError, Tensor, load_checkpoint, no_grad, ops
from ghostforge.tensor.checkpoint import decode_checkpoint, encode_checkpoint


def tensor(rng, *shape, lo=None, hi=None):
    if lo is None:
        return Tensor(rng.normal(size=shape))
    return Tensor(rng.uniform(lo, hi, size=shape))


# -------------------------------------------------------------------- MAFE

@pytest.mark.parametrize("size", [7, 12, 15])
def test_mafe_preserves_size(rng, size):
    unit = MAFE(8).reset_parameters(0)
    x = tensor(rng, 2, 8, size, size)
    assert unit(x).shape == x.shape


def test_mafe_unit_gain_identity(rng):
    unit = MAFE(8).reset_parameters(1)
    unit.excite.weight.data[...] = 0.0
    unit.excite.bias.data[...] = 1e3  # sigmoid saturates to exactly 1
    x = tensor(rng, 1, 8, 9, 9)
    with no_grad():
        r = unit.attention(unit.merge(ops.concat_channels([ops.relu(b(x)) for b in unit.branches])))
        merged = unit.merge(ops.concat_channels([ops.relu(b(x)) for b in unit.branches]))
        out = unit(x)
    assert np.all(r.data == 1.0)
    assert np.array_equal(out.data, merged.data + x.data)


def test_mafe_rejects_bad_reduction():
    with pytest.raises(ValueError):
        GeneratorConfig(base_channels=6, attention_reduction=4)


# ------------------------------------------------------------------ fusion

def fusion_inputs(rng, chans=(8, 6, 5, 4), sizes=(2, 4, 8, 16)):
    return [tensor(rng, 1, c, s, s) for c, s in zip(chans, sizes)]


def test_fusion_uniform_weights(rng):
    unit = DynamicFusion([8, 6, 5, 4], 3).reset_parameters(0)
    for s in unit.score:
        s.weight.data[...] = 0.0
        s.bias.data[...] = 0.0
    levels = fusion_inputs(rng)
    with no_grad():
        aligned = unit.upsampled(levels)
        omega = unit.weights(aligned)
        fused = unit(levels)
    for w in omega:
        np.testing.assert_allclose(w.data, 0.25, rtol=0, atol=1e-16)
    mean = sum(a.data for a in aligned) / 4
    np.testing.assert_allclose(fused.data, mean, rtol=0, atol=1e-14)


@pytest.mark.parametrize("k", range(4))
def test_fusion_saturation_selects_level(rng, k):
    unit = DynamicFusion([8, 6, 5, 4], 3).reset_parameters(2)
    for i, s in enumerate(unit.score):
        s.weight.data[...] = 0.0
        s.bias.data[...] = 1e6 if i == k else 0.0
    levels = fusion_inputs(rng)
    with no_grad():
        aligned = unit.upsampled(levels)
        fused = unit(levels)
    assert np.max(np.abs(fused.data - aligned[k].data)) < 1e-9


def test_fusion_weights_sum_to_one(rng):
    unit = DynamicFusion([8, 6, 5, 4], 3).reset_parameters(5)
    with no_grad():
        omega = unit.weights(unit.upsampled(fusion_inputs(rng)))
    total = sum(w.data for w in omega)
    assert np.max(np.abs(total - 1.0)) < 1e-6
    assert all(np.all(w.data >= 0) for w in omega)


def test_fusion_level_count(rng):
    unit = DynamicFusion([8, 6, 5, 4], 3)
    with pytest.raises(ValueError, match="4 levels"):
        unit.upsampled(fusion_inputs(rng)[:3])


# --------------------------------------------------------------- generator

@pytest.mark.parametrize("size", [32, 64])
def test_generator_shape(rng, size):
    gen = Generator(GeneratorConfig(base_channels=4, depth=4)).reset_parameters(0, "generator")
    x = tensor(rng, 1, 1, size, size, lo=0, hi=1)
    with no_grad():
        out = gen(x)
    assert out.shape == x.shape
    assert np.all((out.data > 0) & (out.data < 1))


def test_generator_zero_head_is_sigmoid(rng):
    gen = Generator(GeneratorConfig(base_channels=4)).reset_parameters(3, "generator")
    gen.head.weight.data[...] = 0.0
    gen.head.bias.data[...] = 0.0
    x = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    with no_grad():
        out = gen(x)
    np.testing.assert_array_equal(out.data, ops.sigmoid(x).data)


def test_generator_rejects_bad_size(rng):
    gen = Generator(GeneratorConfig(base_channels=4))
    with pytest.raises(ShapeError, match="divisible"):
        gen(tensor(rng, 1, 1, 20, 20))
    with pytest.raises(ShapeError):
        gen(tensor(rng, 1, 2, 16, 16))


def test_generator_shallow_fusion(rng):
    gen = Generator(GeneratorConfig(base_channels=4, depth=2)).reset_parameters(0, "generator")
    assert gen.fusion.n_levels == 2
    with no_grad():
        assert gen(tensor(rng, 1, 1, 8, 8, lo=0, hi=1)).shape == (1, 1, 8, 8)


# ----------------------------------------------------------- discriminator

def test_discriminator_output_size(rng):
    disc = PatchDiscriminator(DiscriminatorConfig(width=0.125)).reset_parameters(0)
    with no_grad():
        out = disc(tensor(rng, 1, 1, 64, 64))
    assert out.shape == (1, 1, 7, 7)
    assert DiscriminatorConfig().widths == [16, 32, 64, 1]


def test_discriminator_minimum_input(rng):
    disc = PatchDiscriminator(DiscriminatorConfig(width=0.125)).reset_parameters(0)
    with no_grad():
        assert disc(tensor(rng, 1, 1, 16, 16)).shape == (1, 1, 1, 1)
        with pytest.raises(ShapeError):
            disc(tensor(rng, 1, 1, 8, 8))


def test_discriminator_first_layer_linear(rng):
    disc = PatchDiscriminator().reset_parameters(1)
    layer = disc.layers[0]
    x = tensor(rng, 1, 1, 32, 32)
    with no_grad():
        before = layer(x).data
        layer.weight.data[...] *= 2.0
        after = layer(x).data
    np.testing.assert_array_equal(after, 2.0 * before)


def test_discriminator_locality(rng):
    disc = PatchDiscriminator().reset_parameters(2)
    x = rng.uniform(size=(1, 1, 64, 64))
    y = x.copy()
    y[0, 0, 0, 0] += 1.0
    with no_grad():
        a, b = disc(Tensor(x)).data, disc(Tensor(y)).data
    assert disc.receptive_field() == 46
    assert a[0, 0, 6, 6] == b[0, 0, 6, 6]
    assert a[0, 0, 0, 0] != b[0, 0, 0, 0]


# ------------------------------------------------------------------ losses

def models(seed=0):
    gen, disc, extractor = build_models(GeneratorConfig(base_channels=4), DiscriminatorConfig(width=0.125), seed)
    return gen, disc, extractor


def test_identical_images_have_zero_content_losses(rng):
    _, disc, ext = models()
    gt = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    terms = losses(gt, gt, disc, ext)
    assert terms.mse.data == 0.0 and terms.perc.data == 0.0


def test_constant_half_discriminator(rng):
    _, disc, ext = models()
    for p in disc.parameters():
        p.data[...] = 0.0
    gt = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    gen = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    terms = losses(gt, gen, disc, ext)
    assert float(terms.adv_d.data) == 0.5
    assert float(terms.adv_g.data) == 0.25


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_weighted_total(seed):
    rng = np.random.default_rng(seed)
    _, disc, ext = models(seed)
    gt = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    gen = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    total, l_mse, l_perc, l_adv = generator_losses(gt, gen, disc, ext, LossWeights())
    by_hand = 0.5 * float(l_mse.data) + 0.01 * float(l_perc.data) + 0.01 * float(l_adv.data)
    assert abs(float(total.data) - by_hand) < 1e-12
    assert float(total.data) == expected_total(LossWeights(), float(l_mse.data),
                                               float(l_perc.data), float(l_adv.data))


def test_perceptual_extractor_is_frozen():
    ext = PerceptualExtractor(0)
    assert not any(p.requires_grad for p in ext.parameters())


def test_discriminator_loss_ignores_generator_graph(rng):
    gen, disc, _ = models()
    x = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    y = tensor(rng, 1, 1, 16, 16, lo=0, hi=1)
    discriminator_loss(disc, y, gen(x)).backward()
    assert all(p.grad is None for p in gen.parameters())
    assert all(p.grad is not None for p in disc.parameters())


# ---------------------------------------------------------------- training

def toy_pairs(n=3, size=16, seed=0):
    rng = np.random.default_rng(seed)
    clean = rng.uniform(size=(n, size, size))
    degraded = 0.5 * clean + 0.25
    return [Image(d) for d in degraded], [Image(c) for c in clean]


SMALL_G = GeneratorConfig(base_channels=4)
SMALL_D = DiscriminatorConfig(width=0.125)


def test_zero_iterations_saves_initialization(tmp_path):
    xs, ys = toy_pairs()
    tcfg = TrainConfig(iterations=0, seed=4)
    result = fit_pairs(xs, ys, SMALL_G, SMALL_D, tcfg, out_dir=tmp_path)
    init, _, _ = build_models(SMALL_G, SMALL_D, 4)
    tensors, meta = load_checkpoint(tmp_path / "generator.ckpt")
    assert meta["iteration"] == 0 and result.history == []
    for name, arr in init.state_dict().items():
        assert np.array_equal(tensors[name], arr)


def test_history_deterministic(tmp_path):
    xs, ys = toy_pairs()
    tcfg = TrainConfig(iterations=4, seed=1, checkpoint_every=2)
    fit_pairs(xs, ys, SMALL_G, SMALL_D, tcfg, out_dir=tmp_path / "a")
    fit_pairs(xs, ys, SMALL_G, SMALL_D, tcfg, out_dir=tmp_path / "b")
    for name in ("history.jsonl", "generator.ckpt", "generator_000002.ckpt", "discriminator.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = [json.loads(line) for line in (tmp_path / "a" / "history.jsonl").read_text().splitlines()]
    assert [r["iter"] for r in rows] == [1, 2, 3, 4]
    assert set(rows[0]) == {"iter", "l_total", "l_mse", "l_perc", "l_adv_g", "l_adv_d"}


def test_training_changes_only_after_steps():
    xs, ys = toy_pairs()
    result = fit_pairs(xs, ys, SMALL_G, SMALL_D, TrainConfig(iterations=2, seed=0))
    init, _, _ = build_models(SMALL_G, SMALL_D, 0)
    moved = [not np.array_equal(p.data, init.state_dict()[n]) for n, p in result.generator.named_parameters()]
    assert any(moved)


def test_non_finite_aborts_with_iteration(monkeypatch):
    train_mod = importlib.import_module("ghostforge.msgan.train")

    calls = {"n": 0}
    real = train_mod.generator_losses

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise NonFiniteError("mse")
        return real(*args, **kwargs)

    monkeypatch.setattr(train_mod, "generator_losses", flaky)
    xs, ys = toy_pairs()
    with pytest.raises(TrainingAborted) as info:
        fit_pairs(xs, ys, SMALL_G, SMALL_D, TrainConfig(iterations=3))
    assert info.value.iteration == 2


def test_restore_deterministic(tmp_path):
    xs, ys = toy_pairs()
    fit_pairs(xs, ys, SMALL_G, SMALL_D, TrainConfig(iterations=1), out_dir=tmp_path)
    a = restore(xs[0], tmp_path / "generator.ckpt")
    b = restore(xs[0], tmp_path / "generator.ckpt")
    assert a == b and a.shape == xs[0].shape


def test_load_generator_mismatch(tmp_path):
    xs, ys = toy_pairs()
    fit_pairs(xs, ys, SMALL_G, SMALL_D, TrainConfig(iterations=0), out_dir=tmp_path)
    with pytest.raises(ArchitectureMismatch):
        load_generator(tmp_path / "discriminator.ckpt")
    tensors, meta = load_checkpoint(tmp_path / "generator.ckpt")
    tensors.pop("head.bias")
    with pytest.raises(ArchitectureMismatch, match="head.bias"):
        load_generator((tensors, meta))
    meta["generator"]["base_channels"] = 8
    tensors, _ = load_checkpoint(tmp_path / "generator.ckpt")
    with pytest.raises(ValueError, match="shape"):
        load_generator(decode_checkpoint(encode_checkpoint(tensors, meta)))


def test_fit_pairs_validates():
    xs, ys = toy_pairs()
    with pytest.raises(ValueError):
        fit_pairs(xs, ys[:2])
    with pytest.raises(ValueError, match="batch_size"):
        fit_pairs(xs, ys, tcfg=TrainConfig(batch_size=2))


# --------------------------------------------------------------- estimator

def test_restorer_params():
    est = MsGANRestorer(base_channels=4, iterations=3, seed=2)
    assert clone(est).get_params() == est.get_params()


def test_restorer_fit_predict():
    xs, ys = toy_pairs(n=2)
    X = np.stack([x.data for x in xs])
    y = np.stack([t.data for t in ys])
    est = MsGANRestorer(base_channels=4, iterations=2, disc_width=0.125).fit(X, y)
    pred = est.predict(X)
    assert pred.shape == X.shape and len(est.history_) == 2
    assert np.array_equal(pred, est.predict(X))
    assert -1.0 <= est.score(X, y) <= 1.0
    with pytest.raises(ValueError):
        est.predict(X[:, :8, :8])


def test_published_training_defaults():
    assert LossWeights() == LossWeights(alpha=0.5, beta=0.01, gamma=0.01)
    assert TrainConfig().batch_size == 1
