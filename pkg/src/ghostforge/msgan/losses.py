"""Content, perceptual and least-squares adversarial losses."""

from __future__ import annotations

from typing import NamedTuple

from ..tensor import ops
from ..tensor.core import Tensor, no_grad
from .config import LossWeights


class LossTerms(NamedTuple):
    total: Tensor
    mse: Tensor
    perc: Tensor
    adv_g: Tensor
    adv_d: Tensor


def perceptual_loss(gt, gen, extractor, layers=(1, 2, 3)):
    """Sum over taps of the per-element mean squared feature difference."""
    with no_grad():
        target = extractor(gt)
    feats = extractor(gen)
    terms = [ops.mse(feats[i - 1], target[i - 1].detach()) for i in layers]
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return total


def discriminator_loss(disc, gt, gen):
    """mean((s(D(real)) - 1)^2) + mean(s(D(fake))^2), s = sigmoid."""
    real = ops.sigmoid(disc(gt))
    fake = ops.sigmoid(disc(gen.detach()))
    return ops.add(ops.mean_square(ops.sub(real, 1.0)), ops.mean_square(fake))


def adversarial_generator_loss(disc, gen):
    return ops.mean_square(ops.sub(ops.sigmoid(disc(gen)), 1.0))


def weighted_total(weights, l_mse, l_perc, l_adv_g):
    return ops.add(
        ops.add(ops.mul(l_mse, weights.alpha), ops.mul(l_perc, weights.beta)),
        ops.mul(l_adv_g, weights.gamma),
    )


def expected_total(weights, l_mse, l_perc, l_adv_g):
    """Float counterpart of ``weighted_total`` with the same operation order."""
    return (l_mse * weights.alpha + l_perc * weights.beta) + l_adv_g * weights.gamma


def generator_losses(gt, gen, disc, extractor, weights=LossWeights(), layers=(1, 2, 3)):
    if gt.shape != gen.shape:
        raise ValueError(f"ground truth {gt.shape} and generated {gen.shape} differ")
    l_mse = ops.mse(gen, gt)
    l_perc = perceptual_loss(gt, gen, extractor, layers)
    l_adv_g = adversarial_generator_loss(disc, gen)
    return weighted_total(weights, l_mse, l_perc, l_adv_g), l_mse, l_perc, l_adv_g


def losses(gt, gen, disc, extractor, weights=LossWeights(), layers=(1, 2, 3)):
    """All five loss terms for one (ground truth, generated) pair."""
    total, l_mse, l_perc, l_adv_g = generator_losses(gt, gen, disc, extractor, weights, layers)
    return LossTerms(total, l_mse, l_perc, l_adv_g, discriminator_loss(disc, gt, gen))
