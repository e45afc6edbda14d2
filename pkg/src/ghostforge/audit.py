"""Finite-difference audit of every differentiable piece of the model.

Each check returns an :class:`AuditItem`; thresholds depend on the kind of
function: linear maps (and piecewise-linear ones away from kinks) must agree
to 1e-8, smooth elementwise maps to 1e-6 and composite networks to 1e-4.
Linear checks use a wider step since central differences are exact for
polynomials of degree two or less.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .msgan.config import DiscriminatorConfig, GeneratorConfig, LossWeights
from .msgan.losses import discriminator_loss, generator_losses
from .msgan.networks import MAFE, DynamicFusion, Generator, PatchDiscriminator, PerceptualExtractor
from .tensor import Tensor, grad_check, ops, sample_indices

THRESHOLDS = {"linear": 1e-8, "elementwise": 1e-6, "composite": 1e-4}
STEPS = {"linear": 1e-3, "elementwise": 1e-5, "composite": 1e-6}
SCOPES = ("ops", "mafe", "fusion", "generator", "discriminator", "loss")


@dataclass(frozen=True)
class AuditItem:
    scope: str
    name: str
    kind: str
    error: float

    @property
    def threshold(self):
        return THRESHOLDS[self.kind]

    @property
    def passed(self):
        return self.error < self.threshold

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.scope:<13} {self.name:<34} {self.kind:<11} {self.error:10.3e} {self.threshold:8.0e} {status}"


def _rng(seed, tag):
    return np.random.default_rng([seed, sum(map(ord, tag))])


def _projected(fn, shape_out, rng):
    """Scalar test function sum(R * fn(x)) with a fixed random projection R."""
    proj = Tensor(rng.standard_normal(shape_out))
    return lambda x: ops.sum(ops.mul(fn(x), proj))


def _check(scope, name, kind, f, x, indices=None):
    err = grad_check(f, x, step=STEPS[kind], indices=indices)
    return AuditItem(scope, name, kind, err)


def _param_items(scope, module, f, seed, per_param=6, kind="composite"):
    """Check a seeded sample of coordinates of every parameter of ``module``."""
    items = []
    for k, (name, p) in enumerate(module.named_parameters()):
        idx = sample_indices(p.size, per_param, seed + k)
        items.append(_check(scope, f"d/d {name}", kind, lambda _p: f(), p, idx))
    worst = max(items, key=lambda it: it.error)
    return [AuditItem(scope, f"params ({len(items)} tensors)", kind, worst.error)]


# --------------------------------------------------------------------- scopes

def audit_ops(seed=0):
    rng = _rng(seed, "ops")
    items = []

    def tensor(*shape):
        return Tensor(rng.standard_normal(shape))

    def linear(name, fn, x, out_shape):
        items.append(_check("ops", name, "linear", _projected(fn, out_shape, rng), x))

    def smooth(name, fn, x, out_shape):
        items.append(_check("ops", name, "elementwise", _projected(fn, out_shape, rng), x))

    x = tensor(1, 2, 6, 6)
    for dil in (1, 2):
        w, b = tensor(3, 2, 3, 3), tensor(3)
        out = ops.conv2d(x, w, b, dilation=dil, padding=dil).shape
        linear(f"conv2d[d={dil}] d/dx", lambda t: ops.conv2d(t, w, b, dilation=dil, padding=dil), x, out)
        linear(f"conv2d[d={dil}] d/dw", lambda t: ops.conv2d(x, t, b, dilation=dil, padding=dil), w, out)
        linear(f"conv2d[d={dil}] d/db", lambda t: ops.conv2d(x, w, t, dilation=dil, padding=dil), b, out)
    w4 = tensor(2, 2, 4, 4)
    out = ops.conv2d(x, w4, None, stride=2, padding=1).shape
    linear("conv2d[4x4,s=2] d/dx", lambda t: ops.conv2d(t, w4, None, stride=2, padding=1), x, out)
    linear("conv2d[4x4,s=2] d/dw", lambda t: ops.conv2d(x, t, None, stride=2, padding=1), w4, out)

    linear("global_avg_pool", ops.global_avg_pool, tensor(1, 3, 4, 5), (1, 3, 1, 1))
    r = tensor(1, 3, 1, 1)
    xs = tensor(1, 3, 4, 4)
    linear("scale_channels d/dx", lambda t: ops.scale_channels(t, r), xs, xs.shape)
    linear("scale_channels d/dr", lambda t: ops.scale_channels(xs, t), r, xs.shape)
    m = tensor(1, 1, 4, 4)
    linear("scale_spatial d/dx", lambda t: ops.scale_spatial(t, m), xs, xs.shape)
    linear("scale_spatial d/dw", lambda t: ops.scale_spatial(xs, t), m, xs.shape)
    linear("upsample_nearest", lambda t: ops.upsample_nearest(t, 2), tensor(1, 2, 3, 3), (1, 2, 6, 6))
    linear("maxpool2", ops.maxpool2, tensor(1, 2, 4, 6), (1, 2, 2, 3))
    other = tensor(1, 1, 4, 4)
    linear("concat_channels", lambda t: ops.concat_channels([t, other]), tensor(1, 2, 4, 4), (1, 3, 4, 4))
    y = tensor(2, 3)
    linear("add", lambda t: ops.add(t, y), tensor(2, 3), (2, 3))
    linear("sub", lambda t: ops.sub(y, t), tensor(2, 3), (2, 3))
    linear("mul", lambda t: ops.mul(t, y), tensor(2, 3), (2, 3))
    linear("relu", ops.relu, tensor(3, 4), (3, 4))
    linear("leaky_relu", lambda t: ops.leaky_relu(t, 0.2), tensor(3, 4), (3, 4))

    smooth("sigmoid", ops.sigmoid, tensor(3, 4), (3, 4))
    smooth("tanh", ops.tanh, tensor(3, 4), (3, 4))
    a, b2 = tensor(1, 1, 3, 3), tensor(1, 1, 3, 3)
    smooth("softmax_over", lambda t: ops.concat_channels(ops.softmax_over([t, a, b2])), tensor(1, 1, 3, 3), (1, 3, 3, 3))
    tgt = tensor(2, 5)
    smooth("mse", lambda t: ops.mse(t, tgt), tensor(2, 5), ())
    smooth("mean_square", ops.mean_square, tensor(2, 5), ())
    return items


def audit_mafe(seed=0):
    unit = MAFE(4, (1, 2, 3), 4).reset_parameters(seed, namespace="audit-mafe")
    rng = _rng(seed, "mafe")
    x = Tensor(rng.standard_normal((1, 4, 12, 12)))
    f = _projected(unit, x.shape, rng)
    items = [_check("mafe", "MAFE d/dx (1x4x12x12)", "composite", f, x)]
    items += _param_items("mafe", unit, lambda: f(x), seed)
    return items


def audit_fusion(seed=0):
    chans = [8, 6, 5, 4]
    unit = DynamicFusion(chans, 3).reset_parameters(seed, namespace="audit-fusion")
    rng = _rng(seed, "fusion")
    # moderate activations keep the fusion softmax away from saturation
    levels = [Tensor(0.3 * rng.standard_normal((1, c, s, s))) for c, s in zip(chans, (2, 4, 8, 16))]
    proj = Tensor(rng.standard_normal((1, 3, 16, 16)))

    def f_level(i):
        def f(t):
            lv = list(levels)
            lv[i] = t
            return ops.sum(ops.mul(unit(lv), proj))
        return f

    items = [_check("fusion", f"fusion d/dlevel{i + 1}", "composite", f_level(i), levels[i]) for i in range(4)]
    items += _param_items("fusion", unit, lambda: f_level(0)(levels[0]), seed)
    return items


def tiny_generator(seed=0):
    return Generator(GeneratorConfig(base_channels=4, depth=4)).reset_parameters(seed, namespace="generator")


def audit_generator(seed=0):
    gen = tiny_generator(seed)
    rng = _rng(seed, "generator")
    x = Tensor(rng.uniform(0.0, 1.0, (1, 1, 16, 16)))
    target = Tensor(rng.uniform(0.0, 1.0, (1, 1, 16, 16)))
    f = lambda t: ops.mse(gen(t), target)
    items = [_check("generator", "mse(G(x), t) d/dx (S=16)", "composite", f, x)]
    items += _param_items("generator", gen, lambda: f(x), seed, per_param=3)
    return items


def audit_discriminator(seed=0):
    disc = PatchDiscriminator(DiscriminatorConfig(width=0.125)).reset_parameters(seed, namespace="discriminator")
    rng = _rng(seed, "discriminator")
    x = Tensor(rng.uniform(0.0, 1.0, (1, 1, 16, 16)))
    out = disc(x).shape
    f = _projected(disc, out, rng)
    items = [_check("discriminator", "D(x) d/dx (S=16)", "composite", f, x)]
    items += _param_items("discriminator", disc, lambda: f(x), seed)
    return items


def audit_loss(seed=0):
    rng = _rng(seed, "loss")
    gen = tiny_generator(seed)
    disc = PatchDiscriminator(DiscriminatorConfig(width=0.125)).reset_parameters(seed, namespace="discriminator")
    extractor = PerceptualExtractor(seed)
    weights = LossWeights()
    x = Tensor(rng.uniform(0.0, 1.0, (1, 1, 16, 16)))
    gt = Tensor(rng.uniform(0.0, 1.0, (1, 1, 16, 16)))
    fake = Tensor(rng.uniform(0.05, 0.95, (1, 1, 16, 16)))

    def term(i):
        return lambda t: generator_losses(gt, t, disc, extractor, weights)[i]

    items = [
        _check("loss", "L_mse d/dI_gen", "composite", term(1), fake),
        _check("loss", "L_perc d/dI_gen", "composite", term(2), fake),
        _check("loss", "L_adv_g d/dI_gen", "composite", term(3), fake),
        _check("loss", "L_total d/dI_gen", "composite", term(0), fake),
        _check("loss", "L_adv_d d/dI_gt", "composite", lambda t: discriminator_loss(disc, t, fake), gt),
    ]
    total = lambda: generator_losses(gt, gen(x), disc, extractor, weights)[0]
    items += [AuditItem("loss", "L_total d/dG " + it.name, it.kind, it.error)
              for it in _param_items("loss", gen, total, seed, per_param=2)]
    items += [AuditItem("loss", "L_adv_d d/dD " + it.name, it.kind, it.error)
              for it in _param_items("loss", disc, lambda: discriminator_loss(disc, gt, fake), seed)]
    return items


AUDITS = {
    "ops": audit_ops,
    "mafe": audit_mafe,
    "fusion": audit_fusion,
    "generator": audit_generator,
    "discriminator": audit_discriminator,
    "loss": audit_loss,
}


def run_audit(scope="all", seed=0):
    scopes = SCOPES if scope == "all" else (scope,)
    items = []
    for s in scopes:
        items.extend(AUDITS[s](seed))
    return items
